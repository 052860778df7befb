use std::fs;
use std::io::BufReader;
use std::path::Path;

use anyhow::{Context, Result};
use groklab::groupkit::{load_cayley, Group};
use serde::Serialize;

use crate::config::GroupSpec;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupReport {
    pub name: String,
    pub order: usize,
    pub abelian: bool,
    pub identity: usize,
    /// Number of irreps, when a catalog is known.
    pub irreps: Option<usize>,
    pub catalog_error: Option<f64>,
}

impl GroupReport {
    pub fn new(g: &Group) -> Self {
        let cat = g.catalog();
        GroupReport {
            name: g.name().to_string(),
            order: g.order(),
            abelian: g.is_abelian(),
            identity: g.identity(),
            irreps: cat.as_ref().map(|c| c.len()),
            catalog_error: cat.as_ref().map(|c| c.invariant_error(g)),
        }
    }

    pub fn text(&self) -> String {
        let mut s = format!(
            "group {}: order {}, identity {}, {}",
            self.name,
            self.order,
            self.identity,
            if self.abelian { "abelian" } else { "non-abelian" }
        );
        if let (Some(n), Some(e)) = (self.irreps, self.catalog_error) {
            s.push_str(&format!("\ncatalog: {n} irreps, invariant error {e:.2e}"));
        }
        s
    }
}

/// Build from a recipe or load a table file; the table is validated either way.
pub fn cmd_group(recipe: Option<&str>, file: Option<&Path>) -> Result<(Group, GroupReport)> {
    let g = match (recipe, file) {
        (_, Some(path)) => {
            let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            load_cayley(BufReader::new(f)).with_context(|| format!("loading {}", path.display()))?
        }
        (Some(r), None) => r.parse::<GroupSpec>()?.build()?,
        (None, None) => anyhow::bail!("give a recipe or --file"),
    };
    let rep = GroupReport::new(&g);
    Ok((g, rep))
}
