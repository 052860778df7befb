use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::Result;
use groklab::energyscape::{
    ascend_and_classify, memorization_profile, modulation_kernel, pair_preactivations, AscentConfig, Classifier,
    Objective, Task,
};
use groklab::netdyn::fmt_sig;
use groklab::rng;
use groklab::taskgen::{full_task, single_target_task};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{AscendMode, ExperimentConfig, Scope};
use crate::output::{create_run_dir, write_json};
use crate::suites::random_unit;
use crate::train::write_manifest;

pub const MAXIMA_HEADER: &str =
    "seed,converged,energy,theory_energy,label_k,c_max,sign,struct_residual,balance,flat_lambda_min,steps,overlap";

/// One ascent. `overlap` is filled only in single-target mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximumRow {
    pub seed: usize,
    pub converged: bool,
    pub energy: f64,
    pub theory_energy: f64,
    pub label_k: usize,
    pub c_max: f64,
    pub sign: i8,
    pub struct_residual: f64,
    pub balance: f64,
    pub flat_lambda_min: f64,
    pub steps: usize,
    pub overlap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AscendSummary {
    pub group: String,
    pub mode: AscendMode,
    pub seeds: usize,
    pub converged: usize,
    /// Label counts over converged rows.
    pub histogram: BTreeMap<usize, usize>,
    pub energy_min: f64,
    pub energy_max: f64,
}

pub fn to_csv(rows: &[MaximumRow]) -> String {
    let mut s = String::from(MAXIMA_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.converged as u8,
            fmt_sig(r.energy),
            fmt_sig(r.theory_energy),
            r.label_k,
            fmt_sig(r.c_max),
            r.sign,
            fmt_sig(r.struct_residual),
            fmt_sig(r.balance),
            fmt_sig(r.flat_lambda_min),
            r.steps,
            r.overlap.map(fmt_sig).unwrap_or_default()
        )
        .expect("writing to a String");
    }
    s
}

pub struct AscendOutcome {
    pub dir: PathBuf,
    pub rows: Vec<MaximumRow>,
    pub summary: AscendSummary,
}

pub fn cmd_ascend(cfg: ExperimentConfig) -> Result<AscendOutcome> {
    let cfg = cfg.validated(Scope::Ascend)?;
    let a = &cfg.ascend;
    let group = cfg.group.build()?;
    let m = group.order();
    let catalog = cfg.group.catalog(&group)?;
    let cls = Classifier::with_catalog(&group, catalog.clone())?;
    let acfg = AscentConfig { lr: a.lr, max_steps: a.max_steps, tol: a.tol };

    let (task, obj, focused) = match a.mode {
        AscendMode::Energy => (Task::full(&full_task(&group), a.act), Objective::Energy, None),
        AscendMode::Modulated => {
            let kernel = modulation_kernel(&catalog, &group, &a.suppressed)?;
            (Task::full(&full_task(&group), a.act), Objective::Modulated(kernel), None)
        }
        AscendMode::SingleTarget => {
            let wp = single_target_task(&group, a.target, &a.target_weights)?;
            let profile = memorization_profile(&a.target_weights, &a.act)?.s;
            (Task::weighted(&wp, a.act), Objective::Energy, Some((wp, profile)))
        }
    };

    let mut rows = Vec::with_capacity(a.seeds);
    for i in 0..a.seeds {
        let w0 = random_unit(&mut rng::stream(a.seed, i as u64), 2 * m);
        let res = ascend_and_classify(&w0, &task, &obj, &acfg, Some(&cls), a.flatness)?;
        let c = res.class.expect("classifier supplied");
        let overlap = focused.as_ref().map(|(wp, want)| {
            let s = pair_preactivations(&res.w, wp);
            let dot: f64 = s.iter().zip(want).map(|(x, y)| x * y).sum();
            let ns = s.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nw = want.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot.abs() / (ns * nw)
        });
        rows.push(MaximumRow {
            seed: i,
            converged: res.converged,
            energy: res.energy,
            theory_energy: c.theory_energy,
            label_k: c.label,
            c_max: c.c_max,
            sign: c.sign,
            struct_residual: c.struct_residual,
            balance: c.balance,
            flat_lambda_min: res.flat.map_or(f64::NAN, |f| f.0),
            steps: res.steps,
            overlap,
        });
    }

    let conv: Vec<&MaximumRow> = rows.iter().filter(|r| r.converged).collect();
    let mut histogram = BTreeMap::new();
    for r in &conv {
        *histogram.entry(r.label_k).or_insert(0) += 1;
    }
    let summary = AscendSummary {
        group: group.name().to_string(),
        mode: a.mode,
        seeds: a.seeds,
        converged: conv.len(),
        histogram,
        energy_min: conv.iter().map(|r| r.energy).fold(f64::INFINITY, f64::min),
        energy_max: conv.iter().map(|r| r.energy).fold(f64::NEG_INFINITY, f64::max),
    };

    let dir = create_run_dir(&cfg.out, &cfg.tag)?;
    fs::write(dir.join("maxima.csv"), to_csv(&rows))?;
    write_json(&dir.join("summary.json"), &summary)?;
    write_manifest(&dir, "ascend", &cfg, json!({"group": group.name(), "order": m, "ascent": acfg}))?;
    Ok(AscendOutcome { dir, rows, summary })
}
