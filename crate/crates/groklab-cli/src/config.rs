use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use groklab::groupkit::{load_cayley, Group, IrrepCatalog};
use groklab::netdyn::{Activation, DecayMode, LossScale, Optimizer, TrainConfig};
use groklab::taskgen::SplitMode;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Grid used by `scan --full-grid`.
pub const FULL_GRID_MS: [usize; 9] = [11, 17, 23, 31, 41, 53, 71, 97, 127];
pub const FULL_GRID_SEEDS: u64 = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroupSpec {
    Cyclic { m: usize },
    Product { orders: Vec<usize> },
    Dihedral { n: usize },
    /// Cayley table file, optionally with an irrep catalog sidecar (JSON).
    Cayley { path: PathBuf, catalog: Option<PathBuf> },
}

impl FromStr for GroupSpec {
    type Err = anyhow::Error;

    /// `cyclic 7`, `product 2,3,5`, `dihedral 4` or `cayley <path>`.
    fn from_str(s: &str) -> Result<Self> {
        let mut it = s.split_whitespace();
        let kind = it.next().ok_or_else(|| anyhow!("empty group recipe"))?;
        let arg = it.next().ok_or_else(|| anyhow!("group recipe {s:?} needs an argument"))?;
        if it.next().is_some() {
            bail!("group recipe {s:?} has trailing words");
        }
        let num = |t: &str| t.parse::<usize>().with_context(|| format!("bad number {t:?} in {s:?}"));
        Ok(match kind {
            "cyclic" => GroupSpec::Cyclic { m: num(arg)? },
            "dihedral" => GroupSpec::Dihedral { n: num(arg)? },
            "product" => GroupSpec::Product { orders: arg.split(',').map(num).collect::<Result<_>>()? },
            "cayley" => GroupSpec::Cayley { path: arg.into(), catalog: None },
            _ => bail!("unknown group recipe {kind:?} (cyclic, product, dihedral, cayley)"),
        })
    }
}

impl GroupSpec {
    fn check(&self, errs: &mut Vec<String>) {
        match self {
            GroupSpec::Cyclic { m } if *m < 2 => errs.push(format!("group.m must be >= 2 (got {m})")),
            GroupSpec::Product { orders } if orders.is_empty() || orders.iter().any(|&o| o < 2) => {
                errs.push(format!("group.orders must be non-empty with every order >= 2 (got {orders:?})"))
            }
            GroupSpec::Dihedral { n } if *n < 3 => errs.push(format!("group.n must be >= 3 (got {n})")),
            GroupSpec::Cayley { path, catalog } => {
                if !path.is_file() {
                    errs.push(format!("group.path {} does not exist", path.display()));
                }
                if let Some(c) = catalog.as_ref().filter(|c| !c.is_file()) {
                    errs.push(format!("group.catalog {} does not exist", c.display()));
                }
            }
            _ => {}
        }
    }

    pub fn build(&self) -> Result<Group> {
        Ok(match self {
            GroupSpec::Cyclic { m } => Group::cyclic(*m),
            GroupSpec::Product { orders } => Group::product(&orders.iter().map(|&m| Group::cyclic(m)).collect::<Vec<_>>()),
            GroupSpec::Dihedral { n } => Group::dihedral(*n),
            GroupSpec::Cayley { path, .. } => {
                let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
                load_cayley(std::io::BufReader::new(f)).with_context(|| format!("loading {}", path.display()))?
            }
        })
    }

    /// Catalog from the recipe, or from the sidecar of an imported table.
    pub fn catalog(&self, g: &Group) -> Result<IrrepCatalog> {
        if let GroupSpec::Cayley { catalog: Some(c), .. } = self {
            let text = fs::read_to_string(c).with_context(|| format!("reading {}", c.display()))?;
            return Ok(IrrepCatalog::from_json(&text)?);
        }
        g.catalog().ok_or_else(|| anyhow!("group {} has no irrep catalog; supply group.catalog", g.name()))
    }

    /// Files whose bytes the run depends on.
    pub fn input_files(&self) -> Vec<&Path> {
        match self {
            GroupSpec::Cayley { path, catalog } => std::iter::once(path.as_path()).chain(catalog.as_deref()).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSpec {
    pub p: f64,
    pub seed: u64,
    pub mode: SplitMode,
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec { p: 0.4, seed: 0, mode: SplitMode::FixedCount }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub width: usize,
    pub depth: usize,
    pub act: Activation,
    pub residual: bool,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { width: 2048, depth: 1, act: Activation::Quadratic, residual: false, init_scale: 1.0, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub lr: f64,
    pub weight_decay: f64,
    pub optimizer: Optimizer,
    /// Unset means 20000 for `M ≤ 31` and 50000 above.
    pub epochs: Option<usize>,
    pub eval_every: usize,
    pub threshold: f64,
    pub loss_scale: LossScale,
    pub decay_mode: DecayMode,
    pub stop_when_generalized: bool,
    pub diagnostics: bool,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSpec {
            lr: 1e-3,
            weight_decay: 2e-4,
            optimizer: t.optimizer,
            epochs: None,
            eval_every: 10,
            threshold: t.threshold,
            loss_scale: t.loss_scale,
            decay_mode: t.decay_mode,
            stop_when_generalized: false,
            diagnostics: false,
        }
    }
}

pub fn default_epochs(m: usize) -> usize {
    if m <= 31 {
        20_000
    } else {
        50_000
    }
}

impl TrainSpec {
    pub fn resolve(&self, m: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            optimizer: self.optimizer,
            epochs: self.epochs.unwrap_or_else(|| default_epochs(m)),
            eval_every: self.eval_every,
            seed,
            threshold: self.threshold,
            loss_scale: self.loss_scale,
            decay_mode: self.decay_mode,
            stop_when_generalized: self.stop_when_generalized,
            diagnostics: self.diagnostics,
        }
    }
}

/// Phase-boundary grid. Width, rates and budget here replace the `model`
/// and `train` values for every cell; everything else is inherited.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSpec {
    pub ms: Vec<usize>,
    pub ps: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Worker threads; unset uses all cores.
    pub workers: Option<usize>,
    pub width: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: Option<usize>,
    pub eval_every: usize,
    pub stop_when_generalized: bool,
    /// Write each cell's run log under `cells/`.
    pub cell_logs: bool,
}

impl Default for ScanSpec {
    fn default() -> Self {
        ScanSpec {
            ms: vec![11, 17, 23, 31],
            ps: (1..=9).map(|i| i as f64 / 10.0).collect(),
            seeds: (0..5).collect(),
            workers: None,
            width: 512,
            lr: 1e-2,
            weight_decay: 1e-3,
            epochs: Some(4000),
            eval_every: 50,
            stop_when_generalized: true,
            cell_logs: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AscendMode {
    Energy,
    /// Climb `ℰ_S` with the irreps in `suppressed` removed.
    Modulated,
    /// Weighted single-target task `(g, g⁻¹h)` with weights `target_weights`.
    SingleTarget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AscendSpec {
    pub mode: AscendMode,
    pub seeds: usize,
    pub seed: u64,
    pub act: Activation,
    pub lr: f64,
    pub max_steps: usize,
    pub tol: f64,
    pub flatness: bool,
    pub suppressed: Vec<usize>,
    pub target: usize,
    pub target_weights: Vec<f64>,
}

impl Default for AscendSpec {
    fn default() -> Self {
        let a = groklab::energyscape::AscentConfig::default();
        AscendSpec {
            mode: AscendMode::Energy,
            seeds: 64,
            seed: 0,
            act: Activation::Quadratic,
            lr: a.lr,
            max_steps: a.max_steps,
            tol: a.tol,
            flatness: true,
            suppressed: Vec::new(),
            target: 0,
            target_weights: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tag: String,
    pub out: PathBuf,
    pub group: GroupSpec,
    pub task: TaskSpec,
    pub model: ModelConfig,
    pub train: TrainSpec,
    pub scan: ScanSpec,
    pub ascend: AscendSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            tag: "run".into(),
            out: "runs".into(),
            group: GroupSpec::Cyclic { m: 71 },
            task: TaskSpec::default(),
            model: ModelConfig::default(),
            train: TrainSpec::default(),
            scan: ScanSpec::default(),
            ascend: AscendSpec::default(),
        }
    }
}

/// What a subcommand needs checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    Train,
    Scan,
    Ascend,
}

impl ExperimentConfig {
    /// Defaults, then the `--config` file (a config or a run manifest), then
    /// each `--set key=value` in order.
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Self> {
        let mut v = match path {
            Some(p) => {
                if !p.is_file() {
                    return Err(ConfigErrors(vec![format!("config file {} does not exist", p.display())]).into());
                }
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
                match v {
                    Value::Object(mut o) if o.contains_key("content_hash") && o.contains_key("config") => {
                        o.remove("config").expect("checked")
                    }
                    v => v,
                }
            }
            None => serde_json::to_value(ExperimentConfig::default())?,
        };
        for s in sets {
            let (key, raw) = s.split_once('=').ok_or_else(|| anyhow!("--set expects key=value, got {s:?}"))?;
            set_path(&mut v, key.trim(), parse_value(raw))?;
        }
        normalize_shorthand(&mut v)?;
        serde_json::from_value(v).context("invalid configuration")
    }

    /// Every problem with the config, not just the first.
    pub fn problems(&self, scope: Scope) -> Vec<String> {
        let mut errs = Vec::new();
        if self.tag.is_empty() || self.tag.contains(['/', '\\']) {
            errs.push(format!("tag must be non-empty without path separators (got {:?})", self.tag));
        }
        match scope {
            Scope::Train => {
                self.group.check(&mut errs);
                if !(self.task.p > 0.0 && self.task.p <= 1.0) {
                    errs.push(format!("task.p must lie in (0, 1] (got {})", self.task.p));
                }
                self.check_model(&mut errs);
                self.check_train(&mut errs);
            }
            Scope::Scan => {
                let s = &self.scan;
                if s.ms.is_empty() {
                    errs.push("scan.ms must be non-empty".into());
                }
                if s.ps.is_empty() {
                    errs.push("scan.ps must be non-empty".into());
                }
                if s.seeds.is_empty() {
                    errs.push("scan.seeds must be non-empty".into());
                }
                if let Some(m) = s.ms.iter().find(|&&m| m < 2) {
                    errs.push(format!("scan.ms entries must be >= 2 (got {m})"));
                }
                if let Some(p) = s.ps.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
                    errs.push(format!("scan.ps entries must lie in (0, 1] (got {p})"));
                }
                if s.workers == Some(0) {
                    errs.push("scan.workers must be >= 1".into());
                }
                if s.width == 0 {
                    errs.push("scan.width must be >= 1".into());
                }
                if !(s.lr > 0.0) {
                    errs.push(format!("scan.lr must be > 0 (got {})", s.lr));
                }
                if !(s.weight_decay >= 0.0) {
                    errs.push(format!("scan.weight_decay must be >= 0 (got {})", s.weight_decay));
                }
                if s.epochs == Some(0) {
                    errs.push("scan.epochs must be >= 1".into());
                }
                if s.eval_every == 0 {
                    errs.push("scan.eval_every must be >= 1".into());
                }
                self.check_model(&mut errs);
                self.check_train(&mut errs);
            }
            Scope::Ascend => {
                self.group.check(&mut errs);
                let a = &self.ascend;
                if a.seeds == 0 {
                    errs.push("ascend.seeds must be >= 1".into());
                }
                if !(a.lr > 0.0) {
                    errs.push(format!("ascend.lr must be > 0 (got {})", a.lr));
                }
                if a.max_steps == 0 {
                    errs.push("ascend.max_steps must be >= 1".into());
                }
                if !(a.tol > 0.0) {
                    errs.push(format!("ascend.tol must be > 0 (got {})", a.tol));
                }
                match a.mode {
                    AscendMode::Modulated if a.suppressed.is_empty() => {
                        errs.push("ascend.suppressed must be non-empty in modulated mode".into())
                    }
                    AscendMode::SingleTarget if a.target_weights.is_empty() => {
                        errs.push("ascend.target_weights must be non-empty in single_target mode".into())
                    }
                    _ => {}
                }
            }
        }
        errs
    }

    fn check_model(&self, errs: &mut Vec<String>) {
        let m = &self.model;
        if m.width == 0 {
            errs.push("model.width must be >= 1".into());
        }
        if m.depth == 0 {
            errs.push("model.depth must be >= 1".into());
        }
        if !(m.init_scale > 0.0) {
            errs.push(format!("model.init_scale must be > 0 (got {})", m.init_scale));
        }
    }

    fn check_train(&self, errs: &mut Vec<String>) {
        if let Err(e) = self.train.resolve(31, 0).validate() {
            errs.extend(e.to_string().trim_start_matches("invalid argument: ").split("; ").map(|s| format!("train.{s}")));
        }
        if !(self.train.threshold > 0.0 && self.train.threshold <= 1.0) {
            errs.push(format!("train.threshold must lie in (0, 1] (got {})", self.train.threshold));
        }
    }

    pub fn validated(self, scope: Scope) -> Result<Self> {
        let errs = self.problems(scope);
        if errs.is_empty() {
            Ok(self)
        } else {
            Err(ConfigErrors(errs).into())
        }
    }
}

/// All validation failures of a config, one per line.
#[derive(Debug)]
pub struct ConfigErrors(pub Vec<String>);

impl std::fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration:")?;
        for e in &self.0 {
            write!(f, "\n  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()))
}

fn set_path(root: &mut Value, key: &str, val: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("bad --set key {key:?}");
    }
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| anyhow!("--set {key}: {} is not an object", parts[..i].join(".")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), val);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("key has at least one part")
}

/// Strings accepted in place of tagged objects: group recipes, activation
/// names and optimizer names.
fn normalize_shorthand(v: &mut Value) -> Result<()> {
    let Some(obj) = v.as_object_mut() else { bail!("configuration must be a JSON object") };
    if let Some(Value::String(s)) = obj.get("group") {
        let g: GroupSpec = s.parse()?;
        obj.insert("group".into(), serde_json::to_value(g)?);
    }
    for section in ["model", "ascend"] {
        if let Some(Value::String(s)) = obj.get(section).and_then(|m| m.get("act")) {
            let a: Activation = s.parse()?;
            obj.get_mut(section).expect("present")["act"] = serde_json::to_value(a)?;
        }
    }
    if let Some(Value::String(s)) = obj.get("train").and_then(|t| t.get("optimizer")) {
        let o = match s.as_str() {
            "gd" => Optimizer::Gd,
            "adam" => Optimizer::adam(),
            "muon" => Optimizer::muon(),
            _ => bail!("unknown optimizer {s:?} (gd, adam, muon)"),
        };
        obj.get_mut("train").expect("present")["optimizer"] = serde_json::to_value(o)?;
    }
    Ok(())
}
