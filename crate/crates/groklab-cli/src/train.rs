use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use groklab::groupkit::Group;
use groklab::netdyn::{train, ModelSpec, ModelState, RunLog, TrainConfig};
use groklab::taskgen::{full_task, split, Dataset, SplitMode};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{ExperimentConfig, ModelConfig, Scope};
use crate::output::{content_hash, create_run_dir, sha256_hex, write_json, write_weights};

/// Delay and first-crossing fields use -1 when undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub group: String,
    pub m: usize,
    pub p: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub epochs_run: usize,
    pub first_train_epoch: i64,
    pub first_test_epoch: i64,
    pub grokking_delay: i64,
    pub final_train_acc: f64,
    pub final_test_acc: f64,
    pub final_train_loss: f64,
    pub final_test_loss: f64,
    pub diverged_at: Option<usize>,
    pub seconds: f64,
}

impl Summary {
    pub fn new(group: &Group, data: &Dataset, log: &RunLog, seconds: f64) -> Self {
        let last = log.final_record();
        let or_nan = |f: fn(&groklab::netdyn::EvalRecord) -> f64| last.map_or(f64::NAN, f);
        Summary {
            group: group.name().to_string(),
            m: group.order(),
            p: data.p,
            train_size: data.train.len(),
            test_size: data.test.len(),
            epochs_run: log.epochs_run,
            first_train_epoch: log.first_train_epoch.map_or(-1, |e| e as i64),
            first_test_epoch: log.first_test_epoch.map_or(-1, |e| e as i64),
            grokking_delay: log.grokking_delay().unwrap_or(-1),
            final_train_acc: or_nan(|r| r.train_acc),
            final_test_acc: or_nan(|r| r.test_acc),
            final_train_loss: or_nan(|r| r.train_loss),
            final_test_loss: or_nan(|r| r.test_loss),
            diverged_at: log.diverged_at,
            seconds,
        }
    }
}

pub fn model_spec(m: usize, model: &ModelConfig) -> ModelSpec {
    ModelSpec {
        input_dim: 2 * m,
        width: model.width,
        outputs: m,
        depth: model.depth,
        act: model.act,
        residual: model.residual,
        init_scale: model.init_scale,
    }
}

/// One training run: split, init, train.
pub fn run_cell(
    group: &Group,
    p: f64,
    split_seed: u64,
    mode: SplitMode,
    spec: &ModelSpec,
    model_seed: u64,
    cfg: &TrainConfig,
) -> Result<(ModelState, Dataset, RunLog)> {
    let data = split(&full_task(group), p, split_seed, mode)?;
    let mut model = ModelState::init(spec, model_seed);
    let log = train(&mut model, &data, cfg)?;
    Ok((model, data, log))
}

pub struct TrainOutcome {
    pub dir: PathBuf,
    pub summary: Summary,
}

pub fn cmd_train(cfg: ExperimentConfig) -> Result<TrainOutcome> {
    let cfg = cfg.validated(Scope::Train)?;
    let group = cfg.group.build()?;
    let m = group.order();
    let spec = model_spec(m, &cfg.model);
    let tcfg = cfg.train.resolve(m, cfg.model.seed);

    let t0 = Instant::now();
    let (model, data, log) = run_cell(&group, cfg.task.p, cfg.task.seed, cfg.task.mode, &spec, cfg.model.seed, &tcfg)?;
    let summary = Summary::new(&group, &data, &log, t0.elapsed().as_secs_f64());

    let dir = create_run_dir(&cfg.out, &cfg.tag)?;
    let split_hash = sha256_hex(serde_json::to_string(&(&data.train, &data.test))?.as_bytes());
    let resolved = json!({
        "group": group.name(),
        "order": m,
        "split_seed": cfg.task.seed,
        "model_seed": cfg.model.seed,
        "model": spec,
        "train": tcfg,
        "split_sha256": split_hash,
    });
    write_manifest(&dir, "train", &cfg, resolved)?;
    fs::write(dir.join("runlog.csv"), log.to_csv())?;
    let mut w = std::io::BufWriter::new(fs::File::create(dir.join("weights.bin"))?);
    write_weights(&mut w, &model.matrices())?;
    drop(w);
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(TrainOutcome { dir, summary })
}

/// `manifest.json`: full config, resolved values, input-file hashes and a
/// content hash over all of them.
pub fn write_manifest(dir: &Path, command: &str, cfg: &ExperimentConfig, resolved: serde_json::Value) -> Result<String> {
    let files = cfg.group.input_files();
    let mut file_hashes = serde_json::Map::new();
    for f in &files {
        file_hashes.insert(f.display().to_string(), sha256_hex(&fs::read(f)?).into());
    }
    let inputs = json!({"command": command, "config": cfg, "resolved": resolved, "files": file_hashes});
    let hash = content_hash(&inputs)?;
    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": cfg,
        "resolved": inputs["resolved"],
        "files": inputs["files"],
        "content_hash": hash,
    });
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(hash)
}
