use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use groklab::groupkit::Group;
use groklab::netdyn::fmt_sig;
use groklab::theoremlab::{boundary_fit, boundary_trend, median};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{ExperimentConfig, ModelConfig, Scope};
use crate::output::{create_run_dir, write_json};
use crate::train::{model_spec, run_cell, write_manifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    /// Training accuracy reached the threshold.
    Converged,
    /// Ended below the training threshold; excluded from medians.
    Nonconverged,
    Diverged,
    Failed,
}

impl CellStatus {
    fn as_str(&self) -> &'static str {
        match self {
            CellStatus::Converged => "converged",
            CellStatus::Nonconverged => "nonconverged",
            CellStatus::Diverged => "diverged",
            CellStatus::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub group: String,
    pub m: usize,
    pub p: f64,
    pub seed: u64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub delay: i64,
    pub epochs_run: usize,
    pub status: CellStatus,
}

/// Rows ordered by `M`, then `p` ascending, then seed in grid order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTable {
    pub rows: Vec<BoundaryRow>,
}

pub const BOUNDARY_HEADER: &str = "group,M,p,seed,train_acc,test_acc,delay,epochs_run,status";

/// Median over converged seeds at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub p: f64,
    pub median_test_acc: Option<f64>,
    pub converged: usize,
    pub nonconverged: usize,
    pub diverged: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub m: usize,
    pub points: Vec<GridPoint>,
    /// Smallest grid `p` whose median test accuracy passes the threshold.
    pub p_star: Option<f64>,
    /// `p_star` moved to the linear crossing with the grid point below it.
    pub p_star_interp: Option<f64>,
}

impl BoundaryTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(BOUNDARY_HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.group,
                r.m,
                fmt_sig(r.p),
                r.seed,
                fmt_sig(r.train_acc),
                fmt_sig(r.test_acc),
                r.delay,
                r.epochs_run,
                r.status.as_str()
            )
            .expect("writing to a String");
        }
        s
    }

    pub fn boundaries(&self, threshold: f64) -> Vec<Boundary> {
        let mut ms: Vec<usize> = self.rows.iter().map(|r| r.m).collect();
        ms.dedup();
        ms.into_iter()
            .map(|m| {
                let rows: Vec<&BoundaryRow> = self.rows.iter().filter(|r| r.m == m).collect();
                let mut ps: Vec<f64> = rows.iter().map(|r| r.p).collect();
                ps.dedup();
                let points: Vec<GridPoint> = ps
                    .into_iter()
                    .map(|p| {
                        let at: Vec<&&BoundaryRow> = rows.iter().filter(|r| r.p == p).collect();
                        let count = |s: CellStatus| at.iter().filter(|r| r.status == s).count();
                        let mut accs: Vec<f64> =
                            at.iter().filter(|r| r.status == CellStatus::Converged).map(|r| r.test_acc).collect();
                        GridPoint {
                            p,
                            median_test_acc: if accs.is_empty() { None } else { Some(median(&mut accs)) },
                            converged: count(CellStatus::Converged),
                            nonconverged: count(CellStatus::Nonconverged),
                            diverged: count(CellStatus::Diverged),
                            failed: count(CellStatus::Failed),
                        }
                    })
                    .collect();
                let hit = points.iter().position(|g| g.median_test_acc.is_some_and(|a| a >= threshold));
                let p_star = hit.map(|i| points[i].p);
                let p_star_interp = hit.map(|i| match (i, i.checked_sub(1).and_then(|j| points[j].median_test_acc)) {
                    (0, _) | (_, None) => points[i].p,
                    (_, Some(lo)) => {
                        let hi = points[i].median_test_acc.expect("hit has a median");
                        let (p0, p1) = (points[i - 1].p, points[i].p);
                        p0 + (threshold - lo) / (hi - lo) * (p1 - p0)
                    }
                });
                Boundary { m, points, p_star, p_star_interp }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    m: usize,
    p: f64,
    seed: u64,
}

fn run_one(cfg: &ExperimentConfig, cell: Cell) -> (BoundaryRow, Option<String>) {
    let s = &cfg.scan;
    let group = Group::cyclic(cell.m);
    let model = ModelConfig { width: s.width, seed: cell.seed, ..cfg.model.clone() };
    let mut train = cfg.train.clone();
    train.lr = s.lr;
    train.weight_decay = s.weight_decay;
    train.epochs = s.epochs.or(train.epochs);
    train.eval_every = s.eval_every;
    train.stop_when_generalized = s.stop_when_generalized;
    let tcfg = train.resolve(cell.m, cell.seed);
    let spec = model_spec(cell.m, &model);
    let mut row = BoundaryRow {
        group: group.name().to_string(),
        m: cell.m,
        p: cell.p,
        seed: cell.seed,
        train_acc: f64::NAN,
        test_acc: f64::NAN,
        delay: -1,
        epochs_run: 0,
        status: CellStatus::Failed,
    };
    match run_cell(&group, cell.p, cell.seed, cfg.task.mode, &spec, cell.seed, &tcfg) {
        Ok((_, _, log)) => {
            if let Some(r) = log.final_record() {
                row.train_acc = r.train_acc;
                row.test_acc = r.test_acc;
            }
            row.delay = log.grokking_delay().unwrap_or(-1);
            row.epochs_run = log.epochs_run;
            row.status = if log.diverged_at.is_some() {
                CellStatus::Diverged
            } else if row.train_acc >= tcfg.threshold {
                CellStatus::Converged
            } else {
                CellStatus::Nonconverged
            };
            (row, Some(log.to_csv()))
        }
        Err(e) => {
            eprintln!("M={} p={} seed={}: {e:#}", cell.m, cell.p, cell.seed);
            (row, None)
        }
    }
}

pub struct ScanOutcome {
    pub dir: PathBuf,
    pub table: BoundaryTable,
    pub fit: serde_json::Value,
}

pub fn cmd_scan(cfg: ExperimentConfig) -> Result<ScanOutcome> {
    let cfg = cfg.validated(Scope::Scan)?;
    let s = &cfg.scan;
    let mut ms = s.ms.clone();
    ms.sort_unstable();
    ms.dedup();
    let mut ps = s.ps.clone();
    ps.sort_by(f64::total_cmp);
    ps.dedup();
    let cells: Vec<Cell> = ms
        .iter()
        .flat_map(|&m| ps.iter().flat_map(move |&p| s.seeds.iter().map(move |&seed| Cell { m, p, seed })))
        .collect();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = s.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build().context("building worker pool")?;
    let results: Vec<(BoundaryRow, Option<String>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&c| {
                let out = run_one(&cfg, c);
                let r = &out.0;
                eprintln!(
                    "M={} p={} seed={}: train {:.3} test {:.3} ({})",
                    r.m,
                    fmt_sig(r.p),
                    r.seed,
                    r.train_acc,
                    r.test_acc,
                    r.status.as_str()
                );
                out
            })
            .collect()
    });

    let dir = create_run_dir(&cfg.out, &cfg.tag)?;
    if s.cell_logs {
        let cells_dir = dir.join("cells");
        fs::create_dir_all(&cells_dir)?;
        for (row, csv) in &results {
            if let Some(csv) = csv {
                fs::write(cells_dir.join(format!("M{}-p{}-s{}.csv", row.m, fmt_sig(row.p), row.seed)), csv)?;
            }
        }
    }
    let table = BoundaryTable { rows: results.into_iter().map(|(r, _)| r).collect() };
    fs::write(dir.join("boundary.csv"), table.to_csv())?;

    let threshold = cfg.train.threshold;
    let bounds = table.boundaries(threshold);
    let points: Vec<(f64, f64)> =
        bounds.iter().filter_map(|b| b.p_star_interp.map(|p| (b.m as f64, p))).collect();
    let fit = match boundary_fit(&points) {
        Ok((c, resid)) => json!({"c": c, "max_rel_residual": resid}),
        Err(e) => json!({"error": e.to_string()}),
    };
    let (nonincreasing, spread) = if points.len() >= 2 { boundary_trend(&points) } else { (true, f64::NAN) };
    let count = |st: CellStatus| table.rows.iter().filter(|r| r.status == st).count();
    let fit = json!({
        "threshold": threshold,
        "cells": table.rows.len(),
        "nonconverged": count(CellStatus::Nonconverged),
        "diverged": count(CellStatus::Diverged),
        "failed": count(CellStatus::Failed),
        "boundaries": bounds,
        "fit": fit,
        "trend": {"nonincreasing": nonincreasing, "spread": spread},
    });
    write_json(&dir.join("fit.json"), &fit)?;
    write_manifest(&dir, "scan", &cfg, json!({"ms": ms, "ps": ps, "seeds": s.seeds}))?;
    Ok(ScanOutcome { dir, table, fit })
}
