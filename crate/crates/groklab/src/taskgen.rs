//! Group-arithmetic prediction tasks: the block-ordered pair table,
//! train/test splits, one-hot encodings and the single-target task.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groupkit::Group;
use crate::numkit::Mat;
use crate::rng;

/// One `(h₁, h₂) ↦ h = h₁h₂` example.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    pub h: usize,
}

/// All `M²` pairs ordered by target `h`, then by `h₁` within a block, so
/// the block of target `h` has input halves `[R_hᵀ, P]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairTable {
    pub m: usize,
    pub rows: Vec<Pair>,
}

pub fn full_task(g: &Group) -> PairTable {
    let m = g.order();
    let mut rows = Vec::with_capacity(m * m);
    for h in 0..m {
        for a in 0..m {
            let b = g.mul(g.inv(a), h);
            rows.push(Pair { a, b, h });
        }
    }
    PairTable { m, rows }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    FixedCount,
    Bernoulli,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// `P⊥₁` over the current batch.
    #[default]
    ExactProjection,
    /// Subtract the training mean and reuse it at test time.
    TrainStatistics,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub table: PairTable,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub p: f64,
    pub seed: u64,
    pub mode: SplitMode,
    pub centering: Centering,
}

/// Fixed-count training size `⌊p·M²⌋` (with a small guard against `p`
/// values that are not exactly representable).
pub fn train_size(m: usize, p: f64) -> usize {
    ((p * (m * m) as f64) + 1e-9).floor() as usize
}

pub fn split(table: &PairTable, p: f64, seed: u64, mode: SplitMode) -> Result<Dataset> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Invalid(format!("keep ratio {p} outside (0, 1]")));
    }
    let total = table.rows.len();
    let mut r = rng::stream(seed, 0x5b1);
    let (mut train, mut test): (Vec<usize>, Vec<usize>) = match mode {
        SplitMode::FixedCount => {
            let n = train_size(table.m, p);
            let mut idx: Vec<usize> = (0..total).collect();
            idx.shuffle(&mut r);
            let test = idx.split_off(n);
            (idx, test)
        }
        SplitMode::Bernoulli => (0..total).partition(|_| r.random::<f64>() < p),
    };
    if train.is_empty() {
        return Err(Error::Invalid(format!("keep ratio {p} gives an empty training set")));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Dataset { table: table.clone(), train, test, p, seed, mode, centering: Centering::default() })
}

/// Dense one-hot encoding of selected rows: `X` is `n×2M`, `Y` is `n×M`.
pub fn one_hot(table: &PairTable, idx: &[usize]) -> (Mat, Mat) {
    let m = table.m;
    let mut x = Mat::zeros(idx.len(), 2 * m);
    let mut y = Mat::zeros(idx.len(), m);
    for (i, &r) in idx.iter().enumerate() {
        let p = table.rows[r];
        x[(i, p.a)] = 1.0;
        x[(i, m + p.b)] = 1.0;
        y[(i, p.h)] = 1.0;
    }
    (x, y)
}

/// Encoded `(X_train, Y_train, X_test, Y_test)`.
pub fn encode(d: &Dataset) -> (Mat, Mat, Mat, Mat) {
    let (xtr, ytr) = one_hot(&d.table, &d.train);
    let (xte, yte) = one_hot(&d.table, &d.test);
    (xtr, ytr, xte, yte)
}

impl Dataset {
    pub fn train_pairs(&self) -> Vec<Pair> {
        self.train.iter().map(|&i| self.table.rows[i]).collect()
    }

    pub fn test_pairs(&self) -> Vec<Pair> {
        self.test.iter().map(|&i| self.table.rows[i]).collect()
    }

    pub fn manifest(&self, group: serde_json::Value) -> DatasetManifest {
        DatasetManifest {
            group,
            p: self.p,
            seed: self.seed,
            mode: self.mode,
            train: self.train.clone(),
            test: self.test.clone(),
        }
    }
}

/// Everything needed to replay a split exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub group: serde_json::Value,
    pub p: f64,
    pub seed: u64,
    pub mode: SplitMode,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Rows `(g, g⁻¹h)` of a single target `h`, weighted by `p_g`.
#[derive(Clone, Debug)]
pub struct WeightedPairs {
    pub m: usize,
    pub h: usize,
    pub rows: Vec<Pair>,
    pub weights: Vec<f64>,
}

pub fn single_target_task(g: &Group, h: usize, weights: &[f64]) -> Result<WeightedPairs> {
    let m = g.order();
    if weights.len() != m {
        return Err(Error::Shape(format!("{} weights for a group of order {m}", weights.len())));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(Error::Invalid(format!("negative weight {w}")));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Invalid("weights are all zero".into()));
    }
    let rows = (0..m).map(|a| Pair { a, b: g.mul(g.inv(a), h), h }).collect();
    Ok(WeightedPairs { m, h, rows, weights: weights.iter().map(|w| w / total).collect() })
}
