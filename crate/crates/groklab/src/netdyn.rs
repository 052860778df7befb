//! The network `Ŷ = σ(XW)V` (optionally with more hidden layers), its
//! centered ℓ₂ loss and gradients, the ridge top layer, optimizers and the
//! per-epoch telemetry used to watch grokking happen.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{self, center_rows, centered, gemm, Mat};
use crate::rng;
use crate::taskgen::{one_hot, Dataset, Pair};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    /// `x²`
    Quadratic,
    /// `a·x + b·x²`
    LinQuad { a: f64, b: f64 },
    Linear,
    Relu,
    Silu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub const ALL: [Activation; 7] = [
        Activation::Quadratic,
        Activation::LinQuad { a: 0.5, b: 1.0 },
        Activation::Linear,
        Activation::Relu,
        Activation::Silu,
        Activation::Tanh,
        Activation::Sigmoid,
    ];

    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        match *self {
            Activation::Quadratic => x * x,
            Activation::LinQuad { a, b } => a * x + b * x * x,
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
            Activation::Silu => x / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative; the relu subgradient at 0 is 0.
    #[inline]
    pub fn df(&self, x: f64) -> f64 {
        match *self {
            Activation::Quadratic => 2.0 * x,
            Activation::LinQuad { a, b } => a + 2.0 * b * x,
            Activation::Linear => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 - s)
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Quadratic => write!(f, "quadratic"),
            Activation::LinQuad { a, b } => write!(f, "linquad:{a},{b}"),
            Activation::Linear => write!(f, "linear"),
            Activation::Relu => write!(f, "relu"),
            Activation::Silu => write!(f, "silu"),
            Activation::Tanh => write!(f, "tanh"),
            Activation::Sigmoid => write!(f, "sigmoid"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "quadratic" | "x2" => Activation::Quadratic,
            "linear" => Activation::Linear,
            "relu" => Activation::Relu,
            "silu" => Activation::Silu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            _ => {
                let rest = s.strip_prefix("linquad:").ok_or_else(|| Error::Invalid(format!("unknown activation {s:?}")))?;
                let (a, b) = rest.split_once(',').ok_or_else(|| Error::Invalid(format!("linquad needs a,b: {s:?}")))?;
                let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| Error::Invalid(format!("{s:?}: {e}")));
                Activation::LinQuad { a: parse(a)?, b: parse(b)? }
            }
        })
    }
}

/// Network input: a dense matrix, or the two one-hot slots of group pairs
/// (`XW` becomes a gather of two rows of `W`).
#[derive(Clone, Copy, Debug)]
pub enum Inputs<'a> {
    Dense(&'a Mat),
    Pairs { m: usize, pairs: &'a [Pair] },
}

impl Inputs<'_> {
    pub fn n(&self) -> usize {
        match self {
            Inputs::Dense(x) => x.nrows(),
            Inputs::Pairs { pairs, .. } => pairs.len(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Inputs::Dense(x) => x.ncols(),
            Inputs::Pairs { m, .. } => 2 * m,
        }
    }

    /// `X·W`
    pub fn project(&self, w: &Mat) -> Mat {
        match self {
            Inputs::Dense(x) => numkit::mul(x, w),
            Inputs::Pairs { m, pairs } => {
                let mut out = Mat::zeros(pairs.len(), w.ncols());
                for j in 0..w.ncols() {
                    let wc = w.column(j);
                    let mut oc = out.column_mut(j);
                    for (i, p) in pairs.iter().enumerate() {
                        oc[i] = wc[p.a] + wc[m + p.b];
                    }
                }
                out
            }
        }
    }

    /// `Xᵀ·G`
    pub fn back(&self, g: &Mat) -> Mat {
        match self {
            Inputs::Dense(x) => numkit::tmul(x, g),
            Inputs::Pairs { m, pairs } => {
                let mut out = Mat::zeros(2 * m, g.ncols());
                for j in 0..g.ncols() {
                    let gc = g.column(j);
                    let mut oc = out.column_mut(j);
                    for (i, p) in pairs.iter().enumerate() {
                        oc[p.a] += gc[i];
                        oc[m + p.b] += gc[i];
                    }
                }
                out
            }
        }
    }
}

/// Hidden layers `W₁ (d×K), W₂.. (K×K)` and the output layer `V (K×M)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub hidden: Vec<Mat>,
    pub v: Mat,
    pub act: Activation,
    pub residual: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub width: usize,
    pub outputs: usize,
    /// Number of hidden layers; 1 gives the 2-layer network.
    pub depth: usize,
    pub act: Activation,
    pub residual: bool,
    pub init_scale: f64,
}

impl ModelState {
    /// Gaussian init with standard deviation `init_scale/√fan_in` everywhere.
    pub fn init(spec: &ModelSpec, seed: u64) -> Self {
        let mut r = rng::stream(seed, 0x1417);
        let mut hidden = Vec::with_capacity(spec.depth);
        let mut fan_in = spec.input_dim;
        for _ in 0..spec.depth.max(1) {
            hidden.push(rng::normal_mat(&mut r, fan_in, spec.width, spec.init_scale / (fan_in as f64).sqrt()));
            fan_in = spec.width;
        }
        let v = rng::normal_mat(&mut r, spec.width, spec.outputs, spec.init_scale / (spec.width as f64).sqrt());
        ModelState { hidden, v, act: spec.act, residual: spec.residual }
    }

    pub fn width(&self) -> usize {
        self.v.nrows()
    }

    /// Weight matrices in layer order.
    pub fn matrices(&self) -> Vec<&Mat> {
        self.hidden.iter().chain(std::iter::once(&self.v)).collect()
    }

    pub fn sq_norm(&self) -> f64 {
        self.matrices().iter().map(|m| m.norm_squared()).sum()
    }

    fn check(&self, x: &Inputs) -> Result<()> {
        if self.hidden.is_empty() || x.dim() != self.hidden[0].nrows() {
            return Err(Error::Shape(format!(
                "input has {} columns, first layer expects {}",
                x.dim(),
                self.hidden.first().map_or(0, |w| w.nrows())
            )));
        }
        for (l, pair) in self.hidden.windows(2).enumerate() {
            if pair[0].ncols() != pair[1].nrows() {
                return Err(Error::Shape(format!("hidden layer {} does not chain", l + 1)));
            }
        }
        if self.hidden.last().map(|w| w.ncols()) != Some(self.v.nrows()) {
            return Err(Error::Shape("output layer does not chain".into()));
        }
        Ok(())
    }
}

/// Pre-activations and features of every hidden layer plus the output.
#[derive(Clone, Debug)]
pub struct Forward {
    pub pre: Vec<Mat>,
    pub feats: Vec<Mat>,
    pub out: Mat,
}

impl Forward {
    /// Features of the last hidden layer (the `F` of the 2-layer analysis).
    pub fn f(&self) -> &Mat {
        self.feats.last().expect("at least one hidden layer")
    }
}

pub fn forward(model: &ModelState, x: Inputs) -> Result<Forward> {
    model.check(&x)?;
    let act = model.act;
    let mut pre = Vec::with_capacity(model.hidden.len());
    let mut feats: Vec<Mat> = Vec::with_capacity(model.hidden.len());
    for (l, w) in model.hidden.iter().enumerate() {
        let z = if l == 0 { x.project(w) } else { numkit::mul(&feats[l - 1], w) };
        let mut f = z.map(|t| act.f(t));
        if model.residual && l > 0 && w.nrows() == w.ncols() {
            f += &feats[l - 1];
        }
        pre.push(z);
        feats.push(f);
    }
    let out = numkit::mul(feats.last().expect("hidden layer"), &model.v);
    if !out.iter().all(|v| v.is_finite()) {
        return Err(Error::Invalid("non-finite forward values".into()));
    }
    Ok(Forward { pre, feats, out })
}

/// Scale of the data term: the plain sum over samples, or its per-sample mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossScale {
    Sum,
    #[default]
    PerSample,
}

impl LossScale {
    pub fn factor(&self, n: usize) -> f64 {
        match self {
            LossScale::Sum => 1.0,
            LossScale::PerSample => 1.0 / n.max(1) as f64,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Grads {
    /// Data term plus `(η/2)·Σ‖W‖²`.
    pub loss: f64,
    pub data_loss: f64,
    pub hidden: Vec<Mat>,
    pub v: Mat,
    /// `G_F = P⊥₁(Y − FV)Vᵀ`, unscaled.
    pub g_f: Mat,
    pub fwd: Forward,
}

/// Loss `c·½‖P⊥₁(Y − Ŷ)‖² + (η/2)Σ‖W‖²` and its gradients, where `c` is
/// the [`LossScale`] factor.
pub fn loss_and_grads(model: &ModelState, x: Inputs, y: &Mat, eta: f64, scale: LossScale) -> Result<Grads> {
    let fwd = forward(model, x)?;
    if y.nrows() != x.n() || y.ncols() != model.v.ncols() {
        return Err(Error::Shape(format!("targets are {}x{}, expected {}x{}", y.nrows(), y.ncols(), x.n(), model.v.ncols())));
    }
    let c = scale.factor(x.n());
    let mut r = y - &fwd.out;
    center_rows(&mut r);
    let data_loss = 0.5 * c * r.norm_squared();
    let g_f = numkit::mult(&r, &model.v);

    let mut dv = model.v.clone() * eta;
    gemm(-c, fwd.f(), true, &r, false, 1.0, &mut dv);
    let mut df = g_f.clone() * (-c);
    let depth = model.hidden.len();
    let mut dh = vec![Mat::zeros(0, 0); depth];
    for l in (0..depth).rev() {
        let w = &model.hidden[l];
        let mut dz = df.clone();
        dz.zip_apply(&fwd.pre[l], |g, z| *g *= model.act.df(z));
        let mut dw = w.clone() * eta;
        if l == 0 {
            dw += x.back(&dz);
        } else {
            gemm(1.0, &fwd.feats[l - 1], true, &dz, false, 1.0, &mut dw);
            let mut prev = numkit::mult(&dz, w);
            if model.residual && w.nrows() == w.ncols() {
                prev += &df;
            }
            df = prev;
        }
        dh[l] = dw;
    }
    let loss = data_loss + 0.5 * eta * model.sq_norm();
    if !loss.is_finite() {
        return Err(Error::Invalid("non-finite loss".into()));
    }
    Ok(Grads { loss, data_loss, hidden: dh, v: dv, g_f, fwd })
}

/// Ridge top layer `V = (F̃ᵀF̃ + ηI)⁻¹F̃ᵀỸ`.
pub fn ridge_top(f: &Mat, y: &Mat, eta: f64) -> Result<Mat> {
    let ft = centered(f);
    let yt = centered(y);
    let mut a = numkit::tmul(&ft, &ft);
    for i in 0..a.nrows() {
        a[(i, i)] += eta;
    }
    let b = numkit::tmul(&ft, &yt);
    numkit::solve_spd(&a, &b).map_err(|e| match e {
        Error::NotPositiveDefinite => Error::Invalid("singular ridge system (eta = 0 with rank-deficient features)".into()),
        other => other,
    })
}

/// Per-class offset `mean(Y) − mean(Ŷ)` over the training rows. The
/// centered loss never sees it, so predictions add it back.
pub fn implied_bias(out: &Mat, y: &Mat) -> Vec<f64> {
    let n = out.nrows().max(1) as f64;
    (0..out.ncols()).map(|j| (y.column(j).sum() - out.column(j).sum()) / n).collect()
}

/// `logits + 1·biasᵀ`
pub fn with_bias(logits: &Mat, bias: &[f64]) -> Mat {
    let mut out = logits.clone();
    for (j, b) in bias.iter().enumerate() {
        out.column_mut(j).add_scalar_mut(*b);
    }
    out
}

/// Row-argmax accuracy with ties broken toward the lowest index.
pub fn accuracy(logits: &Mat, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return f64::NAN;
    }
    let mut hits = 0;
    for (i, &lab) in labels.iter().enumerate() {
        let row = logits.row(i);
        let mut best = 0;
        for j in 1..row.len() {
            if row[j] > row[best] {
                best = j;
            }
        }
        if best == lab {
            hits += 1;
        }
    }
    hits as f64 / labels.len() as f64
}

/// Gram-structure diagnostics of the hidden features.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagRecord {
    pub diag_ftf: f64,
    pub diag_fft: f64,
    pub align_gf: f64,
    /// Set when an input had zero norm and a value is undefined (NaN).
    pub flagged: bool,
}

/// `diag_err(F̃ᵀF̃)`, `diag_err(P⊥₁FFᵀ)` and `cos(G_F, ỸỸᵀF)`.
pub fn diagnostics(f: &Mat, g_f: &Mat, y_tilde: &Mat) -> DiagRecord {
    let ft = centered(f);
    let ftf = numkit::tmul(&ft, &ft);
    let fft = numkit::mult(&ft, f);
    let target = numkit::mul(y_tilde, &numkit::tmul(y_tilde, f));
    let a = numkit::diag_err(&ftf);
    let b = numkit::diag_err(&fft);
    let c = numkit::cosine(g_f, &target);
    DiagRecord {
        diag_ftf: a.unwrap_or(f64::NAN),
        diag_fft: b.unwrap_or(f64::NAN),
        align_gf: c.unwrap_or(f64::NAN),
        flagged: a.is_none() || b.is_none() || c.is_none(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Gd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
    /// Polar-factor updates on hidden layers with Adam on the output layer.
    Muon { momentum: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
    pub fn muon() -> Self {
        Optimizer::Muon { momentum: 0.95, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Where weight decay enters for adaptive optimizers. Plain GD always
/// takes it through the gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayMode {
    /// `η·W` is part of the gradient fed to the optimizer.
    #[default]
    Coupled,
    /// `W ← (1 − lr·η)·W` before the optimizer step.
    Decoupled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub threshold: f64,
    pub loss_scale: LossScale,
    pub decay_mode: DecayMode,
    /// Stop at the first evaluation where both accuracies pass `threshold`.
    pub stop_when_generalized: bool,
    /// Compute the Gram diagnostics at every evaluation (costs `O(n²K)`).
    pub diagnostics: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            weight_decay: 2e-4,
            optimizer: Optimizer::adam(),
            epochs: 1000,
            eval_every: 10,
            seed: 0,
            threshold: 0.99,
            loss_scale: LossScale::PerSample,
            decay_mode: DecayMode::Coupled,
            stop_when_generalized: false,
            diagnostics: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.lr > 0.0) {
            errs.push(format!("lr must be > 0 (got {})", self.lr));
        }
        if !(self.weight_decay >= 0.0) {
            errs.push(format!("weight_decay must be >= 0 (got {})", self.weight_decay));
        }
        if self.epochs == 0 {
            errs.push("epochs must be >= 1".to_string());
        }
        if self.eval_every == 0 {
            errs.push("eval_every must be >= 1".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(errs.join("; ")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub gf_norm: f64,
    pub dw_cos: f64,
    pub dv_cos: f64,
    pub diag_ftf: f64,
    pub diag_fft: f64,
    pub align_gf: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub records: Vec<EvalRecord>,
    pub first_train_epoch: Option<usize>,
    pub first_test_epoch: Option<usize>,
    pub diverged_at: Option<usize>,
    pub epochs_run: usize,
}

pub const RUNLOG_HEADER: &str = "epoch,train_loss,test_loss,train_acc,test_acc,gf_norm,dW_cos,dV_cos,diag_ftf,diag_fft,align_gf";

/// `%.9g`-style formatting.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.8e}", x);
    let (mant, e) = sci.split_once('e').expect("scientific format");
    let e: i32 = e.parse().expect("exponent");
    if (-5..9).contains(&e) {
        let decimals = (8 - e).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let mant = if mant.contains('.') { mant.trim_end_matches('0').trim_end_matches('.') } else { mant };
        format!("{mant}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
    }
}

impl RunLog {
    pub fn final_record(&self) -> Option<&EvalRecord> {
        self.records.last()
    }

    /// Epochs between train and test first crossing the threshold.
    pub fn grokking_delay(&self) -> Option<i64> {
        match (self.first_train_epoch, self.first_test_epoch) {
            (Some(a), Some(b)) => Some(b as i64 - a as i64),
            _ => None,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(RUNLOG_HEADER);
        s.push('\n');
        for r in &self.records {
            let vals = [
                r.train_loss,
                r.test_loss,
                r.train_acc,
                r.test_acc,
                r.gf_norm,
                r.dw_cos,
                r.dv_cos,
                r.diag_ftf,
                r.diag_fft,
                r.align_gf,
            ];
            s.push_str(&r.epoch.to_string());
            for v in vals {
                s.push(',');
                s.push_str(&fmt_sig(v));
            }
            s.push('\n');
        }
        s
    }
}

struct AdamState {
    m: Mat,
    v: Mat,
}

impl AdamState {
    fn new(shape: &Mat) -> Self {
        AdamState { m: Mat::zeros(shape.nrows(), shape.ncols()), v: Mat::zeros(shape.nrows(), shape.ncols()) }
    }

    fn step(&mut self, w: &mut Mat, g: &Mat, lr: f64, t: usize, b1: f64, b2: f64, eps: f64) {
        let c1 = 1.0 - b1.powi(t as i32);
        let c2 = 1.0 - b2.powi(t as i32);
        let step = lr / c1;
        for (((wi, gi), mi), vi) in w.iter_mut().zip(g.iter()).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            *wi -= step * *mi / ((*vi / c2).sqrt() + eps);
        }
    }
}

enum OptState {
    Gd,
    Adam { hidden: Vec<AdamState>, v: AdamState },
    Muon { bufs: Vec<Mat>, v: AdamState },
}

/// One optimizer step on every weight matrix. Returns an error only if the
/// polar factor of a vanishing Muon buffer is requested.
fn apply_step(model: &mut ModelState, grads: &Grads, cfg: &TrainConfig, state: &mut OptState, t: usize) -> Result<()> {
    let lr = cfg.lr;
    match (state, cfg.optimizer) {
        (OptState::Gd, _) => {
            for (w, g) in model.hidden.iter_mut().zip(&grads.hidden) {
                *w -= g * lr;
            }
            model.v -= &grads.v * lr;
        }
        (OptState::Adam { hidden, v }, Optimizer::Adam { beta1, beta2, eps }) => {
            for ((w, g), s) in model.hidden.iter_mut().zip(&grads.hidden).zip(hidden.iter_mut()) {
                s.step(w, g, lr, t, beta1, beta2, eps);
            }
            v.step(&mut model.v, &grads.v, lr, t, beta1, beta2, eps);
        }
        (OptState::Muon { bufs, v }, Optimizer::Muon { momentum, beta1, beta2, eps }) => {
            for ((w, g), buf) in model.hidden.iter_mut().zip(&grads.hidden).zip(bufs.iter_mut()) {
                *buf *= momentum;
                *buf += g;
                if buf.norm() <= 1e-300 {
                    continue;
                }
                let o = numkit::polar_factor(buf)?;
                let shape = (w.nrows() as f64 / w.ncols() as f64).max(1.0).sqrt();
                *w -= o * (lr * shape);
            }
            v.step(&mut model.v, &grads.v, lr, t, beta1, beta2, eps);
        }
        _ => unreachable!("optimizer state matches config"),
    }
    Ok(())
}

fn labels(pairs: &[Pair]) -> Vec<usize> {
    pairs.iter().map(|p| p.h).collect()
}

/// Full-batch training on the dataset's training split. Deterministic given
/// the model and config. Divergence (loss above 1e12 or non-finite) stops
/// the run and is recorded in [`RunLog::diverged_at`].
pub fn train(model: &mut ModelState, data: &Dataset, cfg: &TrainConfig) -> Result<RunLog> {
    cfg.validate()?;
    let m = data.table.m;
    let tr = data.train_pairs();
    let te = data.test_pairs();
    let (_, ytr) = one_hot(&data.table, &data.train);
    let (_, yte) = one_hot(&data.table, &data.test);
    let ytr_tilde = centered(&ytr);
    let ltr = labels(&tr);
    let lte = labels(&te);
    let xin = Inputs::Pairs { m, pairs: &tr };
    let xte = Inputs::Pairs { m, pairs: &te };

    let adaptive = !matches!(cfg.optimizer, Optimizer::Gd);
    let grad_eta = if adaptive && cfg.decay_mode == DecayMode::Decoupled { 0.0 } else { cfg.weight_decay };
    let mut state = match cfg.optimizer {
        Optimizer::Gd => OptState::Gd,
        Optimizer::Adam { .. } => {
            OptState::Adam { hidden: model.hidden.iter().map(AdamState::new).collect(), v: AdamState::new(&model.v) }
        }
        Optimizer::Muon { .. } => OptState::Muon {
            bufs: model.hidden.iter().map(|w| Mat::zeros(w.nrows(), w.ncols())).collect(),
            v: AdamState::new(&model.v),
        },
    };

    let mut log = RunLog::default();
    let thr = cfg.threshold;
    for epoch in 0..=cfg.epochs {
        let grads = match loss_and_grads(model, xin, &ytr, grad_eta, cfg.loss_scale) {
            Ok(g) if g.loss.abs() <= 1e12 => g,
            Ok(_) | Err(_) => {
                log.diverged_at = Some(epoch);
                log.epochs_run = epoch;
                return Ok(log);
            }
        };
        let is_eval = epoch % cfg.eval_every == 0 || epoch == cfg.epochs;
        let mut pending = None;
        if is_eval {
            let bias = implied_bias(&grads.fwd.out, &ytr);
            let train_acc = accuracy(&with_bias(&grads.fwd.out, &bias), &ltr);
            let (test_loss, test_acc) = if te.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                let out = forward(model, xte)?.out;
                let mut r = &yte - &out;
                center_rows(&mut r);
                (0.5 * cfg.loss_scale.factor(te.len()) * r.norm_squared(), accuracy(&with_bias(&out, &bias), &lte))
            };
            let diag = if cfg.diagnostics {
                diagnostics(grads.fwd.f(), &grads.g_f, &ytr_tilde)
            } else {
                DiagRecord { diag_ftf: f64::NAN, diag_fft: f64::NAN, align_gf: f64::NAN, flagged: true }
            };
            if log.first_train_epoch.is_none() && train_acc >= thr {
                log.first_train_epoch = Some(epoch);
            }
            if log.first_test_epoch.is_none() && test_acc >= thr {
                log.first_test_epoch = Some(epoch);
            }
            pending = Some((
                EvalRecord {
                    epoch,
                    train_loss: grads.data_loss,
                    test_loss,
                    train_acc,
                    test_acc,
                    gf_norm: grads.g_f.norm(),
                    dw_cos: f64::NAN,
                    dv_cos: f64::NAN,
                    diag_ftf: diag.diag_ftf,
                    diag_fft: diag.diag_fft,
                    align_gf: diag.align_gf,
                },
                model.hidden[0].clone(),
                model.v.clone(),
            ));
        }
        let done = epoch == cfg.epochs
            || (cfg.stop_when_generalized
                && pending.as_ref().is_some_and(|(r, _, _)| r.train_acc >= thr && r.test_acc >= thr));
        if !done {
            if adaptive && cfg.decay_mode == DecayMode::Decoupled && cfg.weight_decay > 0.0 {
                let shrink = 1.0 - cfg.lr * cfg.weight_decay;
                for w in model.hidden.iter_mut() {
                    *w *= shrink;
                }
                model.v *= shrink;
            }
            apply_step(model, &grads, cfg, &mut state, epoch + 1)?;
        }
        if let Some((mut rec, w0, v0)) = pending {
            if !done {
                rec.dw_cos = numkit::cosine(&w0, &model.hidden[0]).map_or(f64::NAN, |c| 1.0 - c);
                rec.dv_cos = numkit::cosine(&v0, &model.v).map_or(f64::NAN, |c| 1.0 - c);
            }
            log.records.push(rec);
        }
        if done {
            log.epochs_run = epoch;
            break;
        }
    }
    Ok(log)
}
