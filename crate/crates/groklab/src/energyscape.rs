//! The Stage-II energy `ℰ(w) = ½‖Ỹᵀσ(Xw)‖²`, projected ascent on the unit
//! sphere, irrep classification of the maxima, flatness, the modulated
//! energy `ℰ_S`, memorization profiles and vertex stability under
//! subsampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groupkit::{real_projector, vertex_energy, Group, IrrepCatalog};
use crate::netdyn::Activation;
use crate::numkit::{self, Mat};
use crate::rng;
use crate::taskgen::{Pair, PairTable, WeightedPairs};

/// Rows `(a, b) ↦ h` with per-row weights `ω_i`, seen through the centered
/// target. With `c_h` the centering counts and `N` their sum, the energy
/// is `½Σ_h e_h²` where `e_h = Σ_{i: h_i = h} ω_iσ_i − (c_h/N)Σ_i ω_iσ_i`.
///
/// Unit weights and `c_h` = row counts give exactly `Ỹᵀσ(Xw)`; zero counts
/// give the uncentered single-target energy.
#[derive(Clone, Debug)]
pub struct Task {
    pub m: usize,
    pub rows: Vec<Pair>,
    pub weights: Vec<f64>,
    pub act: Activation,
    pub counts: Vec<f64>,
}

impl Task {
    pub fn from_rows(m: usize, rows: Vec<Pair>, act: Activation) -> Self {
        let mut counts = vec![0.0; m];
        for r in &rows {
            counts[r.h] += 1.0;
        }
        let weights = vec![1.0; rows.len()];
        Task { m, rows, weights, act, counts }
    }

    pub fn full(table: &PairTable, act: Activation) -> Self {
        Self::from_rows(table.m, table.rows.clone(), act)
    }

    /// Single-target task; the target column has nothing to center against.
    pub fn weighted(wp: &WeightedPairs, act: Activation) -> Self {
        Task { m: wp.m, rows: wp.rows.clone(), weights: wp.weights.clone(), act, counts: vec![0.0; wp.m] }
    }

    /// Horvitz–Thompson version of the full task from the kept rows of a
    /// Bernoulli(`p`) subsample: kept rows weigh `1/p`, centering uses the
    /// full-task counts, so `e_h = ẑ_h − mean(ẑ)`.
    pub fn horvitz_thompson(table: &PairTable, kept: &[usize], p: f64, act: Activation) -> Self {
        let m = table.m;
        let rows: Vec<Pair> = kept.iter().map(|&i| table.rows[i]).collect();
        let weights = vec![1.0 / p; rows.len()];
        let mut counts = vec![0.0; m];
        for r in &table.rows {
            counts[r.h] += 1.0;
        }
        Task { m, rows, weights, act, counts }
    }

    pub fn dim(&self) -> usize {
        2 * self.m
    }

    fn n_center(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Centered target sums `e` (length `M`).
    pub fn target_vector(&self, w: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut z = vec![0.0; m];
        let mut tot = 0.0;
        for (r, om) in self.rows.iter().zip(&self.weights) {
            let s = om * self.act.f(w[r.a] + w[m + r.b]);
            z[r.h] += s;
            tot += s;
        }
        let n = self.n_center();
        if n > 0.0 {
            for (zh, c) in z.iter_mut().zip(&self.counts) {
                *zh -= c * tot / n;
            }
        }
        z
    }

    /// Chain rule from `∂ℰ/∂e = q` back to `w`.
    fn pull_back(&self, w: &[f64], q: &[f64]) -> Vec<f64> {
        let m = self.m;
        let n = self.n_center();
        let kappa = if n > 0.0 { q.iter().zip(&self.counts).map(|(a, c)| a * c).sum::<f64>() / n } else { 0.0 };
        let mut g = vec![0.0; 2 * m];
        for (r, om) in self.rows.iter().zip(&self.weights) {
            let d = om * (q[r.h] - kappa) * self.act.df(w[r.a] + w[m + r.b]);
            g[r.a] += d;
            g[m + r.b] += d;
        }
        g
    }
}

/// Which landscape to climb.
#[derive(Clone, Debug)]
pub enum Objective {
    Energy,
    /// `½ eᵀK_S e` with `K_S` the real projector onto the unsuppressed irreps.
    Modulated(Mat),
}

impl Objective {
    pub fn value_grad(&self, w: &[f64], task: &Task) -> (f64, Vec<f64>) {
        let e = task.target_vector(w);
        match self {
            Objective::Energy => {
                let val = 0.5 * e.iter().map(|x| x * x).sum::<f64>();
                (val, task.pull_back(w, &e))
            }
            Objective::Modulated(k) => {
                let ev = nalgebra::DVector::from_column_slice(&e);
                let q = k * &ev;
                let val = 0.5 * ev.dot(&q);
                (val, task.pull_back(w, q.as_slice()))
            }
        }
    }

    pub fn value(&self, w: &[f64], task: &Task) -> f64 {
        let e = task.target_vector(w);
        match self {
            Objective::Energy => 0.5 * e.iter().map(|x| x * x).sum::<f64>(),
            Objective::Modulated(k) => {
                let ev = nalgebra::DVector::from_column_slice(&e);
                0.5 * ev.dot(&(k * &ev))
            }
        }
    }
}

/// `ℰ(w) = ½‖Ỹᵀσ(Xw)‖²`
pub fn energy(w: &[f64], task: &Task) -> f64 {
    Objective::Energy.value(w, task)
}

/// `∇ℰ = XᵀD(w)ỸỸᵀσ(Xw)` with `D = diag(σ′(Xw))`.
pub fn energy_grad(w: &[f64], task: &Task) -> Vec<f64> {
    Objective::Energy.value_grad(w, task).1
}

/// Real projector `K_S = Σ_{k ∉ S ∪ {0}} Π_k` (conjugate pairs merged).
pub fn modulation_kernel(catalog: &IrrepCatalog, g: &Group, suppressed: &[usize]) -> Result<Mat> {
    for &k in suppressed {
        catalog.get(k)?;
    }
    let m = g.order();
    let mut kmat = Mat::zeros(m, m);
    for e in &catalog.entries {
        if e.k == 0 || suppressed.contains(&e.k) || suppressed.contains(&e.partner) {
            continue;
        }
        let p = crate::groupkit::isotypic_projector(catalog, e.k, g)?;
        kmat += p.map(|z| z.re);
    }
    Ok(kmat)
}

/// `ℰ_S(w)` and its gradient.
pub fn modulated_energy(w: &[f64], task: &Task, kernel: &Mat) -> (f64, Vec<f64>) {
    Objective::Modulated(kernel.clone()).value_grad(w, task)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AscentConfig {
    pub lr: f64,
    pub max_steps: usize,
    pub tol: f64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig { lr: 0.1, max_steps: 20_000, tol: 1e-8 }
    }
}

/// Irrep classification of a converged weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    /// Representative irrep id (smaller id of a conjugate pair).
    pub label: usize,
    /// `(k, c_k)` per class, trivial class included.
    pub masses: Vec<(usize, f64)>,
    pub c_max: f64,
    pub sign: i8,
    pub struct_residual: f64,
    /// `|‖Π_k u‖² − ‖Π_k v‖²|` for the label class. Unlike `struct_residual`
    /// this is blind to the relative phase of `u` and `v` inside a complex pair.
    pub balance: f64,
    pub theory_energy: f64,
    pub single_irrep: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AscentResult {
    pub w: Vec<f64>,
    pub energy: f64,
    pub steps: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub class: Option<Classification>,
    /// `(min |λ|, max λ, max |λ|)` of the tangential Hessian.
    pub flat: Option<(f64, f64, f64)>,
}

fn normalize(w: &mut [f64]) -> f64 {
    let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        w.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn tangential(w: &[f64], g: &[f64]) -> Vec<f64> {
    let c: f64 = w.iter().zip(g).map(|(a, b)| a * b).sum();
    g.iter().zip(w).map(|(gi, wi)| gi - c * wi).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Projected gradient ascent on `ℰ` over the unit sphere.
pub fn ascend(w0: &[f64], task: &Task, cfg: &AscentConfig) -> Result<AscentResult> {
    ascend_objective(w0, task, &Objective::Energy, cfg)
}

/// Projected ascent: step along the tangential gradient, renormalize, and
/// halve the step (at most 30 times) whenever the value would drop. A step
/// that ties within rounding is still taken if it shrinks the gradient.
pub fn ascend_objective(w0: &[f64], task: &Task, obj: &Objective, cfg: &AscentConfig) -> Result<AscentResult> {
    if w0.len() != task.dim() {
        return Err(Error::Shape(format!("w has length {}, task needs {}", w0.len(), task.dim())));
    }
    let mut w = w0.to_vec();
    if normalize(&mut w) == 0.0 {
        return Err(Error::Invalid("initial weight is zero".into()));
    }
    let (mut val, mut g) = obj.value_grad(&w, task);
    let mut gt = tangential(&w, &g);
    let mut lr = cfg.lr;
    let mut steps = 0;
    while steps < cfg.max_steps && norm(&gt) > cfg.tol {
        let mut accepted = false;
        for _ in 0..=30 {
            let mut trial: Vec<f64> = w.iter().zip(&gt).map(|(a, b)| a + lr * b).collect();
            normalize(&mut trial);
            let (tv, tg) = obj.value_grad(&trial, task);
            let tie = tv >= val - 8.0 * f64::EPSILON * val.abs() && norm(&tangential(&trial, &tg)) < norm(&gt);
            if tv >= val || tie {
                w = trial;
                val = tv;
                g = tg;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        steps += 1;
        if !accepted {
            break;
        }
        gt = tangential(&w, &g);
        lr = (lr * 1.25).min(cfg.lr);
    }
    let grad_norm = norm(&gt);
    Ok(AscentResult { w, energy: val, steps, grad_norm, converged: grad_norm <= cfg.tol, class: None, flat: None })
}

/// Real isotypic projectors of a group, one per class, for repeated use.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub group: Group,
    pub catalog: IrrepCatalog,
    pub projectors: Vec<(usize, Mat)>,
}

impl Classifier {
    pub fn new(group: &Group) -> Result<Self> {
        let catalog = group.catalog().ok_or_else(|| Error::NoCatalog(group.name().to_string()))?;
        Self::with_catalog(group, catalog)
    }

    pub fn with_catalog(group: &Group, catalog: IrrepCatalog) -> Result<Self> {
        let projectors = catalog
            .classes()
            .into_iter()
            .map(|k| real_projector(&catalog, k, group).map(|p| (k, p)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Classifier { group: group.clone(), catalog, projectors })
    }

    pub fn projector(&self, k: usize) -> Result<&Mat> {
        self.projectors.iter().find(|(j, _)| *j == k).map(|(_, p)| p).ok_or(Error::UnknownIrrep(k))
    }

    /// `c_k = ‖Π_k u‖² + ‖Π_k v‖²`, argmax label, sign and structure residual.
    pub fn classify(&self, w: &[f64]) -> Classification {
        let m = self.group.order();
        let u = nalgebra::DVector::from_column_slice(&w[..m]);
        let v = nalgebra::DVector::from_column_slice(&w[m..2 * m]);
        let masses: Vec<(usize, f64)> =
            self.projectors.iter().map(|(k, p)| (*k, (p * &u).norm_squared() + (p * &v).norm_squared())).collect();
        let (label, c_max) =
            masses.iter().filter(|(k, _)| *k != 0).fold((0, -1.0), |acc, &(k, c)| if c > acc.1 { (k, c) } else { acc });
        let pu = self.group.apply_inverse(&w[..m]);
        let resid = |s: f64| (0..m).map(|a| (w[m + a] - s * pu[a]).powi(2)).sum::<f64>().sqrt();
        let (rp, rn) = (resid(1.0), resid(-1.0));
        let (sign, struct_residual) = if rp <= rn { (1, rp) } else { (-1, rn) };
        let balance = self
            .projector(label)
            .map(|p| ((p * &u).norm_squared() - (p * &v).norm_squared()).abs())
            .unwrap_or(f64::NAN);
        let theory_energy = vertex_energy(&self.catalog, label, m).unwrap_or(f64::NAN);
        Classification { label, masses, c_max, sign, struct_residual, balance, theory_energy, single_irrep: c_max >= 0.99 }
    }

    /// Fraction of `w` lying in the isotypic component of class `k` (both halves).
    pub fn component_norm(&self, w: &[f64], k: usize) -> Result<f64> {
        let m = self.group.order();
        let p = self.projector(k)?;
        let u = nalgebra::DVector::from_column_slice(&w[..m]);
        let v = nalgebra::DVector::from_column_slice(&w[m..2 * m]);
        Ok(((p * &u).norm_squared() + (p * &v).norm_squared()).sqrt())
    }
}

pub fn classify_maximum(w: &[f64], catalog: &IrrepCatalog, g: &Group) -> Result<Classification> {
    Ok(Classifier::with_catalog(g, catalog.clone())?.classify(w))
}

/// Orthonormal basis of `w⊥` (columns) from a Householder reflection.
pub fn tangent_basis(w: &[f64]) -> Mat {
    let n = w.len();
    let mut v: Vec<f64> = w.to_vec();
    let s = if w[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += s;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let h = Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 2.0 * v[i] * v[j] / vv);
    h.columns(1, n - 1).into_owned()
}

/// Sphere-projected Hessian at `w` by central differences (step `eps`) of
/// the tangential gradient, symmetrized.
pub fn projected_hessian(w: &[f64], task: &Task, obj: &Objective, eps: f64) -> Mat {
    let b = tangent_basis(w);
    let d = b.ncols();
    let tgrad = |x: &[f64]| {
        let nx2: f64 = x.iter().map(|t| t * t).sum();
        let g = obj.value_grad(x, task).1;
        let c: f64 = x.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / nx2;
        nalgebra::DVector::from_iterator(x.len(), g.iter().zip(x).map(|(gi, xi)| gi - c * xi))
    };
    let mut hmat = Mat::zeros(d, d);
    for j in 0..d {
        let bj = b.column(j);
        let plus: Vec<f64> = w.iter().zip(bj.iter()).map(|(a, c)| a + eps * c).collect();
        let minus: Vec<f64> = w.iter().zip(bj.iter()).map(|(a, c)| a - eps * c).collect();
        let diff = (tgrad(&plus) - tgrad(&minus)) / (2.0 * eps);
        let col = b.transpose() * diff;
        hmat.set_column(j, &col);
    }
    (&hmat + hmat.transpose()) * 0.5
}

/// `(min |λ|, max λ, max |λ|)` of the sphere-projected Hessian.
pub fn flatness(w: &[f64], task: &Task, obj: &Objective) -> Result<(f64, f64, f64)> {
    let h = projected_hessian(w, task, obj, 1e-4);
    let ev = numkit::sym_eigenvalues(&h)?;
    let min_abs = ev.iter().fold(f64::INFINITY, |a, x| a.min(x.abs()));
    let max = ev.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x));
    let radius = ev.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    Ok((min_abs, max, radius))
}

/// Ascend and, when converged, attach classification and flatness.
pub fn ascend_and_classify(
    w0: &[f64],
    task: &Task,
    obj: &Objective,
    cfg: &AscentConfig,
    classifier: Option<&Classifier>,
    with_flatness: bool,
) -> Result<AscentResult> {
    let mut res = ascend_objective(w0, task, obj, cfg)?;
    if let Some(c) = classifier {
        res.class = Some(c.classify(&res.w));
    }
    if with_flatness && res.converged {
        res.flat = Some(flatness(&res.w, task, obj)?);
    }
    Ok(res)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Nondecreasing,
    StrictlyDecreasing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemorizationKind {
    Focused,
    Spreading,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemorizationProfile {
    pub act: Activation,
    pub class: Monotonicity,
    /// Predicted pair pre-activations `s_g = u_g + v_{g⁻¹h}`.
    pub s: Vec<f64>,
    pub lambda: f64,
    pub kind: MemorizationKind,
}

fn phi(act: &Activation, x: f64) -> f64 {
    act.df(x) / x
}

/// Monotonicity class of `φ(x) = σ′(x)/x` sampled on a log grid over `(1e-6, √2]`.
pub fn phi_class(act: &Activation) -> Result<Monotonicity> {
    let n = 400;
    let (lo, hi) = (1e-6f64.ln(), 2f64.sqrt().ln());
    let vals: Vec<f64> = (0..n).map(|i| phi(act, (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp())).collect();
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let diffs: Vec<f64> = vals.windows(2).map(|p| p[1] - p[0]).collect();
    if diffs.iter().all(|d| *d >= -1e-12 * scale) {
        Ok(Monotonicity::Nondecreasing)
    } else if diffs.iter().all(|d| *d < 0.0) {
        Ok(Monotonicity::StrictlyDecreasing)
    } else {
        Err(Error::AmbiguousMonotonicity(act.to_string()))
    }
}

/// Smallest `x > 0` with `φ(x) ≤ y` for strictly decreasing `φ`, or 0 when
/// `y` is at or above `φ(0⁺)`.
fn phi_inverse(act: &Activation, y: f64) -> f64 {
    let near0 = phi(act, 1e-12);
    if y >= near0 {
        return 0.0;
    }
    let mut hi = 1.0;
    while phi(act, hi) > y {
        hi *= 2.0;
        if hi > 1e12 {
            return hi;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == 0.0 || phi(act, mid) > y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// KKT memorization profile for weights `p_g`.
pub fn memorization_profile(p: &[f64], act: &Activation) -> Result<MemorizationProfile> {
    if p.is_empty() || p.iter().any(|x| *x < 0.0) {
        return Err(Error::Invalid("weights must be nonnegative and non-empty".into()));
    }
    let total: f64 = p.iter().sum();
    let p: Vec<f64> = p.iter().map(|x| x / total).collect();
    let class = phi_class(act)?;
    match class {
        Monotonicity::Nondecreasing => {
            let best = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
            let mut s = vec![0.0; p.len()];
            s[best] = 2f64.sqrt();
            let lambda = 0.5 * p[best] * phi(act, s[best]);
            Ok(MemorizationProfile { act: *act, class, s, lambda, kind: MemorizationKind::Focused })
        }
        Monotonicity::StrictlyDecreasing => {
            let profile = |lam: f64| -> Vec<f64> {
                p.iter().map(|&pg| if pg > 0.0 { phi_inverse(act, 2.0 * lam / pg) } else { 0.0 }).collect()
            };
            let mass = |s: &[f64]| s.iter().map(|x| x * x).sum::<f64>();
            let (mut lo, mut hi) = (1e-12, 1.0);
            while mass(&profile(hi)) > 2.0 {
                hi *= 2.0;
            }
            while mass(&profile(lo)) < 2.0 && lo > 1e-300 {
                lo *= 1e-3;
            }
            for _ in 0..300 {
                let mid = (lo * hi).sqrt();
                if mass(&profile(mid)) > 2.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi / lo - 1.0 < 1e-15 {
                    break;
                }
            }
            let lambda = (lo * hi).sqrt();
            let mut s = profile(lambda);
            let scale = (2.0 / mass(&s)).sqrt();
            s.iter_mut().for_each(|x| *x *= scale);
            Ok(MemorizationProfile { act: *act, class, s, lambda, kind: MemorizationKind::Spreading })
        }
    }
}

/// Pair pre-activations `u_g + v_{g⁻¹h}` of a weight on a single-target task.
pub fn pair_preactivations(w: &[f64], wp: &WeightedPairs) -> Vec<f64> {
    wp.rows.iter().map(|r| w[r.a] + w[wp.m + r.b]).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Destabilized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub verdict: Verdict,
    /// Largest `(ℰ̂(w_δ) − ℰ̂(w*))/‖δ‖²` over pure-leak probes; negative means
    /// every probed leak direction is downhill.
    pub leak_margin: f64,
    pub worst_angle: f64,
    pub probes: usize,
}

pub const PROBE_RADIUS: f64 = 0.05;
pub const RETURN_RADIUS: f64 = 0.1;
pub const PROBES: usize = 16;

/// Re-ascend on a subsampled task from 16 tangential perturbations of a
/// full-task vertex; stable iff every probe returns within 0.1 rad of the
/// vertex's isotypic component with the same label.
pub fn vertex_stability(
    w_star: &[f64],
    sub: &Task,
    classifier: &Classifier,
    cfg: &AscentConfig,
    seed: u64,
) -> Result<Stability> {
    let label = classifier.classify(w_star).label;
    let m = classifier.group.order();
    let proj = classifier.projector(label)?;
    let in_component = |x: &[f64]| -> Vec<f64> {
        let u = proj * nalgebra::DVector::from_column_slice(&x[..m]);
        let v = proj * nalgebra::DVector::from_column_slice(&x[m..]);
        u.iter().chain(v.iter()).copied().collect()
    };
    let mut r = rng::stream(seed, 0x57ab);
    let base = energy(w_star, sub);
    let mut stable = true;
    let mut worst_angle: f64 = 0.0;
    let mut margin = f64::NEG_INFINITY;
    for _ in 0..PROBES {
        let raw = rng::normal_vec(&mut r, 2 * m);
        let mut d = tangential(w_star, &raw);
        let nd = norm(&d);
        d.iter_mut().for_each(|x| *x *= PROBE_RADIUS / nd);
        let start: Vec<f64> = w_star.iter().zip(&d).map(|(a, b)| a + b).collect();
        let res = ascend(&start, sub, cfg)?;
        let comp = norm(&in_component(&res.w)).min(1.0);
        let angle = comp.acos();
        worst_angle = worst_angle.max(angle);
        if angle > RETURN_RADIUS || classifier.classify(&res.w).label != label {
            stable = false;
        }
        let inside = in_component(&d);
        let outside: Vec<f64> = d.iter().zip(&inside).map(|(a, b)| a - b).collect();
        let leak = tangential(w_star, &outside);
        let nl = norm(&leak);
        if nl > 1e-12 {
            let mut probe: Vec<f64> = w_star.iter().zip(&leak).map(|(a, b)| a + PROBE_RADIUS * b / nl).collect();
            normalize(&mut probe);
            margin = margin.max((energy(&probe, sub) - base) / (PROBE_RADIUS * PROBE_RADIUS));
        }
    }
    Ok(Stability {
        verdict: if stable { Verdict::Stable } else { Verdict::Destabilized },
        leak_margin: margin,
        worst_angle,
        probes: PROBES,
    })
}
