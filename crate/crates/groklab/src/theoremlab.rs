//! Self-contained numeric checks of the structural results: backpropagated
//! gradient structure at init, feature repulsion, exact reconstruction by
//! isotypic quadratic features, Muon ascent, the coupon-collector picture of
//! node allocation, and the `log M / M` boundary law.

use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::groupkit::{isotypic_projector, Group, IrrepCatalog, IrrepKind};
use crate::netdyn::{self, Activation, Inputs, ModelSpec, ModelState};
use crate::numkit::{self, centered, CMat, Mat};
use crate::rng;
use crate::taskgen::{full_task, one_hot};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
}

impl Cmp {
    fn holds(self, value: f64, limit: f64) -> bool {
        match self {
            Cmp::Le => value <= limit,
            Cmp::Ge => value >= limit,
            Cmp::Lt => value < limit,
            Cmp::Gt => value > limit,
        }
    }
}

/// One measured number together with the bound it is held to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub name: String,
    pub value: f64,
    pub cmp: Cmp,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub check: String,
    pub params: serde_json::Value,
    pub pass: bool,
    pub claims: Vec<Claim>,
    /// Reported quantities that are not gated.
    pub stats: BTreeMap<String, f64>,
    pub seed: Option<u64>,
    pub seconds: f64,
}

impl VerifyReport {
    pub fn new(check: &str, params: serde_json::Value, seed: Option<u64>) -> Self {
        VerifyReport {
            check: check.to_string(),
            params,
            pass: true,
            claims: Vec::new(),
            stats: BTreeMap::new(),
            seed,
            seconds: 0.0,
        }
    }

    pub fn claim(&mut self, name: &str, value: f64, cmp: Cmp, limit: f64) -> bool {
        let pass = cmp.holds(value, limit);
        self.pass &= pass;
        self.claims.push(Claim { name: name.to_string(), value, cmp, limit, pass });
        pass
    }

    pub fn stat(&mut self, name: &str, value: f64) {
        self.stats.insert(name.to_string(), value);
    }

    pub fn finish(mut self, t0: Instant) -> Self {
        self.seconds = t0.elapsed().as_secs_f64();
        self
    }

    /// One line per claim, `PASS`/`FAIL` first.
    pub fn summary(&self) -> String {
        let mut s = format!("{} {}", if self.pass { "PASS" } else { "FAIL" }, self.check);
        for c in &self.claims {
            let op = match c.cmp {
                Cmp::Le => "<=",
                Cmp::Ge => ">=",
                Cmp::Lt => "<",
                Cmp::Gt => ">",
            };
            s.push_str(&format!("\n  [{}] {} = {:.6e} {} {:.3e}", if c.pass { "ok" } else { "xx" }, c.name, c.value, op, c.limit));
        }
        s
    }
}

/// Random-init features of the full `Z_M` task and their exact backpropagated
/// gradient with the ridge top layer.
pub struct GfProbe {
    pub diag_ftf: f64,
    pub diag_fft: f64,
    /// `‖F̃F̃ᵀ − αP⊥₁‖_F/‖F̃F̃ᵀ‖_F` with `α = tr/(n−1)`: the distance from the
    /// predicted `αI + β11ᵀ` structure after centering.
    pub fft_structure: f64,
    pub alignment: f64,
    pub gf_ratio: f64,
}

pub fn gf_probe(m: usize, k: usize, eta: f64, seed: u64) -> Result<GfProbe> {
    let g = Group::cyclic(m);
    let table = full_task(&g);
    let spec = ModelSpec {
        input_dim: 2 * m,
        width: k,
        outputs: m,
        depth: 1,
        act: Activation::Quadratic,
        residual: false,
        init_scale: 1.0,
    };
    let model = ModelState::init(&spec, seed);
    let x = Inputs::Pairs { m, pairs: &table.rows };
    let f = netdyn::forward(&model, x)?.feats.remove(0);
    let (_, y) = one_hot(&table, &(0..table.rows.len()).collect::<Vec<_>>());
    let ft = centered(&f);
    let yt = centered(&y);
    let v = if eta > 0.0 {
        netdyn::ridge_top(&f, &y, eta)?
    } else {
        ft.clone().pseudo_inverse(1e-10).map_err(|e| Error::Invalid(e.to_string()))? * &yt
    };
    let resid = &yt - numkit::mul(&ft, &v);
    let gf = numkit::mult(&resid, &v);
    let target = numkit::mul(&yt, &numkit::tmul(&yt, &ft));
    let ftf = numkit::tmul(&ft, &ft);
    let fft = numkit::mult(&ft, &ft);
    let n = ft.nrows();
    let alpha = fft.trace() / (n as f64 - 1.0);
    let mut structured = Mat::from_element(n, n, -alpha / n as f64);
    for i in 0..n {
        structured[(i, i)] += alpha;
    }
    let zero = || Error::Invalid("features vanish".into());
    Ok(GfProbe {
        diag_ftf: numkit::diag_err(&ftf).ok_or_else(zero)?,
        diag_fft: numkit::diag_err(&numkit::mult(&ft, &f)).ok_or_else(zero)?,
        fft_structure: (&fft - structured).norm() / fft.norm(),
        alignment: numkit::cosine(&gf, &target).unwrap_or(0.0),
        gf_ratio: gf.norm() / yt.norm(),
    })
}

/// Structure of `F̃ᵀF̃`, `P⊥₁FFᵀ` and the exact `G_F` at random init.
/// With `eta = 0` the top layer is the least-squares fit, and the check is
/// that `G_F` vanishes once the features interpolate.
pub fn check_gf_structure(m: usize, k: usize, eta: f64, seed: u64) -> Result<VerifyReport> {
    let t0 = Instant::now();
    if k < 64 && eta > 0.0 {
        return Err(Error::Invalid(format!("width {k} below 64")));
    }
    if eta < 0.0 {
        return Err(Error::Invalid(format!("negative weight decay {eta}")));
    }
    let mut rep = VerifyReport::new("gf_structure", json!({"M": m, "K": k, "eta": eta}), Some(seed));
    let p = gf_probe(m, k, eta, seed)?;
    rep.stat("diag_fft_structure", p.fft_structure);
    rep.stat("gf_ratio", p.gf_ratio);
    if eta == 0.0 {
        rep.stat("alignment", p.alignment);
        rep.stat("diag_ftf", p.diag_ftf);
        rep.stat("diag_fft", p.diag_fft);
        rep.claim("gf_ratio", p.gf_ratio, Cmp::Le, 1e-6);
    } else {
        rep.claim("diag_ftf", p.diag_ftf, Cmp::Le, 0.2);
        rep.claim("diag_fft", p.diag_fft, Cmp::Le, 0.2);
        rep.claim("alignment", p.alignment, Cmp::Ge, 0.9);
    }
    Ok(rep.finish(t0))
}

/// Median alignment over `seeds` for each width.
pub fn alignment_by_width(m: usize, widths: &[usize], eta: f64, seeds: &[u64]) -> Result<Vec<(usize, f64, f64)>> {
    let mut out = Vec::with_capacity(widths.len());
    for &k in widths {
        let mut al = Vec::with_capacity(seeds.len());
        let mut dg = Vec::with_capacity(seeds.len());
        for &s in seeds {
            let p = gf_probe(m, k, eta, s)?;
            al.push(p.alignment);
            dg.push(p.diag_ftf);
        }
        out.push((k, median(&mut al), median(&mut dg)));
    }
    Ok(out)
}

pub fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn inverse_spd(a: &Mat) -> Result<Mat> {
    numkit::solve_spd(a, &Mat::identity(a.nrows(), a.nrows()))
}

fn drop_columns(f: &Mat, j: usize, l: usize) -> Mat {
    let keep: Vec<usize> = (0..f.ncols()).filter(|&c| c != j && c != l).collect();
    f.select_columns(&keep)
}

/// Sign identity `sign(b_jl) = −sign(f̃_jᵀP_{η,−jl}f̃_l)` for
/// `B = (F̃ᵀF̃ + ηI)⁻¹`, on one feature matrix. Returns
/// `(checked, violations, skipped)`.
pub fn repulsion_signs(ft: &Mat, eta: f64) -> Result<(usize, usize, usize)> {
    let n = ft.nrows();
    let k = ft.ncols();
    let mut gram = numkit::tmul(ft, ft);
    for i in 0..k {
        gram[(i, i)] += eta;
    }
    let b = inverse_spd(&gram)?;
    let (mut checked, mut bad, mut skipped) = (0, 0, 0);
    for j in 0..k {
        for l in j + 1..k {
            let rest = drop_columns(ft, j, l);
            let mut a = numkit::mult(&rest, &rest);
            for i in 0..n {
                a[(i, i)] += eta;
            }
            let p = inverse_spd(&a)? * eta;
            let q = (ft.column(j).transpose() * &p * ft.column(l))[(0, 0)];
            if b[(j, l)].abs() <= 1e-10 || q.abs() <= 1e-10 {
                skipped += 1;
                continue;
            }
            checked += 1;
            if b[(j, l)].signum() != -q.signum() {
                bad += 1;
            }
        }
    }
    Ok((checked, bad, skipped))
}

/// `max |η(F̃F̃ᵀ + ηI)⁻¹ − (I − F̃(F̃ᵀF̃ + ηI)⁻¹F̃ᵀ)|`.
pub fn woodbury_gap(ft: &Mat, eta: f64) -> Result<f64> {
    let n = ft.nrows();
    let k = ft.ncols();
    let mut big = numkit::mult(ft, ft);
    for i in 0..n {
        big[(i, i)] += eta;
    }
    let lhs = inverse_spd(&big)? * eta;
    let mut small = numkit::tmul(ft, ft);
    for i in 0..k {
        small[(i, i)] += eta;
    }
    let rhs = Mat::identity(n, n) - ft * inverse_spd(&small)? * ft.transpose();
    Ok((lhs - rhs).amax())
}

pub fn check_repulsion(n: usize, k: usize, eta: f64, trials: usize, seed: u64) -> Result<VerifyReport> {
    let t0 = Instant::now();
    if !(n > k && k >= 2) || !(eta > 0.0) {
        return Err(Error::Invalid(format!("repulsion needs n > K >= 2 and eta > 0 (n={n}, K={k}, eta={eta})")));
    }
    let mut rep = VerifyReport::new("repulsion", json!({"n": n, "K": k, "eta": eta, "trials": trials}), Some(seed));
    let mut passed = 0usize;
    let mut pairs = 0usize;
    let mut skipped = 0usize;
    let mut wgap = 0.0f64;
    for t in 0..trials {
        let mut r = rng::stream(seed, t as u64);
        let ft = centered(&rng::normal_mat(&mut r, n, k, 1.0));
        let (c, bad, s) = repulsion_signs(&ft, eta)?;
        pairs += c;
        skipped += s;
        if bad == 0 {
            passed += 1;
        }
        wgap = wgap.max(woodbury_gap(&ft, eta)?);
    }
    rep.stat("pairs_checked", pairs as f64);
    rep.stat("pairs_skipped", skipped as f64);
    rep.claim("instances_passing", passed as f64, Cmp::Ge, trials as f64);
    rep.claim("woodbury_gap", wgap, Cmp::Le, 1e-10);
    Ok(rep.finish(t0))
}

/// Orthonormal basis (columns) of the range of a Hermitian projector.
fn range_basis(p: &CMat) -> Vec<Vec<Complex64>> {
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    for c in 0..p.ncols() {
        let mut v: Vec<Complex64> = p.column(c).iter().copied().collect();
        for _ in 0..2 {
            for b in &basis {
                let proj: Complex64 = b.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= proj * bi;
                }
            }
        }
        let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm > 1e-8 {
            basis.push(v.into_iter().map(|z| z / nrm).collect());
        }
    }
    basis
}

/// Complex quadratic features built from each nontrivial isotypic subspace.
///
/// For every orthonormal basis vector `e_a` of `H_k` and every pair `a < b`
/// the directions `e_a`, `(e_a + e_b)/√2`, `(e_a + i·e_b)/√2` are used as
/// `u`, the node is `w = [u; s·Pū]` for each sign in `signs`, and the
/// feature is the square of its pre-activation, centered over all rows.
/// Returns the features with a block id (the irrep) per column.
pub fn reconstruction_features(g: &Group, catalog: &IrrepCatalog, signs: &[f64]) -> Result<(CMat, Vec<usize>)> {
    let m = g.order();
    let table = full_task(g);
    let mut cols: Vec<Vec<Complex64>> = Vec::new();
    let mut blocks = Vec::new();
    let r2 = std::f64::consts::FRAC_1_SQRT_2;
    for k in 0..catalog.len() {
        if catalog.get(k)?.kind == IrrepKind::Trivial {
            continue;
        }
        let basis = range_basis(&isotypic_projector(catalog, k, g)?);
        let mut dirs: Vec<Vec<Complex64>> = basis.clone();
        for a in 0..basis.len() {
            for b in a + 1..basis.len() {
                dirs.push(basis[a].iter().zip(&basis[b]).map(|(x, y)| (x + y) * r2).collect());
                dirs.push(basis[a].iter().zip(&basis[b]).map(|(x, y)| (x + Complex64::i() * y) * r2).collect());
            }
        }
        for u in &dirs {
            for &s in signs {
                let mut col: Vec<Complex64> = table
                    .rows
                    .iter()
                    .map(|p| {
                        let z = u[p.a] + u[g.inv(p.b)].conj() * s;
                        z * z
                    })
                    .collect();
                let mean: Complex64 = col.iter().sum::<Complex64>() / col.len() as f64;
                for c in &mut col {
                    *c -= mean;
                }
                cols.push(col);
                blocks.push(k);
            }
        }
    }
    let n = m * m;
    let f = CMat::from_fn(n, cols.len(), |i, j| cols[j][i]);
    Ok((f, blocks))
}

pub struct ReconstructionFit {
    pub features: usize,
    pub rank: usize,
    pub residual: f64,
    pub off_block: f64,
}

pub fn reconstruction_fit(g: &Group, catalog: &IrrepCatalog, signs: &[f64]) -> Result<ReconstructionFit> {
    let (f, blocks) = reconstruction_features(g, catalog, signs)?;
    let table = full_task(g);
    let (_, y) = one_hot(&table, &(0..table.rows.len()).collect::<Vec<_>>());
    let yt = centered(&y).map(|v| Complex64::new(v, 0.0));
    let svd = f.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let v = svd.solve(&yt, tol).map_err(|e| Error::Invalid(e.to_string()))?;
    let resid = (&f * v - &yt).norm() / yt.norm();
    let gram = f.adjoint() * &f;
    let mut off = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            if blocks[i] != blocks[j] {
                off += gram[(i, j)].norm_sqr();
            }
        }
    }
    Ok(ReconstructionFit { features: f.ncols(), rank, residual: resid, off_block: off.sqrt() / gram.norm() })
}

/// Exact reconstruction of the centered target of `Z_M` from `2(M−1)`
/// complex quadratic features, one frequency and both signs at a time.
pub fn check_reconstruction(m: usize) -> Result<VerifyReport> {
    let t0 = Instant::now();
    if m % 2 == 0 || !(3..=31).contains(&m) {
        return Err(Error::Invalid(format!("reconstruction needs odd M in 3..=31, got {m}")));
    }
    let g = Group::cyclic(m);
    let cat = g.catalog().ok_or_else(|| Error::NoCatalog(g.name().to_string()))?;
    let fit = reconstruction_fit(&g, &cat, &[1.0, -1.0])?;
    let mut rep = VerifyReport::new("reconstruction", json!({"M": m}), None);
    rep.stat("features", fit.features as f64);
    rep.stat("rank", fit.rank as f64);
    rep.claim("rank_deficit", (fit.features - fit.rank) as f64, Cmp::Le, 0.0);
    rep.claim("residual", fit.residual, Cmp::Le, 1e-6);
    rep.claim("off_block", fit.off_block, Cmp::Le, 1e-8);
    Ok(rep.finish(t0))
}

/// Same construction on a non-abelian group. Reported only.
pub fn reconstruction_soft(g: &Group) -> Result<VerifyReport> {
    let t0 = Instant::now();
    let cat = g.catalog().ok_or_else(|| Error::NoCatalog(g.name().to_string()))?;
    let fit = reconstruction_fit(g, &cat, &[1.0, -1.0])?;
    let mut rep = VerifyReport::new("reconstruction_soft", json!({"group": g.name()}), None);
    rep.stat("features", fit.features as f64);
    rep.stat("rank", fit.rank as f64);
    rep.stat("residual", fit.residual);
    rep.stat("off_block", fit.off_block);
    Ok(rep.finish(t0))
}

/// `⟨polar(G), G⟩_F`, taken as 0 for `G = 0`.
pub fn muon_inner(g: &Mat) -> Result<f64> {
    match numkit::polar_factor(g) {
        Ok(o) => Ok(numkit::dot(&o, g)),
        Err(Error::ZeroMatrix) => Ok(0.0),
        Err(e) => Err(e),
    }
}

pub fn check_muon_ascent(shape: (usize, usize), trials: usize, seed: u64) -> Result<VerifyReport> {
    let t0 = Instant::now();
    if trials == 0 || shape.0 == 0 || shape.1 == 0 {
        return Err(Error::Invalid("muon check needs trials >= 1 and a nonempty shape".into()));
    }
    let mut rep = VerifyReport::new("muon_ascent", json!({"rows": shape.0, "cols": shape.1, "trials": trials}), Some(seed));
    let mut worst = 0.0f64;
    let mut min_inner = f64::INFINITY;
    for t in 0..trials {
        let mut r = rng::stream(seed, t as u64);
        let g = rng::normal_mat(&mut r, shape.0, shape.1, 1.0);
        let inner = muon_inner(&g)?;
        let oracle: f64 = numkit::singular_values(&g).iter().sum();
        worst = worst.max((inner - oracle).abs() / oracle.max(1.0));
        min_inner = min_inner.min(inner);
    }
    rep.stat("min_inner", min_inner);
    rep.claim("max_rel_gap", worst, Cmp::Le, 1e-8);
    Ok(rep.finish(t0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouponMode {
    Independent,
    MuonGuided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouponConfig {
    pub mu: Vec<f64>,
    pub shape: f64,
    pub trials: usize,
    pub mode: CouponMode,
    pub suppression: f64,
    pub seed: u64,
}

impl CouponConfig {
    pub fn new(mu: Vec<f64>, shape: f64, trials: usize, mode: CouponMode, seed: u64) -> Self {
        CouponConfig { mu, shape, trials, mode, suppression: 0.5, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.is_empty() || self.mu.iter().any(|&u| !(u > 0.0 && u <= 1.0)) {
            return Err(Error::Invalid("rates must lie in (0, 1]".into()));
        }
        if !(self.shape > 1.0) {
            return Err(Error::Invalid(format!("Frechet shape {} must exceed 1", self.shape)));
        }
        if self.trials < 100 {
            return Err(Error::Invalid(format!("{} trials, need at least 100", self.trials)));
        }
        if !(self.suppression > 0.0 && self.suppression <= 1.0) {
            return Err(Error::Invalid(format!("suppression {} outside (0, 1]", self.suppression)));
        }
        Ok(())
    }

    /// Selection probabilities `p_l = μ_lᵃ/Σμᵃ`.
    pub fn probabilities(&self) -> Vec<f64> {
        let w: Vec<f64> = self.mu.iter().map(|u| u.powf(self.shape)).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CouponStats {
    pub mean: f64,
    pub se: f64,
    /// Empirical winner frequencies over all draws made with unsuppressed rates.
    pub freq: Vec<f64>,
    pub draws: usize,
}

/// Frechet draw with CDF `exp(−x^{−a})`.
fn frechet(r: &mut rng::Stream, a: f64) -> f64 {
    let u = rng::uniform(r).max(f64::MIN_POSITIVE);
    (-u.ln()).powf(-1.0 / a)
}

/// Monte Carlo number of nodes needed to collect every mode.
pub fn coupon_sim(cfg: &CouponConfig) -> Result<CouponStats> {
    cfg.validate()?;
    let l = cfg.mu.len();
    let mut r = rng::stream(cfg.seed, 0xc0);
    let mut counts = vec![0usize; l];
    let mut draws = 0usize;
    let mut totals = Vec::with_capacity(cfg.trials);
    for _ in 0..cfg.trials {
        let mut have = vec![false; l];
        let mut left = l;
        let mut nodes = 0usize;
        while left > 0 {
            nodes += 1;
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for i in 0..l {
                let rate = if cfg.mode == CouponMode::MuonGuided && have[i] { cfg.mu[i] * cfg.suppression } else { cfg.mu[i] };
                let v = rate * frechet(&mut r, cfg.shape);
                if v > best_v {
                    best_v = v;
                    best = i;
                }
            }
            if cfg.mode == CouponMode::Independent || left == l {
                counts[best] += 1;
                draws += 1;
            }
            if !have[best] {
                have[best] = true;
                left -= 1;
            }
        }
        totals.push(nodes as f64);
    }
    let n = totals.len() as f64;
    let mean = totals.iter().sum::<f64>() / n;
    let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(CouponStats {
        mean,
        se: (var / n).sqrt(),
        freq: counts.iter().map(|&c| c as f64 / draws.max(1) as f64).collect(),
        draws,
    })
}

/// Exact expected collection time `∫(1 − Π(1 − e^{−p_l t}))dt` by
/// inclusion–exclusion over subsets.
pub fn coupon_expectation(p: &[f64]) -> Result<f64> {
    let l = p.len();
    if l == 0 || l > 24 {
        return Err(Error::Invalid(format!("exact expectation supports 1..=24 modes, got {l}")));
    }
    let mut total = 0.0;
    for mask in 1u32..(1u32 << l) {
        let s: f64 = (0..l).filter(|i| mask >> i & 1 == 1).map(|i| p[i]).sum();
        let sign = if mask.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
        total += sign / s;
    }
    Ok(total)
}

pub fn harmonic(l: usize) -> f64 {
    (1..=l).map(|i| 1.0 / i as f64).sum()
}

/// Muon-guided upper bound `fᵃ·T₀ + (1 − fᵃ)·L` for suppression factor `f`.
pub fn guided_bound(t0: f64, l: usize, shape: f64, suppression: f64) -> f64 {
    let q = suppression.powf(shape);
    q * t0 + (1.0 - q) * l as f64
}

/// Independent vs Muon-guided collection on the same rates, plus the
/// selection frequencies and the uniform-rate closed form.
pub fn check_coupon(mu: &[f64], shape: f64, trials: usize, seed: u64) -> Result<VerifyReport> {
    let t0 = Instant::now();
    let mut rep = VerifyReport::new("coupon", json!({"mu": mu, "a": shape, "trials": trials}), Some(seed));
    let ind = CouponConfig::new(mu.to_vec(), shape, trials, CouponMode::Independent, seed);
    let guided = CouponConfig { mode: CouponMode::MuonGuided, seed: seed ^ 0x9e37, ..ind.clone() };
    let s0 = coupon_sim(&ind)?;
    let sa = coupon_sim(&guided)?;
    let p = ind.probabilities();
    let l = mu.len();
    let exact = coupon_expectation(&p)?;
    rep.stat("T0_hat", s0.mean);
    rep.stat("T0_se", s0.se);
    rep.stat("Ta_hat", sa.mean);
    rep.stat("Ta_se", sa.se);
    rep.stat("T0_exact", exact);
    let lower = (1.0 / p.iter().cloned().fold(f64::INFINITY, f64::min)).max(l as f64 * harmonic(l));
    rep.stat("T0_lower_bound", lower);
    rep.claim("T0_exact_minus_lower_bound", exact - lower, Cmp::Ge, -1e-9);
    rep.claim("T0_hat_z", (s0.mean - exact).abs() / s0.se, Cmp::Le, 3.0);
    let mut worst_z = 0.0f64;
    for (f, pl) in s0.freq.iter().zip(&p) {
        let se = (pl * (1.0 - pl) / s0.draws as f64).sqrt();
        if se > 0.0 {
            worst_z = worst_z.max((f - pl).abs() / se);
        }
    }
    rep.claim("freq_max_z", worst_z, Cmp::Le, 3.0);
    rep.claim("Ta_minus_T0", sa.mean - s0.mean, Cmp::Lt, 0.0);
    let bound = guided_bound(s0.mean, l, shape, ind.suppression);
    let se = (sa.se.powi(2) + (ind.suppression.powf(shape) * s0.se).powi(2)).sqrt();
    rep.stat("Ta_bound", bound);
    rep.claim("Ta_excess_over_bound_in_se", (sa.mean - bound) / se, Cmp::Le, 3.0);
    Ok(rep.finish(t0))
}

/// Uniform rates: `T̂₀` against `L·H_L`.
pub fn check_coupon_uniform(l: usize, shape: f64, trials: usize, seed: u64) -> Result<VerifyReport> {
    let t0 = Instant::now();
    let mut rep = VerifyReport::new("coupon_uniform", json!({"L": l, "a": shape, "trials": trials}), Some(seed));
    let s = coupon_sim(&CouponConfig::new(vec![1.0; l], shape, trials, CouponMode::Independent, seed))?;
    let want = l as f64 * harmonic(l);
    rep.stat("T0_hat", s.mean);
    rep.stat("T0_se", s.se);
    rep.stat("L_H_L", want);
    rep.claim("z", (s.mean - want).abs() / s.se, Cmp::Le, 3.0);
    Ok(rep.finish(t0))
}

/// Integrate `α̇_l = x_l α_l − α_l Σ_j x_j α_j²` with `x_l = μ_l α_l` (the
/// mode-coordinate form of `ẇ = A(w)w` kept on the unit sphere) and return
/// the index the trajectory settles on.
pub fn leader_trajectory(mu: &[f64], alpha0: &[f64]) -> usize {
    let nrm = alpha0.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut a: Vec<f64> = alpha0.iter().map(|x| x / nrm).collect();
    let rhs = |a: &[f64]| -> Vec<f64> {
        let s: f64 = a.iter().zip(mu).map(|(x, u)| u * x * x * x).sum();
        a.iter().zip(mu).map(|(x, u)| u * x * x - x * s).collect()
    };
    for _ in 0..2_000_000 {
        let top = a.iter().cloned().fold(0.0f64, f64::max);
        if top > 1.0 - 1e-9 {
            break;
        }
        let rate = a.iter().zip(mu).map(|(x, u)| u * x).fold(1e-3, f64::max);
        let h = 0.05 / rate;
        let k1 = rhs(&a);
        let t: Vec<f64> = a.iter().zip(&k1).map(|(x, k)| x + 0.5 * h * k).collect();
        let k2 = rhs(&t);
        let t: Vec<f64> = a.iter().zip(&k2).map(|(x, k)| x + 0.5 * h * k).collect();
        let k3 = rhs(&t);
        let t: Vec<f64> = a.iter().zip(&k3).map(|(x, k)| x + h * k).collect();
        let k4 = rhs(&t);
        for i in 0..a.len() {
            a[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        a.iter_mut().for_each(|x| *x /= n);
    }
    argmax(&a)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// The mode a trajectory converges to is the initial leader `argmax μ_lα_l(0)`.
pub fn check_leader_wins(mu: &[f64], shape: f64, trajectories: usize, seed: u64) -> Result<VerifyReport> {
    let t0 = Instant::now();
    let mut rep = VerifyReport::new("leader_wins", json!({"mu": mu, "a": shape, "trajectories": trajectories}), Some(seed));
    let mut r = rng::stream(seed, 0x1ead);
    let mut agree = 0;
    for _ in 0..trajectories {
        let a0: Vec<f64> = mu.iter().map(|_| frechet(&mut r, shape)).collect();
        let lead: Vec<f64> = a0.iter().zip(mu).map(|(a, u)| a * u).collect();
        if leader_trajectory(mu, &a0) == argmax(&lead) {
            agree += 1;
        }
    }
    rep.claim("leader_agreement", agree as f64, Cmp::Ge, trajectories as f64);
    Ok(rep.finish(t0))
}

/// Least-squares `p* ≈ c·log(M)/M` through the origin; returns `c` and the
/// largest relative residual.
pub fn boundary_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 3 {
        return Err(Error::Invalid(format!("boundary fit needs at least 3 points, got {}", points.len())));
    }
    if points.iter().all(|&(_, p)| p == 0.0) {
        return Err(Error::Invalid("degenerate boundary table: all p* are zero".into()));
    }
    if let Some(&(m, p)) = points.iter().find(|&&(m, p)| !(m > 1.0) || !(p > 0.0)) {
        return Err(Error::Invalid(format!("boundary point (M={m}, p*={p}) is not usable")));
    }
    let xs: Vec<f64> = points.iter().map(|&(m, _)| m.ln() / m).collect();
    let num: f64 = xs.iter().zip(points).map(|(x, &(_, p))| x * p).sum();
    let den: f64 = xs.iter().map(|x| x * x).sum();
    let c = num / den;
    let resid = xs.iter().zip(points).map(|(x, &(_, p))| (p - c * x).abs() / p).fold(0.0, f64::max);
    Ok((c, resid))
}

/// Trend of a measured boundary ordered by `M`: whether `p*` is
/// nonincreasing, and the max/min ratio of `p*·M/log M`.
pub fn boundary_trend(points: &[(f64, f64)]) -> (bool, f64) {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let nonincreasing = pts.windows(2).all(|w| w[1].1 <= w[0].1);
    let scaled: Vec<f64> = pts.iter().map(|&(m, p)| p * m / m.ln()).collect();
    let hi = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    (nonincreasing, hi / lo)
}
