//! Dense kernels: strided GEMM, SPD solves, polar factors, symmetric
//! eigenvalues and DFT power spectra. Everything is `f64`.

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// `c ← alpha·op(a)·op(b) + beta·c` where `op` optionally transposes.
///
/// Column-major storage is handed to `matrixmultiply` with swapped strides
/// for the transposed operands, so no copies are made.
pub fn gemm(alpha: f64, a: &Mat, ta: bool, b: &Mat, tb: bool, beta: f64, c: &mut Mat) {
    let (m, k) = if ta { (a.ncols(), a.nrows()) } else { (a.nrows(), a.ncols()) };
    let (kb, n) = if tb { (b.ncols(), b.nrows()) } else { (b.nrows(), b.ncols()) };
    assert_eq!(k, kb, "gemm inner dimension");
    assert_eq!((c.nrows(), c.ncols()), (m, n), "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        *c *= beta;
        return;
    }
    let (ars, acs) = if ta { (a.nrows() as isize, 1) } else { (1, a.nrows() as isize) };
    let (brs, bcs) = if tb { (b.nrows() as isize, 1) } else { (1, b.nrows() as isize) };
    let crs = 1isize;
    let ccs = m as isize;
    // SAFETY: shapes and strides describe the owned column-major buffers above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            ars,
            acs,
            b.as_ptr(),
            brs,
            bcs,
            beta,
            c.as_mut_ptr(),
            crs,
            ccs,
        );
    }
}

/// `a·b`
pub fn mul(a: &Mat, b: &Mat) -> Mat {
    let mut c = Mat::zeros(a.nrows(), b.ncols());
    gemm(1.0, a, false, b, false, 0.0, &mut c);
    c
}

/// `aᵀ·b`
pub fn tmul(a: &Mat, b: &Mat) -> Mat {
    let mut c = Mat::zeros(a.ncols(), b.ncols());
    gemm(1.0, a, true, b, false, 0.0, &mut c);
    c
}

/// `a·bᵀ`
pub fn mult(a: &Mat, b: &Mat) -> Mat {
    let mut c = Mat::zeros(a.nrows(), b.nrows());
    gemm(1.0, a, false, b, true, 0.0, &mut c);
    c
}

/// Frobenius inner product.
pub fn dot(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Frobenius cosine; `None` when either side vanishes.
pub fn cosine(a: &Mat, b: &Mat) -> Option<f64> {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some(dot(a, b) / (na * nb))
    }
}

/// Subtract column means in place (applies `P⊥₁ = I − 11ᵀ/n` from the left).
pub fn center_rows(a: &mut Mat) {
    let n = a.nrows() as f64;
    if n == 0.0 {
        return;
    }
    for mut col in a.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
}

pub fn centered(a: &Mat) -> Mat {
    let mut c = a.clone();
    center_rows(&mut c);
    c
}

/// Solve `AX = B` for symmetric positive-definite `A`.
pub fn solve_spd(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::Shape(format!(
            "solve_spd: A is {}x{}, B has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    let scale = a.amax().max(1.0);
    for i in 0..a.nrows() {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-8 * scale {
                return Err(Error::NotPositiveDefinite);
            }
        }
    }
    let chol = Cholesky::new(a.clone()).ok_or(Error::NotPositiveDefinite)?;
    Ok(chol.solve(b))
}

/// Largest singular value estimate by power iteration on `GᵀG`.
fn spectral_norm_estimate(g: &Mat) -> f64 {
    let k = g.ncols();
    let mut x = nalgebra::DVector::from_fn(k, |i, _| 1.0 + (i as f64 * 0.618_033_988_7).fract());
    let mut est = 0.0;
    for _ in 0..30 {
        let y = g * &x;
        let z = g.transpose() * &y;
        let nz = z.norm();
        if nz == 0.0 {
            return 0.0;
        }
        est = (nz / x.norm()).sqrt();
        x = z / nz;
    }
    est
}

/// Polar factor `UVᵀ` of `G = UΣVᵀ` (thin SVD).
///
/// Newton–Schulz on the spectrally normalized input, iterating
/// `X ← 1.5X − 0.5X(XᵀX)` until `‖XᵀX − I‖_F ≤ 1e-8`, plus one polishing
/// step (the smaller Gram is used for wide inputs). Falls back to an SVD when 50 iterations do not
/// suffice, which happens for rank-deficient or badly conditioned `G`.
pub fn polar_factor(g: &Mat) -> Result<Mat> {
    let fro = g.norm();
    if fro == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let tall = g.nrows() >= g.ncols();
    let r = g.nrows().min(g.ncols());
    let scale = (1.05 * spectral_norm_estimate(g)).min(fro);
    let mut x = g / scale;
    let eye = Mat::identity(r, r);
    for _ in 0..50 {
        let gram = if tall { tmul(&x, &x) } else { mult(&x, &x) };
        let done = (&gram - &eye).norm() <= 1e-8;
        let xg = if tall { mul(&x, &gram) } else { mul(&gram, &x) };
        x = 1.5 * x - 0.5 * xg;
        if done {
            return Ok(x);
        }
        if !x.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    Ok(polar_svd(g))
}

/// Polar factor from nalgebra's SVD.
pub fn polar_svd(g: &Mat) -> Mat {
    let svd = g.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    u * vt
}

/// Singular values via nalgebra's SVD.
pub fn singular_values(g: &Mat) -> Vec<f64> {
    g.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi.
pub fn sym_eigenvalues(h: &Mat) -> Result<Vec<f64>> {
    let n = h.nrows();
    if n != h.ncols() {
        return Err(Error::Shape(format!("sym_eigenvalues: {}x{}", n, h.ncols())));
    }
    let scale = h.amax();
    for i in 0..n {
        for j in 0..i {
            if (h[(i, j)] - h[(j, i)]).abs() > 1e-6 * scale.max(1e-300) {
                return Err(Error::Invalid("matrix not symmetric".into()));
            }
        }
    }
    let mut a = (h + h.transpose()) * 0.5;
    let total = a.norm();
    if total == 0.0 {
        return Ok(vec![0.0; n]);
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
        }
        if off.sqrt() <= 1e-15 * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    Ok(ev)
}

/// `(λ_min, λ_max)` of a symmetric matrix.
pub fn sym_eig_extremes(h: &Mat) -> Result<(f64, f64)> {
    let ev = sym_eigenvalues(h)?;
    if ev.is_empty() {
        return Ok((0.0, 0.0));
    }
    Ok((ev[0], ev[ev.len() - 1]))
}

/// Per-frequency power of the mean-removed signal. Entry `k` combines the
/// `k` and `M−k` DFT bins, so the result sums to `‖u − ū1‖²`.
pub fn power_spectrum(u: &[f64]) -> Vec<f64> {
    let m = u.len();
    let half = m / 2;
    let mut out = vec![0.0; half + 1];
    if m == 0 {
        return out;
    }
    let mean = u.iter().sum::<f64>() / m as f64;
    let mut buf: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let mf = m as f64;
    for (k, slot) in out.iter_mut().enumerate().skip(1) {
        let mut p = buf[k].norm_sqr();
        if m - k != k {
            p += buf[m - k].norm_sqr();
        }
        *slot = p / mf;
    }
    out
}

/// Offdiagonal mass ‖A − Diag(A)‖_F / ‖A‖_F; `None` for a zero matrix.
pub fn diag_err(a: &Mat) -> Option<f64> {
    let total = a.norm();
    if total == 0.0 {
        return None;
    }
    let mut off = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if i != j {
                off += a[(i, j)] * a[(i, j)];
            }
        }
    }
    Some(off.sqrt() / total)
}

/// Columnwise real part.
pub fn re(a: &CMat) -> Mat {
    a.map(|z| z.re)
}
