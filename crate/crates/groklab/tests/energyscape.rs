use std::f64::consts::PI;

use groklab::energyscape::{
    ascend, ascend_and_classify, ascend_objective, energy, energy_grad, flatness, memorization_profile, modulated_energy,
    modulation_kernel, pair_preactivations, vertex_stability, AscentConfig, Classifier, MemorizationKind, Monotonicity,
    Objective, Task, Verdict,
};
use groklab::groupkit::Group;
use groklab::netdyn::Activation;
use groklab::numkit::{centered, Mat};
use groklab::rng;
use groklab::taskgen::{full_task, one_hot, single_target_task, split, SplitMode};

fn task(m: usize, act: Activation) -> Task {
    Task::full(&full_task(&Group::cyclic(m)), act)
}

/// `w = [u; s·Pu]` with `u` a cosine wave of frequency `k`, unit norm.
fn wave(m: usize, k: usize, s: f64, phase: f64) -> Vec<f64> {
    let u: Vec<f64> = (0..m).map(|a| (2.0 * PI * (k * a) as f64 / m as f64 + phase).cos()).collect();
    let v: Vec<f64> = (0..m).map(|a| s * u[(m - a) % m]).collect();
    let mut w: Vec<f64> = u.into_iter().chain(v).collect();
    let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    w.iter_mut().for_each(|x| *x /= n);
    w
}

fn random_unit(r: &mut rng::Stream, n: usize) -> Vec<f64> {
    let mut w = rng::normal_vec(r, n);
    let s = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

/// `½‖Ỹᵀσ(Xw)‖²` from dense one-hot matrices.
fn dense_energy(m: usize, w: &[f64], act: Activation) -> f64 {
    let t = full_task(&Group::cyclic(m));
    let (x, y) = one_hot(&t, &(0..m * m).collect::<Vec<_>>());
    let z = (&x * Mat::from_column_slice(2 * m, 1, w)).map(|v| act.f(v));
    0.5 * (centered(&y).transpose() * z).norm_squared()
}

#[test]
fn energy_examples() {
    let t3 = task(3, Activation::Quadratic);
    assert_eq!(energy(&[0.0; 6], &t3), 0.0);
    assert!(energy_grad(&[0.0; 6], &t3).iter().all(|g| *g == 0.0));
    assert!((energy(&wave(3, 1, 1.0, 0.4), &t3) - 0.75).abs() < 1e-12);
    assert!((energy(&[0.5, -0.5, 0.5, -0.5], &task(2, Activation::Quadratic)) - 1.0).abs() < 1e-12);
    assert!((energy(&wave(12, 6, 1.0, 0.0), &task(12, Activation::Quadratic)) - 6.0).abs() < 1e-12);
}

#[test]
fn energy_matches_dense_formula() {
    let mut r = rng::stream(2, 0);
    for act in Activation::ALL {
        let w = rng::normal_vec(&mut r, 14);
        let got = energy(&w, &task(7, act));
        let want = dense_energy(7, &w, act);
        assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{act}: {got} vs {want}");
    }
}

#[test]
fn energy_gradient_is_the_independent_stage_update() {
    let m = 6;
    let t = full_task(&Group::cyclic(m));
    let (x, y) = one_hot(&t, &(0..m * m).collect::<Vec<_>>());
    let yt = centered(&y);
    let mut r = rng::stream(3, 0);
    for act in [Activation::Quadratic, Activation::Tanh, Activation::Silu] {
        let w = rng::normal_vec(&mut r, 2 * m);
        let pre = &x * Mat::from_column_slice(2 * m, 1, &w);
        let d = Mat::from_diagonal(&pre.column(0).map(|v| act.df(v)));
        let upd = x.transpose() * d * &yt * yt.transpose() * pre.map(|v| act.f(v));
        let g = energy_grad(&w, &Task::full(&t, act));
        for (a, b) in g.iter().zip(upd.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}

fn fd_rel(f: impl Fn(&[f64]) -> f64, g: &[f64], w: &[f64]) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..w.len() {
        let mut p = w.to_vec();
        p[i] += h;
        let mut q = w.to_vec();
        q[i] -= h;
        let fd = (f(&p) - f(&q)) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs());
        scale = scale.max(fd.abs());
    }
    worst / scale
}

#[test]
fn energy_gradient_matches_finite_differences() {
    let mut r = rng::stream(5, 1);
    for act in Activation::ALL.into_iter().filter(|a| *a != Activation::Linear) {
        for _ in 0..3 {
            let t = task(5, act);
            let w = rng::normal_vec(&mut r, 10);
            let e = fd_rel(|x| energy(x, &t), &energy_grad(&w, &t), &w);
            assert!(e <= 1e-6, "{act}: {e}");
        }
    }
    let wp = single_target_task(&Group::cyclic(5), 2, &[0.5, 0.3, 0.1, 0.05, 0.05]).unwrap();
    let t = Task::weighted(&wp, Activation::Relu);
    let w = rng::normal_vec(&mut r, 10);
    assert!(fd_rel(|x| energy(x, &t), &energy_grad(&w, &t), &w) <= 1e-6);
}

/// Hyperspherical coordinates on `S⁵` at `step` resolution.
fn sphere_grid_max(t: &Task, step_deg: f64) -> f64 {
    let n = (180.0 / step_deg).round() as usize;
    let step = PI / n as f64;
    let mut best: f64 = 0.0;
    let mut w = [0.0; 6];
    for i1 in 0..=n {
        let a1 = i1 as f64 * step;
        for i2 in 0..=n {
            let a2 = i2 as f64 * step;
            for i3 in 0..=n {
                let a3 = i3 as f64 * step;
                for i4 in 0..=n {
                    let a4 = i4 as f64 * step;
                    for i5 in 0..2 * n {
                        let a5 = i5 as f64 * step;
                        let (s1, s2, s3, s4) = (a1.sin(), a2.sin(), a3.sin(), a4.sin());
                        w[0] = a1.cos();
                        w[1] = s1 * a2.cos();
                        w[2] = s1 * s2 * a3.cos();
                        w[3] = s1 * s2 * s3 * a4.cos();
                        w[4] = s1 * s2 * s3 * s4 * a5.cos();
                        w[5] = s1 * s2 * s3 * s4 * a5.sin();
                        best = best.max(energy(&w, t));
                    }
                }
            }
        }
    }
    best
}

#[test]
fn z3_grid_search_finds_nothing_above_the_vertex() {
    let t = task(3, Activation::Quadratic);
    let best = sphere_grid_max(&t, 10.0);
    assert!(best <= 0.75 + 1e-6, "{best}");
    assert!(best >= 0.7, "{best}");
}

#[test]
fn ascent_from_a_vertex_returns_immediately() {
    let t = task(7, Activation::Quadratic);
    let w = wave(7, 2, -1.0, 0.3);
    let res = ascend(&w, &t, &AscentConfig::default()).unwrap();
    assert!(res.converged);
    assert!(res.steps <= 1);
    assert!((res.energy - 7.0 / 4.0).abs() < 1e-12);
}

#[test]
fn ascent_rejects_bad_starts() {
    let t = task(5, Activation::Quadratic);
    assert!(ascend(&[0.0; 10], &t, &AscentConfig::default()).is_err());
    assert!(ascend(&[1.0; 9], &t, &AscentConfig::default()).is_err());
}

#[test]
fn ascent_is_monotone_and_flags_step_cap() {
    let t = task(11, Activation::Quadratic);
    let mut r = rng::stream(1, 2);
    let w0 = random_unit(&mut r, 22);
    let short = ascend(&w0, &t, &AscentConfig { max_steps: 3, ..Default::default() }).unwrap();
    assert!(!short.converged && short.steps == 3);
    assert!(short.energy >= energy(&w0, &t));
    let full = ascend(&short.w, &t, &AscentConfig::default()).unwrap();
    assert!(full.energy >= short.energy);
}

#[test]
fn converged_maxima_are_single_frequency_vertices() {
    for m in [7usize, 23] {
        let g = Group::cyclic(m);
        let t = task(m, Activation::Quadratic);
        let cls = Classifier::new(&g).unwrap();
        let mut r = rng::stream(m as u64, 3);
        let mut converged = 0;
        for _ in 0..16 {
            let w0 = random_unit(&mut r, 2 * m);
            let res = ascend_and_classify(&w0, &t, &Objective::Energy, &AscentConfig::default(), Some(&cls), false).unwrap();
            if !res.converged {
                continue;
            }
            converged += 1;
            let c = res.class.unwrap();
            assert!((res.energy / (m as f64 / 4.0) - 1.0).abs() < 1e-3, "M={m}: {}", res.energy);
            assert!(c.single_irrep && c.c_max >= 0.99);
            assert!(c.balance <= 1e-3);
            assert!((c.theory_energy - m as f64 / 4.0).abs() < 1e-12);
            let u2: f64 = res.w[..m].iter().map(|x| x * x).sum();
            assert!((u2 - 0.5).abs() < 1e-3);
            let spec = groklab::numkit::power_spectrum(&res.w[..m]);
            let peak = (0..spec.len()).fold(0, |b, i| if spec[i] > spec[b] { i } else { b });
            assert_eq!(peak, c.label.min(m - c.label));
        }
        assert!(converged >= 15, "M={m}: {converged}");
    }
}

#[test]
fn masses_sum_to_one_for_zero_mean_halves() {
    let g = Group::cyclic(11);
    let cls = Classifier::new(&g).unwrap();
    let w = wave(11, 2, 1.0, 0.0);
    let c = cls.classify(&w);
    assert_eq!(c.label, 2);
    assert!(c.struct_residual < 1e-10 && c.sign == 1);
    assert!((c.masses.iter().map(|(_, x)| x).sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn dihedral_maxima_classify_into_irreps() {
    let g = Group::dihedral(3);
    let t = Task::full(&full_task(&g), Activation::Quadratic);
    let cls = Classifier::new(&g).unwrap();
    let mut r = rng::stream(4, 4);
    let mut seen = 0;
    for _ in 0..8 {
        let w0 = random_unit(&mut r, 12);
        let res = ascend_and_classify(&w0, &t, &Objective::Energy, &AscentConfig::default(), Some(&cls), false).unwrap();
        if !res.converged {
            continue;
        }
        let c = res.class.unwrap();
        if c.single_irrep {
            seen += 1;
            assert!((res.energy - c.theory_energy).abs() / c.theory_energy < 1e-3, "{} vs {}", res.energy, c.theory_energy);
        }
    }
    assert!(seen > 0);
}

#[test]
fn maxima_are_flat() {
    let t = task(5, Activation::Quadratic);
    let w = wave(5, 1, 1.0, 0.7);
    let (lo, hi, radius) = flatness(&w, &t, &Objective::Energy).unwrap();
    assert!(lo <= 1e-3 * radius);
    assert!(hi <= 1e-3 * radius);

    let mut r = rng::stream(9, 9);
    let saddle = random_unit(&mut r, 10);
    let (_, hi, _) = flatness(&saddle, &t, &Objective::Energy).unwrap();
    assert!(hi > 0.0);
}

#[test]
fn maxima_of_different_frequencies_are_disconnected() {
    let t = task(11, Activation::Quadratic);
    let (a, b) = (wave(11, 1, 1.0, 0.0), wave(11, 3, 1.0, 0.0));
    let ends = energy(&a, &t).min(energy(&b, &t));
    let dip = (1..20)
        .map(|i| {
            let s = i as f64 / 20.0;
            let mut w: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (1.0 - s) * x + s * y).collect();
            let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            w.iter_mut().for_each(|x| *x /= n);
            energy(&w, &t)
        })
        .fold(f64::INFINITY, f64::min);
    assert!(dip <= 0.95 * ends);
}

#[test]
fn linear_activation_has_no_landscape() {
    let t = task(7, Activation::Linear);
    let mut r = rng::stream(6, 6);
    for _ in 0..6 {
        let res = ascend(&random_unit(&mut r, 14), &t, &AscentConfig::default()).unwrap();
        assert!(res.energy.abs() < 1e-25);
    }
}

#[test]
fn complex_pair_maxima_have_a_free_relative_phase() {
    let m = 11;
    let t = task(m, Activation::Quadratic);
    let cls = Classifier::new(&Group::cyclic(m)).unwrap();
    let u: Vec<f64> = (0..m).map(|a| (2.0 * PI * 2.0 * a as f64 / m as f64).cos() / (m as f64).sqrt()).collect();
    for psi in [0.0, 0.7, 2.0] {
        let v: Vec<f64> = (0..m).map(|b| (2.0 * PI * 2.0 * b as f64 / m as f64 + psi).cos() / (m as f64).sqrt()).collect();
        let w: Vec<f64> = u.iter().chain(&v).copied().collect();
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let w: Vec<f64> = w.iter().map(|x| x / n).collect();
        assert!((energy(&w, &t) - m as f64 / 4.0).abs() < 1e-12);
        assert!(tangential_norm(&w, &t) < 1e-12);
        let c = cls.classify(&w);
        assert!(c.balance < 1e-12);
        assert_eq!(c.struct_residual < 1e-9, psi == 0.0);
    }
    let alt = wave(12, 6, -1.0, 0.0);
    let c = Classifier::new(&Group::cyclic(12)).unwrap().classify(&alt);
    assert!(c.struct_residual < 1e-12 && c.sign == -1);
}

fn tangential_norm(w: &[f64], t: &Task) -> f64 {
    let g = energy_grad(w, t);
    let c: f64 = w.iter().zip(&g).map(|(a, b)| a * b).sum();
    g.iter().zip(w).map(|(gi, wi)| (gi - c * wi).powi(2)).sum::<f64>().sqrt()
}

/// `½(1/M)Σ_{k∉S∪0}|Σ_h e_h χ_k(h)|²` straight from the characters.
fn character_modulated(e: &[f64], suppressed: &[usize]) -> f64 {
    let m = e.len();
    (1..m)
        .filter(|k| !suppressed.contains(k))
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (h, x) in e.iter().enumerate() {
                let t = 2.0 * PI * (k * h) as f64 / m as f64;
                re += x * t.cos();
                im += x * t.sin();
            }
            0.5 * (re * re + im * im) / m as f64
        })
        .sum()
}

#[test]
fn modulated_energy_examples_and_oracles() {
    let g = Group::cyclic(7);
    let cat = g.catalog().unwrap();
    let t = task(7, Activation::Quadratic);
    let mut r = rng::stream(7, 7);
    let w = rng::normal_vec(&mut r, 14);
    let k0 = modulation_kernel(&cat, &g, &[]).unwrap();
    assert!((modulated_energy(&w, &t, &k0).0 - energy(&w, &t)).abs() < 1e-10);

    let ks = modulation_kernel(&cat, &g, &[2]).unwrap();
    assert!(modulated_energy(&wave(7, 2, 1.0, 0.1), &t, &ks).0 <= 1e-8);
    assert!(modulated_energy(&wave(7, 5, -1.0, 0.1), &t, &ks).0 <= 1e-8);

    let e = t.target_vector(&w);
    for s in [vec![], vec![1, 6], vec![2, 5, 3, 4]] {
        let kern = modulation_kernel(&cat, &g, &s).unwrap();
        let (val, grad) = modulated_energy(&w, &t, &kern);
        assert!((val - character_modulated(&e, &s)).abs() < 1e-10);
        assert!(fd_rel(|x| modulated_energy(x, &t, &kern).0, &grad, &w) <= 1e-6);
    }
    assert!(modulation_kernel(&cat, &g, &[9]).is_err());
}

#[test]
fn modulated_ascent_lands_on_the_missing_frequency() {
    let m = 11;
    let g = Group::cyclic(m);
    let cat = g.catalog().unwrap();
    let cls = Classifier::new(&g).unwrap();
    let suppressed: Vec<usize> = (1..m).filter(|k| *k != 3 && *k != 8).collect();
    let obj = Objective::Modulated(modulation_kernel(&cat, &g, &suppressed).unwrap());
    let t = task(m, Activation::Quadratic);
    let mut r = rng::stream(11, 8);
    for _ in 0..8 {
        let res = ascend_objective(&random_unit(&mut r, 2 * m), &t, &obj, &AscentConfig::default()).unwrap();
        assert_eq!(cls.classify(&res.w).label, 3);
    }
}

#[test]
fn memorization_profiles() {
    let p = [0.5, 0.3, 0.2];
    let q = memorization_profile(&p, &Activation::Quadratic).unwrap();
    assert_eq!(q.class, Monotonicity::Nondecreasing);
    assert_eq!(q.kind, MemorizationKind::Focused);
    assert_eq!(q.s, vec![2f64.sqrt(), 0.0, 0.0]);

    let relu = memorization_profile(&p, &Activation::Relu).unwrap();
    assert_eq!(relu.kind, MemorizationKind::Spreading);
    let pn = (0.25f64 + 0.09 + 0.04).sqrt();
    for (s, pg) in relu.s.iter().zip(&p) {
        assert!((s - 2f64.sqrt() * pg / pn).abs() < 1e-9);
    }
    assert!((relu.s[0] - 1.1471).abs() < 1e-4 && (relu.s[1] - 0.6882).abs() < 1e-4 && (relu.s[2] - 0.4588).abs() < 1e-4);

    for act in [Activation::Relu, Activation::Tanh, Activation::Sigmoid] {
        let u = memorization_profile(&[1.0; 8], &act).unwrap();
        assert!(u.s.iter().all(|s| (s - 0.5).abs() < 1e-9), "{act}: {:?}", u.s);
    }
    assert!(memorization_profile(&[0.5, -0.1], &Activation::Relu).is_err());
    assert!(memorization_profile(&[], &Activation::Relu).is_err());
}

#[test]
fn single_target_ascent_follows_the_profile() {
    let mut p = vec![0.5, 0.3, 0.2];
    p.extend([0.0; 4]);
    let z7 = Group::cyclic(7);
    let wp = single_target_task(&z7, 0, &p).unwrap();
    let mut r = rng::stream(3, 3);

    let tq = Task::weighted(&wp, Activation::Quadratic);
    let res = ascend(&random_unit(&mut r, 14), &tq, &AscentConfig::default()).unwrap();
    let s = pair_preactivations(&res.w, &wp);
    let focused = memorization_profile(&p, &Activation::Quadratic).unwrap().s;
    let overlap = s.iter().zip(&focused).map(|(a, b)| a * b).sum::<f64>().abs() / 2.0;
    assert!(overlap >= 0.99, "{overlap}");

    let tr = Task::weighted(&wp, Activation::Relu);
    let start: Vec<f64> = (0..14).map(|i| if i < 7 { 0.3 } else { 0.1 }).collect();
    let res = ascend(&start, &tr, &AscentConfig::default()).unwrap();
    let s = pair_preactivations(&res.w, &wp);
    let want = memorization_profile(&p, &Activation::Relu).unwrap().s;
    for g in 0..3 {
        assert!((s[g] - want[g]).abs() <= 0.05 * want[g], "{g}: {} vs {}", s[g], want[g]);
    }
}

#[test]
fn horvitz_thompson_target_sums_are_unbiased() {
    let m = 11;
    let table = full_task(&Group::cyclic(m));
    let full = Task::full(&table, Activation::Quadratic);
    let mut r = rng::stream(12, 0);
    let w = random_unit(&mut r, 2 * m);
    let truth = full.target_vector(&w);
    let reps = 200;
    let mut sum = vec![0.0; m];
    let mut sq = vec![0.0; m];
    for seed in 0..reps {
        let d = split(&table, 0.3, seed, SplitMode::Bernoulli).unwrap();
        let e = Task::horvitz_thompson(&table, &d.train, 0.3, Activation::Quadratic).target_vector(&w);
        for h in 0..m {
            sum[h] += e[h];
            sq[h] += e[h] * e[h];
        }
    }
    for h in 0..m {
        let mean = sum[h] / reps as f64;
        let var = sq[h] / reps as f64 - mean * mean;
        let se = (var / reps as f64).sqrt();
        assert!((mean - truth[h]).abs() <= 3.0 * se + 1e-12, "h={h}: {mean} vs {}", truth[h]);
    }
    let everything: Vec<usize> = (0..m * m).collect();
    let ht1 = Task::horvitz_thompson(&table, &everything, 1.0, Activation::Quadratic);
    assert!((energy(&w, &ht1) - energy(&w, &full)).abs() < 1e-12);
}

#[test]
fn vertices_are_stable_on_the_full_task() {
    let g = Group::cyclic(11);
    let t = task(11, Activation::Quadratic);
    let cls = Classifier::new(&g).unwrap();
    for k in [1, 4] {
        let st = vertex_stability(&wave(11, k, 1.0, 0.2), &t, &cls, &AscentConfig::default(), 0).unwrap();
        assert_eq!(st.verdict, Verdict::Stable);
        assert!(st.leak_margin < 0.0);
        assert_eq!(st.probes, 16);
    }
}

fn survival(p: f64, seeds: u64) -> f64 {
    let m = 31;
    let g = Group::cyclic(m);
    let table = full_task(&g);
    let cls = Classifier::new(&g).unwrap();
    let w = wave(m, 5, 1.0, 0.0);
    let stable = (0..seeds)
        .filter(|&s| {
            let d = split(&table, p, s, SplitMode::Bernoulli).unwrap();
            let sub = Task::horvitz_thompson(&table, &d.train, p, Activation::Quadratic);
            vertex_stability(&w, &sub, &cls, &AscentConfig::default(), s).unwrap().verdict == Verdict::Stable
        })
        .count();
    stable as f64 / seeds as f64
}

#[test]
fn subsampled_vertices_survive_dense_sampling_and_break_under_sparse() {
    assert!(survival(0.95, 10) >= 0.8);
    assert!(survival(0.05, 10) <= 0.3);
}
