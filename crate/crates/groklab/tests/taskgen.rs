use groklab::groupkit::Group;
use groklab::taskgen::{encode, full_task, one_hot, single_target_task, split, train_size, Pair, SplitMode};

#[test]
fn full_task_enumeration() {
    let z2 = full_task(&Group::cyclic(2));
    assert_eq!(z2.rows.len(), 4);
    assert_eq!(&z2.rows[..2], &[Pair { a: 0, b: 0, h: 0 }, Pair { a: 1, b: 1, h: 0 }]);

    let z3 = full_task(&Group::cyclic(3));
    let block: Vec<(usize, usize)> = z3.rows.iter().filter(|p| p.h == 1).map(|p| (p.a, p.b)).collect();
    assert_eq!(block, vec![(0, 1), (1, 0), (2, 2)]);

    let g = Group::dihedral(3);
    let d3 = full_task(&g);
    assert_eq!(d3.rows.len(), 36);
    for h in 0..6 {
        assert_eq!(d3.rows.iter().filter(|p| p.h == h).count(), 6);
    }
    assert!(d3.rows.iter().all(|p| g.mul(p.a, p.b) == p.h));
}

#[test]
fn split_sizes() {
    let t71 = full_task(&Group::cyclic(71));
    let d = split(&t71, 0.4, 0, SplitMode::FixedCount).unwrap();
    assert_eq!(d.train.len(), 2016);
    assert_eq!(d.train.len() + d.test.len(), 71 * 71);
    assert_eq!(train_size(127, 0.2), 3225);

    let t5 = full_task(&Group::cyclic(5));
    let all = split(&t5, 1.0, 3, SplitMode::FixedCount).unwrap();
    assert_eq!(all.train, (0..25).collect::<Vec<_>>());
    assert!(all.test.is_empty());
}

#[test]
fn split_rejects_bad_ratios() {
    let t = full_task(&Group::cyclic(5));
    for p in [0.0, -0.1, 1.5, f64::NAN] {
        assert!(split(&t, p, 0, SplitMode::FixedCount).is_err());
    }
    assert!(split(&t, 0.01, 0, SplitMode::FixedCount).is_err());
}

#[test]
fn split_is_deterministic_and_disjoint() {
    let t = full_task(&Group::cyclic(13));
    for mode in [SplitMode::FixedCount, SplitMode::Bernoulli] {
        let a = split(&t, 0.3, 42, mode).unwrap();
        let b = split(&t, 0.3, 42, mode).unwrap();
        assert_eq!(a.train, b.train);
        let c = split(&t, 0.3, 43, mode).unwrap();
        assert_ne!(a.train, c.train);
        let mut all: Vec<usize> = a.train.iter().chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..169).collect::<Vec<_>>());
    }
}

#[test]
fn bernoulli_split_keeps_about_p() {
    let t = full_task(&Group::cyclic(41));
    let d = split(&t, 0.25, 7, SplitMode::Bernoulli).unwrap();
    let n = 41.0 * 41.0;
    let sd = (n * 0.25 * 0.75f64).sqrt();
    assert!((d.train.len() as f64 - 0.25 * n).abs() < 4.0 * sd);
}

#[test]
fn one_hot_encoding() {
    let t = full_task(&Group::cyclic(2));
    let idx = t.rows.iter().position(|p| p.a == 1 && p.b == 0).unwrap();
    let (x, y) = one_hot(&t, &[idx]);
    assert_eq!(x.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 1.0, 0.0]);
    assert_eq!(y.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0]);

    let t7 = full_task(&Group::cyclic(7));
    let d = split(&t7, 0.5, 1, SplitMode::FixedCount).unwrap();
    let (xtr, _, xte, yte) = encode(&d);
    assert!(xtr.row_iter().all(|r| r.sum() == 2.0));
    assert!(yte.row_iter().all(|r| r.sum() == 1.0));
    assert_eq!(xte.nrows(), d.test.len());
    let (_, yall) = one_hot(&t7, &(0..49).collect::<Vec<_>>());
    assert!(yall.column_iter().all(|c| c.sum() == 7.0));
}

#[test]
fn manifest_replays_the_split() {
    let t = full_task(&Group::cyclic(7));
    let d = split(&t, 0.6, 5, SplitMode::FixedCount).unwrap();
    let man = d.manifest(serde_json::json!({"kind": "abelian", "orders": [7]}));
    let text = serde_json::to_string(&man).unwrap();
    let back: groklab::taskgen::DatasetManifest = serde_json::from_str(&text).unwrap();
    assert_eq!(back, man);
    let again = split(&t, back.p, back.seed, back.mode).unwrap();
    assert_eq!(again.train, back.train);
    assert_eq!(again.test, back.test);
}

#[test]
fn single_target_examples() {
    let z5 = Group::cyclic(5);
    let wp = single_target_task(&z5, 0, &[1.0; 5]).unwrap();
    for (g, (r, w)) in wp.rows.iter().zip(&wp.weights).enumerate() {
        assert_eq!((r.a, r.b, r.h), (g, (5 - g) % 5, 0));
        assert!((w - 0.2).abs() < 1e-15);
    }
    let wp = single_target_task(&z5, 0, &[0.5, 0.3, 0.2, 0.0, 0.0]).unwrap();
    assert_eq!(wp.rows.len(), 5);
    assert_eq!(wp.weights, vec![0.5, 0.3, 0.2, 0.0, 0.0]);

    let d3 = Group::dihedral(3);
    let wp = single_target_task(&d3, 4, &[1.0; 6]).unwrap();
    assert!(wp.rows.iter().all(|r| d3.mul(r.a, r.b) == 4));

    assert!(single_target_task(&z5, 0, &[1.0; 4]).is_err());
    assert!(single_target_task(&z5, 0, &[1.0, -1.0, 0.0, 0.0, 1.0]).is_err());
    assert!(single_target_task(&z5, 0, &[0.0; 5]).is_err());
}
