use std::fs;
use std::path::Path;

use groklab::numkit::Mat;
use groklab_cli::ascend::cmd_ascend;
use groklab_cli::config::{AscendMode, ExperimentConfig, GroupSpec, Scope};
use groklab_cli::group::cmd_group;
use groklab_cli::output::{read_weights, write_weights};
use groklab_cli::scan::{cmd_scan, BoundaryRow, BoundaryTable, CellStatus};
use groklab_cli::train::cmd_train;
use groklab_cli::{run, suites};

fn cfg(out: &Path, sets: &[&str]) -> ExperimentConfig {
    let mut all = vec![format!("out={}", out.display())];
    all.extend(sets.iter().map(|s| s.to_string()));
    ExperimentConfig::load(None, &all).unwrap()
}

fn small_train(out: &Path) -> ExperimentConfig {
    cfg(
        out,
        &[
            "group=cyclic 11",
            "model.width=128",
            "task.p=0.7",
            "train.lr=0.01",
            "train.weight_decay=0.001",
            "train.epochs=300",
        ],
    )
}


#[test]
fn config_overrides_and_shorthand() {
    let c = ExperimentConfig::load(
        None,
        &[
            "group=dihedral 5".into(),
            "model.act=relu".into(),
            "train.optimizer=muon".into(),
            "scan.ms=[5,7]".into(),
            "tag=x".into(),
        ],
    )
    .unwrap();
    assert_eq!(c.group, GroupSpec::Dihedral { n: 5 });
    assert_eq!(c.model.act, groklab::netdyn::Activation::Relu);
    assert_eq!(c.train.optimizer, groklab::netdyn::Optimizer::muon());
    assert_eq!(c.scan.ms, vec![5, 7]);
    assert_eq!(c.tag, "x");
    assert_eq!(ExperimentConfig::load(None, &[]).unwrap(), ExperimentConfig::default());

    assert!(ExperimentConfig::load(None, &["model.widht=3".into()]).is_err());
    assert!(ExperimentConfig::load(None, &["nokey".into()]).is_err());
    assert!(ExperimentConfig::load(None, &["group=torus 3".into()]).is_err());
}

#[test]
fn validation_lists_every_problem() {
    let c = ExperimentConfig::load(
        None,
        &["task.p=0".into(), "model.depth=0".into(), "train.eval_every=0".into(), "train.lr=0".into()],
    )
    .unwrap();
    let errs = c.problems(Scope::Train);
    assert_eq!(errs.len(), 4, "{errs:?}");
    let c = ExperimentConfig::load(None, &["scan.ms=[]".into(), "scan.ps=[1.5]".into(), "scan.seeds=[]".into()]).unwrap();
    assert_eq!(c.problems(Scope::Scan).len(), 3);
    let c = ExperimentConfig::load(None, &[r#"group={"kind":"cayley","path":"/no/such/file"}"#.into()]).unwrap();
    assert!(c.problems(Scope::Train).iter().any(|e| e.contains("/no/such/file")));
}

#[test]
fn weights_layout_is_little_endian_row_major() {
    let a = Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let b = Mat::from_row_slice(1, 1, &[-0.5]);
    let mut buf = Vec::new();
    write_weights(&mut buf, &[&a, &b]).unwrap();
    assert_eq!(buf.len(), 12 + 48 + 12 + 8);
    assert_eq!(&buf[..12], &[2, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0]);
    assert_eq!(f64::from_le_bytes(buf[12..20].try_into().unwrap()), 1.0);
    assert_eq!(f64::from_le_bytes(buf[20..28].try_into().unwrap()), 2.0);
    let back = read_weights(buf.as_slice()).unwrap();
    assert_eq!(back, vec![a, b]);
    assert!(read_weights(&buf[..buf.len() - 1]).is_err());
}

#[test]
fn train_writes_a_reproducible_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cmd_train(small_train(tmp.path())).unwrap();
    for f in ["manifest.json", "runlog.csv", "summary.json", "weights.bin"] {
        assert!(out.dir.join(f).is_file(), "{f}");
    }
    let s = &out.summary;
    assert!(s.final_train_acc >= 0.99 && s.final_test_acc >= 0.99, "{s:?}");
    assert_eq!(s.grokking_delay, s.first_test_epoch - s.first_train_epoch);
    let w = read_weights(fs::File::open(out.dir.join("weights.bin")).unwrap()).unwrap();
    assert_eq!(w.iter().map(|m| m.shape()).collect::<Vec<_>>(), vec![(22, 128), (128, 11)]);

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["content_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["resolved"]["train"]["epochs"], 300);
    let again = ExperimentConfig::load(Some(&out.dir.join("manifest.json")), &["tag=rerun".into()]).unwrap();
    let out2 = cmd_train(again).unwrap();
    assert_eq!(fs::read(out.dir.join("runlog.csv")).unwrap(), fs::read(out2.dir.join("runlog.csv")).unwrap());
    assert_eq!(fs::read(out.dir.join("weights.bin")).unwrap(), fs::read(out2.dir.join("weights.bin")).unwrap());
    let m2: serde_json::Value = serde_json::from_str(&fs::read_to_string(out2.dir.join("manifest.json")).unwrap()).unwrap();
    assert_ne!(manifest["content_hash"], m2["content_hash"]);
}

#[test]
fn undefined_delay_uses_the_sentinel() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small_train(tmp.path());
    c.task.p = 0.3;
    c.train.weight_decay = 0.0;
    let s = cmd_train(c).unwrap().summary;
    assert!(s.final_test_acc < 0.99);
    assert_eq!((s.first_test_epoch, s.grokking_delay), (-1, -1));
}

fn tiny_scan(out: &Path, workers: usize) -> ExperimentConfig {
    let mut c = cfg(out, &["scan.ms=[5,7]", "scan.ps=[0.9,0.5]", "scan.seeds=[0,1]", "scan.width=64", "scan.epochs=300"]);
    c.scan.workers = Some(workers);
    c
}

#[test]
fn scan_output_does_not_depend_on_worker_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let one = cmd_scan(tiny_scan(a.path(), 1)).unwrap();
    let many = cmd_scan(tiny_scan(b.path(), 3)).unwrap();
    assert_eq!(one.table.rows.len(), 8);
    let csv = fs::read(one.dir.join("boundary.csv")).unwrap();
    assert_eq!(csv, fs::read(many.dir.join("boundary.csv")).unwrap());
    assert_eq!(fs::read(one.dir.join("fit.json")).unwrap(), fs::read(many.dir.join("fit.json")).unwrap());
    let ps: Vec<f64> = one.table.rows.iter().filter(|r| r.m == 5).map(|r| r.p).collect();
    assert_eq!(ps, vec![0.5, 0.5, 0.9, 0.9]);
    assert_eq!(fs::read_dir(one.dir.join("cells")).unwrap().count(), 8);
}

#[test]
fn single_cell_scan_gives_one_row_and_divergence_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let c = cfg(tmp.path(), &["scan.ms=[7]", "scan.ps=[0.8]", "scan.seeds=[3]", "scan.width=32", "scan.epochs=50"]);
    let out = cmd_scan(c).unwrap();
    assert_eq!(out.table.rows.len(), 1);
    assert_eq!(fs::read_to_string(out.dir.join("boundary.csv")).unwrap().lines().count(), 2);

    let tmp = tempfile::tempdir().unwrap();
    let c = cfg(
        tmp.path(),
        &["scan.ms=[7]", "scan.ps=[0.8]", "scan.seeds=[0,1]", "scan.width=32", "scan.epochs=50", "scan.lr=1e6", "train.optimizer=gd"],
    );
    let out = cmd_scan(c).unwrap();
    assert!(out.table.rows.iter().all(|r| r.status == CellStatus::Diverged));
    assert_eq!(out.fit["diverged"], 2);
}

fn row(m: usize, p: f64, seed: u64, train: f64, test: f64) -> BoundaryRow {
    let status = if train >= 0.99 { CellStatus::Converged } else { CellStatus::Nonconverged };
    BoundaryRow { group: format!("Z_{m}"), m, p, seed, train_acc: train, test_acc: test, delay: -1, epochs_run: 1, status }
}

#[test]
fn boundary_extraction_and_interpolation() {
    let table = BoundaryTable {
        rows: vec![
            row(11, 0.3, 0, 1.0, 0.2),
            row(11, 0.3, 1, 1.0, 0.4),
            row(11, 0.3, 2, 0.5, 1.0),
            row(11, 0.5, 0, 1.0, 1.0),
            row(11, 0.5, 1, 1.0, 0.99),
            row(11, 0.5, 2, 1.0, 0.1),
            row(11, 0.7, 0, 1.0, 1.0),
            row(17, 0.1, 0, 1.0, 1.0),
            row(23, 0.1, 0, 1.0, 0.0),
        ],
    };
    let b = table.boundaries(0.99);
    assert_eq!(b.len(), 3);
    assert_eq!(b[0].points[0].median_test_acc, Some(0.30000000000000004));
    assert_eq!(b[0].points[0].nonconverged, 1);
    assert_eq!(b[0].p_star, Some(0.5));
    let want = 0.3 + (0.99 - 0.3) / (0.99 - 0.3) * 0.2;
    assert!((b[0].p_star_interp.unwrap() - want).abs() < 1e-12);
    assert_eq!((b[1].p_star, b[1].p_star_interp), (Some(0.1), Some(0.1)));
    assert_eq!((b[2].p_star, b[2].p_star_interp), (None, None));
}

#[test]
fn ascend_writes_a_maxima_catalog() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cmd_ascend(cfg(tmp.path(), &["group=cyclic 7", "ascend.seeds=8"])).unwrap();
    assert_eq!(out.rows.len(), 8);
    assert!(out.summary.converged >= 7);
    assert_eq!(out.summary.histogram.values().sum::<usize>(), out.summary.converged);
    for r in out.rows.iter().filter(|r| r.converged) {
        assert!((r.energy - 7.0 / 4.0).abs() < 1e-6 && r.c_max >= 0.99 && r.flat_lambda_min.is_finite());
    }
    let csv = fs::read_to_string(out.dir.join("maxima.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
    assert!(csv.starts_with("seed,converged,energy,theory_energy,label_k,c_max,sign,struct_residual"));

    let tmp = tempfile::tempdir().unwrap();
    let out = cmd_ascend(cfg(
        tmp.path(),
        &["group=cyclic 11", "ascend.seeds=6", "ascend.mode=\"modulated\"", "ascend.suppressed=[1,2,4,5]", "ascend.flatness=false"],
    ))
    .unwrap();
    assert_eq!(out.summary.mode, AscendMode::Modulated);
    assert_eq!(out.summary.histogram.keys().copied().collect::<Vec<_>>(), vec![3]);

    let tmp = tempfile::tempdir().unwrap();
    let out = cmd_ascend(cfg(
        tmp.path(),
        &["group=cyclic 5", "ascend.seeds=3", "ascend.mode=\"single_target\"", "ascend.target_weights=[0.5,0.3,0.2,0,0]"],
    ))
    .unwrap();
    assert!(out.rows.iter().all(|r| r.overlap.unwrap() >= 0.99));
}

#[test]
fn ascend_needs_a_catalog() {
    let tmp = tempfile::tempdir().unwrap();
    let table = tmp.path().join("z5.txt");
    fs::write(&table, groklab::groupkit::Group::cyclic(5).to_cayley_string()).unwrap();
    let c = cfg(tmp.path(), &[&format!(r#"group={{"kind":"cayley","path":"{}"}}"#, table.display()), "ascend.seeds=1"]);
    assert!(cmd_ascend(c).is_err());
    let cat = tmp.path().join("z5.json");
    fs::write(&cat, groklab::groupkit::Group::cyclic(5).catalog().unwrap().to_json().unwrap()).unwrap();
    let c = cfg(
        tmp.path(),
        &[&format!(r#"group={{"kind":"cayley","path":"{}","catalog":"{}"}}"#, table.display(), cat.display()), "ascend.seeds=2"],
    );
    assert_eq!(cmd_ascend(c).unwrap().rows.len(), 2);
}

#[test]
fn verify_dispatch() {
    let agg = suites::run("repulsion", 0).unwrap();
    assert_eq!(agg.suites.len(), 1);
    assert_eq!(agg.suites[0].reports.len(), 1);
    assert!(agg.pass);
    assert!(suites::run("nope", 0).is_err());
    assert_eq!(run(["groklab", "verify", "nope"]), 2);
    assert_eq!(run(["groklab", "verify", "muon"]), 0);
}

#[test]
fn group_recipes_and_round_trip() {
    let (g, rep) = cmd_group(Some("cyclic 7"), None).unwrap();
    assert!(rep.abelian);
    let text = g.to_cayley_string();
    assert_eq!(text.lines().filter(|l| l.split_whitespace().count() == 7).count(), 7);
    let (g, rep) = cmd_group(Some("dihedral 4"), None).unwrap();
    assert_eq!((rep.order, rep.abelian), (8, false));

    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("d4.txt");
    fs::write(&path, g.to_cayley_string()).unwrap();
    let (back, _) = cmd_group(None, Some(&path)).unwrap();
    assert_eq!(back.to_cayley_string().as_bytes(), fs::read(&path).unwrap().as_slice());

    let out = tmp.path().join("p.txt");
    assert_eq!(run(["groklab", "group", "product", "2,3", "--out", out.to_str().unwrap()]), 0);
    assert!(fs::read_to_string(&out).unwrap().starts_with("6\n"));

    fs::write(&path, "3\n0 1 2\n1 2 0\n2 0 0\n").unwrap();
    let err = cmd_group(None, Some(&path)).unwrap_err();
    assert!(format!("{err:#}").contains("invalid group"), "{err:#}");
    assert_eq!(run(["groklab", "group", "--file", path.to_str().unwrap()]), 2);
    assert_eq!(run(["groklab", "group", "torus", "3"]), 2);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(["groklab"]), 2);
    assert_eq!(run(["groklab", "train", "--set", "model.width=0"]), 2);
    assert_eq!(run(["groklab", "scan", "--set", "scan.seeds=[]"]), 2);
    assert_eq!(run(["groklab", "train", "--config", "/no/such/config.json"]), 2);
}
