use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tunefree::dataset::read_libsvm_file;
use tunefree::harness::parse_csv;
use tunefree::problem::{ErmProblem, LogisticProblem};

fn tunefree(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tunefree"))
        .args(args)
        .current_dir(dir)
        .env("TUNEFREE_CACHE_DIR", dir.join("cache"))
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn synthetic(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let path = dir.join(format!("data-{n}-{seed}.svm"));
    ok(tunefree(dir, &["gen", "--n", &n.to_string(), "--d", "8", "--seed", &seed.to_string(), "--out", path.to_str().unwrap()]));
    path
}

#[test]
fn gen_writes_one_line_per_sample_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.svm");
    let b = dir.path().join("b.svm");
    for p in [&a, &b] {
        ok(tunefree(dir.path(), &["gen", "--n", "100", "--d", "10", "--seed", "1", "--out", p.to_str().unwrap()]));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 100);
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(tunefree(d, &["gen", "--n", "1", "--d", "3"]).status.code(), Some(2));
    assert_eq!(tunefree(d, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(tunefree(d, &["rates", "--figure", "9z"]).status.code(), Some(2));
    assert_eq!(tunefree(d, &["run", "--data", "missing.svm", "--mu", "0.1", "--algo", "gd"]).status.code(), Some(1));

    let data = synthetic(d, 300, 3);
    let data = data.to_str().unwrap();
    let both = tunefree(d, &["run", "--data", data, "--mu", "0.1", "--kappa", "10", "--algo", "gd"]);
    assert_eq!(both.status.code(), Some(2));

    let diverged = tunefree(
        d,
        &["run", "--data", data, "--kappa", "10", "--algo", "svrg", "--step", "fixed", "--avg", "u", "--eta-over-L", "500", "--m-kappa", "1", "--passes", "60", "--no-reference"],
    );
    assert_eq!(diverged.status.code(), Some(3), "{}", String::from_utf8_lossy(&diverged.stderr));
    assert!(!diverged.stderr.is_empty());
}

#[test]
fn bb_sarah_run_has_monotone_ifo() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(dir.path(), 300, 5);
    let csv = ok(tunefree(dir.path(), &["run", "--data", data.to_str().unwrap(), "--kappa", "50", "--algo", "sarah", "--step", "bb", "--avg", "w"]));
    let rows = parse_csv(&csv).unwrap();
    assert!(rows.len() > 2);
    for w in rows.windows(2) {
        assert!(w[1].point.ifo_total > w[0].point.ifo_total);
    }
}

#[test]
fn sgd_records_decaying_step_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(dir.path(), 200, 6);
    let csv = ok(tunefree(dir.path(), &["run", "--data", data.to_str().unwrap(), "--mu", "0.01", "--algo", "sgd", "--passes", "6"]));
    let l = LogisticProblem::new(read_libsvm_file(&data, None).unwrap(), 0.01).unwrap().smoothness();
    let rows = parse_csv(&csv).unwrap();
    assert_eq!(rows.len(), 7);
    for (epoch, row) in rows[1..].iter().enumerate() {
        let expected = 0.05 / (l * (epoch as f64 + 1.0));
        assert!((row.point.eta_s - expected).abs() <= 1e-15 * expected, "{} vs {expected}", row.point.eta_s);
    }
}

#[test]
fn svrg_eighth_step_24_kappa_halves_the_gap_each_loop() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(dir.path(), 300, 7);
    let csv = ok(tunefree(
        dir.path(),
        &["run", "--data", data.to_str().unwrap(), "--kappa", "20", "--algo", "svrg", "--step", "fixed", "--avg", "w", "--eta-over-L", "0.125", "--m-kappa", "24", "--passes", "30"],
    ));
    let gaps: Vec<f64> = parse_csv(&csv).unwrap().iter().map(|r| r.point.gap.unwrap()).collect();
    let mut checked = 0;
    for w in gaps.windows(2) {
        if w[0] > 1e-10 {
            checked += 1;
            assert!(w[1] / w[0] <= 0.55, "gap ratio {}", w[1] / w[0]);
        }
    }
    assert!(checked >= 3);
}

#[test]
fn rates_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = ok(tunefree(dir.path(), &["rates", "--figure", "1b"]));
    assert_eq!(csv.lines().next().unwrap(), "scheme,x,lambda,defined");
    let near = csv
        .lines()
        .filter(|l| l.starts_with("sarah-w,"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse::<f64>().unwrap(), f[2].parse::<f64>().unwrap())
        })
        .min_by(|a, b| (a.0 / 5e5).ln().abs().total_cmp(&(b.0 / 5e5).ln().abs()))
        .unwrap();
    assert!((near.0 / 5e5 - 1.0).abs() < 0.03, "closest grid point {}", near.0);
    assert!((near.1 - 0.8).abs() <= 0.05, "lambda {}", near.1);

    let one = ok(tunefree(dir.path(), &["rates", "--custom", "--sweep", "m", "--values", "400000", "--schemes", "svrg-w,svrg-u,sarah-u"]));
    assert_eq!(one.lines().count(), 4);

    for fig in ["1a", "2", "4b-analytic"] {
        assert!(ok(tunefree(dir.path(), &["rates", "--figure", fig])).lines().count() > 80);
    }
}

#[test]
fn bench_runs_the_lineup_on_equal_budgets() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(dir.path(), 300, 8);
    for seed in 0..5 {
        let out = dir.path().join(format!("bench-{seed}"));
        let summary = ok(tunefree(
            dir.path(),
            &["bench", "--data", data.to_str().unwrap(), "--kappa", "100", "--passes", "40", "--seed", &seed.to_string(), "--out-dir", out.to_str().unwrap(), "--plot"],
        ));
        let rows: Vec<Vec<String>> = summary.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
        assert_eq!(rows.len(), 5);
        let sgd: f64 = rows[0][4].parse().unwrap();
        for r in &rows[1..] {
            let passes: f64 = r[2].parse().unwrap();
            assert!((40.0..45.0).contains(&passes), "{} spent {passes} passes", r[1]);
            assert!(r[4].parse::<f64>().unwrap() < sgd, "seed {seed}: {} not below SGD", r[1]);
        }
        let mut files: Vec<String> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        files.sort();
        assert_eq!(files.len(), 7, "{files:?}");
        assert!(files.contains(&"comparison.csv".to_string()) && files.contains(&"comparison.svg".to_string()));
        let merged = parse_csv(&std::fs::read_to_string(out.join("comparison.csv")).unwrap()).unwrap();
        let mut ids: Vec<u64> = merged.iter().map(|r| r.config_id).collect();
        ids.dedup();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    }
}

#[test]
fn reference_prints_optimum_and_uses_cache() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(dir.path(), 200, 9);
    let args = ["reference", "--data", data.to_str().unwrap(), "--kappa", "30"];
    let first = ok(tunefree(dir.path(), &args));
    assert!(first.starts_with("f_star="));
    assert!(std::fs::read_dir(dir.path().join("cache")).unwrap().count() >= 1);
    assert_eq!(first, ok(tunefree(dir.path(), &args)));
}

#[test]
fn help_touches_no_files() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["--help"][..], &["run", "--help"], &["bench", "--help"], &["--version"]] {
        let out = tunefree(dir.path(), args);
        assert_eq!(out.status.code(), Some(0));
        assert!(!out.stdout.is_empty());
    }
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}
