use std::path::Path;
use std::process::{Command, Output};

use metricforge::dataset::to_csv;
use metricforge::{Dataset, MetricModel};
use metricforge_oracles::best_threshold_accuracy;

fn metricforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metricforge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate(dir: &Path, extra: &[&str]) -> std::path::PathBuf {
    let path = dir.join("data.csv");
    let mut args = vec!["generate", "--out", p(&path)];
    args.extend_from_slice(extra);
    let out = metricforge(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn train_writes_a_loadable_model_and_a_converged_trace() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), &["--seed", "7"]);
    for algo in ["pcml", "ncml"] {
        let out_dir = dir.path().join(algo);
        let out = metricforge(&["train", "--data", p(&data), "--algo", algo, "--out-dir", p(&out_dir)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let model = MetricModel::load(&out_dir.join("model.txt")).unwrap();
        assert_eq!(model.dim(), 10);
        assert!(model.meta().converged);

        let trace = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
        let mut lines = trace.lines();
        assert_eq!(lines.next(), Some("iter,primal,dual,gap,seconds"));
        let gaps: Vec<f64> = lines.map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
        let (first, last) = (gaps[0], *gaps.last().unwrap());
        assert!(last < 0.01 * first, "{algo}: {gaps:?}");
    }
}

#[test]
fn training_to_the_iteration_cap_exits_with_code_5() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), &["--n", "80", "--dim", "4", "--seed", "2"]);
    let out_dir = dir.path().join("out");
    let out = metricforge(&[
        "train", "--data", p(&data), "--max-iter", "1", "--eps", "1e-9", "--out-dir", p(&out_dir),
    ]);
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("model.txt").exists());
}

#[test]
fn usage_errors_exit_with_code_2() {
    let out = metricforge(&["train", "--data", "x.csv", "--format", "xml"]);
    assert_eq!(code(&out), 2);
    let out = metricforge(&["train", "--data", "x.csv", "--C=-1"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("`C`"));
    let out = metricforge(&["frobnicate"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_and_malformed_inputs_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = metricforge(&["train", "--data", p(&dir.path().join("absent.csv"))]);
    assert_eq!(code(&out), 3);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1.0,2.0,0\n1.0,oops,1\n").unwrap();
    let out = metricforge(&["train", "--data", p(&bad), "--out-dir", p(dir.path())]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));
}

#[test]
fn config_file_values_apply_and_flags_override_them() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), &["--n", "60", "--dim", "3", "--seed", "1"]);
    let config = dir.path().join("run.toml");
    std::fs::write(&config, format!("data = {:?}\nalgo = \"ncml\"\nC = 0.2\n", p(&data))).unwrap();
    let out_dir = dir.path().join("o");
    let out = metricforge(&["train", "--config", p(&config), "--C", "0.3", "--out-dir", p(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let model = MetricModel::load(&out_dir.join("model.txt")).unwrap();
    assert_eq!(model.meta().c, 0.3);
    assert_eq!(model.meta().algorithm.to_string(), "ncml");
}

#[test]
fn cv_on_separated_blobs_has_zero_error_and_deterministic_summary() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), &["--n", "60", "--dim", "3", "--separation", "20", "--seed", "5"]);
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = metricforge(&["cv", "--data", p(&data), "--folds", "5", "--seed", "9", "--out-dir", p(&out_dir)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let (a, b) = (run("a"), run("b"));
    let summary = std::fs::read(a.join("cv_summary.json")).unwrap();
    assert_eq!(summary, std::fs::read(b.join("cv_summary.json")).unwrap());
    let json: serde_json::Value = serde_json::from_slice(&summary).unwrap();
    assert_eq!(json["mean_error"], 0.0);
    assert_eq!(json["runs"][0]["fold_errors"].as_array().unwrap().len(), 5);
    let timing: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("cv_timing.json")).unwrap()).unwrap();
    assert!(timing["total_train_seconds"].as_f64().unwrap() >= 0.0);
    let folds = std::fs::read_to_string(a.join("cv_folds.csv")).unwrap();
    assert_eq!(folds.lines().count(), 6);
}

#[test]
fn verify_matches_an_exhaustive_threshold_scan() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![(i * 7 % 5) as f64, (i * 3 % 4) as f64 * 0.5]).collect();
    let data = Dataset::from_rows(&rows, vec![0; 12]).unwrap();
    let features = dir.path().join("features.csv");
    std::fs::write(&features, to_csv(&data)).unwrap();
    let pairs: Vec<(usize, usize, bool)> = (0..12).map(|i| (i, (i * 5 + 1) % 12, i % 3 == 0)).collect();
    let mut text = String::from("idx_a,idx_b,matched\n");
    for (a, b, m) in &pairs {
        text.push_str(&format!("{a},{b},{}\n", *m as u8));
    }
    let pair_file = dir.path().join("pairs.csv");
    std::fs::write(&pair_file, text).unwrap();
    let model = dir.path().join("identity.txt");
    MetricModel::identity(2).save(&model).unwrap();

    let out = metricforge(&[
        "verify", "--model", p(&model), "--data", p(&features), "--pairs", p(&pair_file), "--out-dir", p(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let dists: Vec<f64> = pairs
        .iter()
        .map(|&(a, b, _)| rows[a].iter().zip(&rows[b]).map(|(x, y)| (x - y) * (x - y)).sum())
        .collect();
    let matched: Vec<bool> = pairs.iter().map(|p| p.2).collect();
    let expected = best_threshold_accuracy(&dists, &matched);
    assert!(stdout(&out).contains(&format!("best accuracy {expected:.4}")), "{}", stdout(&out));
    let roc = std::fs::read_to_string(dir.path().join("roc.csv")).unwrap();
    assert_eq!(roc.lines().next(), Some("threshold,tpr,fpr,accuracy"));
    assert_eq!(roc.lines().count(), 1 + 202);

    std::fs::write(&pair_file, "").unwrap();
    let out = metricforge(&[
        "verify", "--model", p(&model), "--data", p(&features), "--pairs", p(&pair_file), "--out-dir", p(dir.path()),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn inspect_reports_psd_status_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("identity.txt");
    MetricModel::identity(3).save(&model).unwrap();
    let out = metricforge(&["inspect", p(&model)]);
    assert_eq!(code(&out), 0);
    let report = stdout(&out);
    assert!(report.contains("PSD: yes"));
    assert!(report.contains("trace: 3.0000000000000000e0"), "{report}");

    let text = std::fs::read_to_string(&model).unwrap();
    let corrupted = text.replacen("1.0000000000000000e0 0", "-1.0000000000000000e0 0", 1);
    assert_ne!(text, corrupted);
    std::fs::write(&model, corrupted).unwrap();
    let out = metricforge(&["inspect", p(&model)]);
    assert_eq!(code(&out), 4);
    assert!(stdout(&out).contains("PSD: NO"));

    std::fs::write(&model, "metricforge-model v1\nalgorithm pcml\n").unwrap();
    assert_eq!(code(&metricforge(&["inspect", p(&model)])), 3);
}
