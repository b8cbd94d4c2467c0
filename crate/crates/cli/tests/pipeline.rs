//! End-to-end runs of the `medsel` binary on small problems.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn medsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medsel")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = medsel(args);
    assert!(out.status.success(), "medsel {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn manifest(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

const SIM_SMALL: &str = r#"
n = 60
p = 30
proportions = [0.1, 0.1, 0.1, 0.7]
setting = "fixed_i"
seed = 11
"#;

const FIT_SHORT: &str = r#"
n_chains = 2

[chain]
n_iter = 400
burn_in = 200
trace_mediators = [0, 1, 2]
"#;

fn simulate_small(dir: &Path) -> PathBuf {
    let cfg = write(dir, "sim.toml", SIM_SMALL);
    let out = dir.join("sim");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    out
}

#[test]
fn simulate_writes_dataset_truth_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sim.toml",
        "n = 100\np = 200\nproportions = [0.05, 0.05, 0.05, 0.85]\nsetting = \"fixed_i\"\nseed = 3\n",
    );
    let out = dir.path().join("a");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out)]);

    let data = fs::read_to_string(out.join("data.csv")).unwrap();
    let mut lines = data.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.iter().filter(|h| h.starts_with('m')).count(), 200);
    assert_eq!(lines.count(), 100);
    let truth = fs::read_to_string(out.join("truth.csv")).unwrap();
    let actives = truth.lines().skip(1).filter(|l| l.split(',').nth(1) == Some("1")).count();
    assert_eq!(actives, 10);

    let m = manifest(&out.join("manifest.json"));
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["seed"], 3);
    assert_eq!(m["status"], "complete");
    assert_eq!(m["outputs"].as_array().unwrap().len(), 3);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim.toml", SIM_SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["simulate", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["simulate", "--config", s(&cfg), "--out", s(&b)]);
    for f in ["data.csv", "truth.csv", "config.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (ma, mb) = (manifest(&a.join("manifest.json")), manifest(&b.join("manifest.json")));
    assert_eq!(ma["outputs"], mb["outputs"]);
    assert_eq!(ma["config_hash"], mb["config_hash"]);

    // the echoed config reproduces the run
    let c = dir.path().join("c");
    ok(&["simulate", "--config", s(&a.join("config.toml")), "--out", s(&c)]);
    assert_eq!(fs::read(a.join("data.csv")).unwrap(), fs::read(c.join("data.csv")).unwrap());

    // a different seed changes the data
    let d = dir.path().join("d");
    ok(&["simulate", "--config", s(&cfg), "--seed", "12", "--out", s(&d)]);
    assert_ne!(fs::read(a.join("data.csv")).unwrap(), fs::read(d.join("data.csv")).unwrap());
}

#[test]
fn schema_errors_are_listed_together() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.toml",
        "n = 0\np = 30\nproportions = [0.1, 0.1, 0.1, 0.6]\nsetting = \"fixed_i\"\nseed = 1\n",
    );
    let out = medsel(&["simulate", "--config", s(&bad), "--out", s(&dir.path().join("x"))]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("proportions"), "{err}");
    assert!(err.contains("n: must be at least 1"), "{err}");
    assert!(!dir.path().join("x").join("data.csv").exists());

    let unknown = write(dir.path(), "unknown.toml", &format!("{SIM_SMALL}colour = 3\n"));
    let out = medsel(&["simulate", "--config", s(&unknown), "--out", s(&dir.path().join("y"))]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("colour"), "{}", stderr(&out));
}

#[test]
fn fit_runs_every_method_and_records_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate_small(dir.path());
    let cfg = write(dir.path(), "fit.toml", FIT_SHORT);
    let out = dir.path().join("fit");
    for method in ["gmm", "ptg", "bilasso"] {
        let o =
            ok(&["fit", "--method", method, "--data", s(&sim.join("data.csv")), "--config", s(&cfg), "--out", s(&out)]);
        let summary = fs::read_to_string(out.join(format!("{method}_summary.csv"))).unwrap();
        assert_eq!(summary.lines().count(), 31);
        let m = manifest(&out.join(format!("{method}_manifest.json")));
        assert_eq!(m["status"], "complete");
        assert!(m["wall_seconds"].as_f64().unwrap() > 0.0);
        assert_eq!(m["inputs"][0]["name"], "data");
        if method == "ptg" {
            // no thresholds in the config: they are calibrated and logged
            assert!(stderr(&o).contains("lambda calibrated"), "{}", stderr(&o));
            assert_eq!(m["details"]["hyperparameters"]["lambda_calibrated"], true);
        }
    }
    let trace = fs::read_to_string(out.join("gmm_trace_chain1.csv")).unwrap();
    assert!(trace.lines().next().unwrap().ends_with("active_0,active_1,active_2"));
    assert_eq!(trace.lines().count(), 201);
    assert!(!out.join("bilasso_trace_chain0.csv").exists());
}

#[test]
fn fit_is_deterministic_per_seed_and_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate_small(dir.path());
    let cfg = write(dir.path(), "fit.toml", FIT_SHORT);
    let data = sim.join("data.csv");
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    ok(&["fit", "--method", "ptg", "--data", s(&data), "--config", s(&cfg), "--seed", "5", "--out", s(&a)]);
    ok(&[
        "fit",
        "--method",
        "ptg",
        "--data",
        s(&data),
        "--config",
        s(&cfg),
        "--seed",
        "5",
        "--workers",
        "2",
        "--out",
        s(&b),
    ]);
    ok(&["fit", "--method", "ptg", "--data", s(&data), "--config", s(&cfg), "--seed", "6", "--out", s(&c)]);
    for f in ["ptg_summary.csv", "ptg_trace_chain0.csv", "ptg_trace_chain1.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("ptg_trace_chain0.csv")).unwrap(), fs::read(a.join("ptg_trace_chain1.csv")).unwrap());
    assert_ne!(fs::read(a.join("ptg_summary.csv")).unwrap(), fs::read(c.join("ptg_summary.csv")).unwrap());
}

#[test]
fn fit_rejects_bad_chain_settings() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate_small(dir.path());
    let cfg = write(dir.path(), "fit.toml", "n_chains = 0\n[chain]\nn_iter = 100\nburn_in = 200\nthin = 1\n");
    let out = medsel(&[
        "fit",
        "--method",
        "gmm",
        "--data",
        s(&sim.join("data.csv")),
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("f")),
    ]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("n_chains") && err.contains("chain:"), "{err}");
}

fn summary_csv(scores: &[f64]) -> String {
    let mut t = String::from("index,pip,beta_m,alpha_a,nie_hat,score\n");
    for (j, v) in scores.iter().enumerate() {
        t.push_str(&format!("{j},{v},0,0,{},{v}\n", v * 0.1));
    }
    t
}

fn aggregate_auc(dir: &Path) -> Vec<(String, f64)> {
    let text = fs::read_to_string(dir.join("aggregate.csv")).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn evaluate_scores_perfect_and_shuffled_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sim.toml",
        "n = 30\np = 400\nproportions = [0.1, 0.1, 0.1, 0.7]\nsetting = \"fixed_i\"\nseed = 2\n",
    );
    let sim = dir.path().join("sim");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&sim)]);
    let truth = fs::read_to_string(sim.join("truth.csv")).unwrap();
    // group 1 holds the mediators with both effects nonzero
    let active: Vec<bool> = truth.lines().skip(1).map(|l| l.split(',').nth(1) == Some("1")).collect();

    let perfect: Vec<f64> = active.iter().map(|&a| if a { 0.95 } else { 0.05 }).collect();
    // a fixed pseudo-random permutation unrelated to the truth
    let shuffled: Vec<f64> = (0..active.len()).map(|j| ((j * 7919 + 13) % 401) as f64 / 401.0).collect();
    let p1 = write(dir.path(), "perfect_summary.csv", &summary_csv(&perfect));
    let p2 = write(dir.path(), "shuffled_summary.csv", &summary_csv(&shuffled));
    let out = dir.path().join("eval");
    ok(&[
        "evaluate",
        "--summary",
        s(&p1),
        "--summary",
        s(&p2),
        "--truth",
        s(&sim.join("truth.csv")),
        "--cutoffs",
        "0.5,0.9",
        "--out",
        s(&out),
    ]);

    let auc = aggregate_auc(&out);
    assert_eq!(auc[0], ("perfect".to_string(), 1.0));
    assert_eq!(auc[1].0, "shuffled");
    assert!((auc[1].1 - 0.5).abs() < 0.15, "{}", auc[1].1);
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.lines().next().unwrap().contains("fdr_pip_gt_0.9"));
    let m = manifest(&out.join("evaluate_manifest.json"));
    assert_eq!(m["inputs"].as_array().unwrap().len(), 3);
}

#[test]
fn evaluate_names_a_missing_truth_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "gmm_summary.csv", &summary_csv(&[0.1, 0.9]));
    let missing = dir.path().join("nowhere").join("truth.csv");
    let out = medsel(&["evaluate", "--summary", s(&p), "--truth", s(&missing), "--out", s(&dir.path().join("e"))]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains(s(&missing)), "{}", stderr(&out));
}

const STUDY: &str = r#"
replicates = 2
methods = ["gmm", "ptg", "bilasso"]
cutoffs = [0.5, 0.9]

[simulation]
n = 60
p = 20
proportions = [0.1, 0.1, 0.1, 0.7]
setting = "fixed_i"
seed = 4

[fit.chain]
n_iter = 300
burn_in = 150

[fit.ptg]
lambda = { l0 = 0.15, l1 = 0.4, l2 = 0.4 }
"#;

#[test]
fn replicate_aggregates_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "study.toml", STUDY);
    let out = dir.path().join("study");
    ok(&["replicate", "--config", s(&cfg), "--workers", "2", "--out", s(&out)]);
    let aggregate = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert!(aggregate.lines().next().unwrap().contains("auc_se"));
    assert_eq!(aggregate.lines().count(), 4);
    let first = fs::read(out.join("metrics.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 7);

    // lose one replicate as if the run had been interrupted
    fs::remove_file(out.join("replicates/r0001/manifest.json")).unwrap();
    let again = ok(&["replicate", "--config", s(&cfg), "--out", s(&out)]);
    let log = stderr(&again);
    assert!(log.contains("replicate 0: reused") && log.contains("replicate 1: done"), "{log}");
    assert_eq!(fs::read(out.join("metrics.csv")).unwrap(), first);
    assert_eq!(manifest(&out.join("manifest.json"))["details"]["reused"], 1);

    // a different seed invalidates every replicate
    let third = ok(&["replicate", "--config", s(&cfg), "--seed", "9", "--out", s(&out)]);
    assert!(!stderr(&third).contains("reused)") || stderr(&third).contains("(0 reused)"));
}

#[test]
fn calibrate_lambda_hits_the_target() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cal");
    let o = ok(&["calibrate-lambda", "--tau-beta2", "0.1", "--draws", "200000", "--seed", "1", "--out", s(&out)]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let achieved = v["achieved"].as_f64().unwrap();
    assert!((achieved - 0.01).abs() < 0.002, "{achieved}");
    assert!(v["lambda"]["l0"].as_f64().unwrap() > 0.0);
    assert_eq!(fs::read(out.join("lambda.json")).unwrap(), o.stdout);

    let o = medsel(&["calibrate-lambda"]);
    assert!(!o.status.success());
}
