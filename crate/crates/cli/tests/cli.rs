use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use utep_cli::sweep::{plan, Override, ABLATION_VARIANTS};
use utep_cli::RunSummary;
use utep_core::synthdata::DomainPair;
use utep_core::trainer::{ExperimentConfig, MetricsLog};

fn utep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_utep"))
        .args(args)
        .env("UTEP_LOG_LEVEL", "error")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("exp.cfg");
    fs::write(
        &path,
        format!("# tiny run\nmethod = dann_utep\nepochs = 3\nn_per_domain = 60\npasses = 4\n{extra}"),
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn run_writes_metrics_summary_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = dir.path().join("run");
    let o = utep(&["run", "--config", &cfg, "--seed", "7", "--out", out.to_str().unwrap(), "--dump-uncertainty"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
    assert_eq!(MetricsLog::from_csv(&metrics).unwrap().len(), 3);

    let summary = RunSummary::from_json(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.seed, 7);
    assert_eq!(summary.epochs, 3);
    assert_eq!(summary.wall_ms, 0);
    let echoed = summary.experiment_config().unwrap();
    assert_eq!(echoed.seed, 7);
    assert_eq!(echoed.epochs, 3);
    assert_eq!(echoed.passes, 4);
    assert_eq!(echoed.output_dir, out.display().to_string());

    assert!(out.join("checkpoint.json").exists());
    for epoch in 1..=3 {
        let name = format!("epoch_{epoch:04}.csv");
        assert!(out.join("uncertainty").join(&name).exists());
        assert!(out.join("pseudo").join(&name).exists());
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = utep(&["run", "--config", &cfg, "--seed", "7", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for file in ["metrics.csv", "checkpoint.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    // The summaries differ only in the echoed output directory.
    let sa = RunSummary::from_json(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    let mut sb = RunSummary::from_json(&fs::read_to_string(b.join("summary.json")).unwrap()).unwrap();
    sb.config.insert("output_dir".into(), sa.config["output_dir"].clone());
    assert_eq!(sa, sb);
}

#[test]
fn config_problems_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.cfg");
    let o = utep(&["run", "--config", missing.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("nope.cfg"), "{}", stderr(&o));

    let cfg = small_config(dir.path(), "learning_rate = 0.1\n");
    let o = utep(&["run", "--config", &cfg, "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));

    let cfg = small_config(dir.path(), "dataset = csv\ndataset_path = /definitely/missing.csv\n");
    let o = utep(&["run", "--config", &cfg, "--out", dir.path().join("y").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("/definitely/missing.csv"));

    let o = utep(&["no-such-command"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn divergence_exits_with_three_and_dumps_the_batch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "lr = 1e300\n");
    let out = dir.path().join("nan");
    let o = utep(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let dump = fs::read_to_string(out.join("nonfinite_batch.csv")).unwrap();
    assert!(dump.starts_with("row,domain,labeled,y,x0,x1"));
    assert!(!out.join("summary.json").exists());
}

#[test]
fn theory_harness_exit_codes() {
    let o = utep(&["verify-theory", "--trials", "1", "--seed", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let reports: Vec<serde_json::Value> = stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(reports.len(), 5);
    for r in &reports {
        assert_eq!(r["failures"], 0);
        assert!(r.get("violation").is_none());
        for key in ["name", "trials", "worst_margin"] {
            assert!(r.get(key).is_some(), "{key}");
        }
    }

    let o = utep(&["verify-theory", "--trials", "50", "--corrupt"]);
    assert_eq!(code(&o), 1);
    let stdout = String::from_utf8(o.stdout).unwrap();
    for line in stdout.lines() {
        let r: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(r["failures"].as_u64().unwrap() > 0, "{line}");
        assert!(r["violation"].is_object(), "{line}");
    }

    assert_eq!(code(&utep(&["verify-theory", "--trials", "0"])), 2);
}

#[test]
fn gradcheck_passes_and_is_reproducible() {
    let a = utep(&["gradcheck", "--seed", "3"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    let table = String::from_utf8(a.stdout).unwrap();
    for op in ["matmul", "softmax", "dropout (frozen mask)", "mc_variance", "loss_nce", "L_total (uda"] {
        assert!(table.contains(op), "missing {op}:\n{table}");
    }
    assert!(table.lines().last().unwrap().starts_with("max relative error"));
    let b = utep(&["gradcheck", "--seed", "3"]);
    assert_eq!(table, String::from_utf8(b.stdout).unwrap());
}

#[test]
fn sweep_runs_the_cartesian_product() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "epochs = 1\n");
    let out = dir.path().join("sweep");
    let o = utep(&[
        "sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--jobs", "2", "alpha_tce=0,1",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.contains(",ok,")));
    assert!(out.join("alpha_tce=0").join("metrics.csv").exists());
    assert!(out.join("alpha_tce=1").join("summary.json").exists());

    let base = dir.path().join("base");
    let o = utep(&["sweep", "--config", &cfg, "--out", base.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(base.join("sweep.csv")).unwrap().lines().count(), 2);
    assert!(base.join("base").join("metrics.csv").exists());
}

#[test]
fn sweep_records_failures_and_rejects_bad_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "epochs = 1\n");
    let out = dir.path().join("sweep");
    let o = utep(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "lr=0.01,1e300"]);
    assert_eq!(code(&o), 1);
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().filter(|l| l.contains(",ok,")).count(), 1);
    assert_eq!(table.lines().filter(|l| l.contains("failed:")).count(), 1);

    let o = utep(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "bogus=1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bogus"));
    assert_eq!(code(&utep(&["sweep", "--config", &cfg, "noequals"])), 2);
}

#[test]
fn ablation_plan_has_seven_variants_per_point() {
    let base = ExperimentConfig::default();
    let seeds = Override::parse("seed=0,1").unwrap();
    let runs = plan(&base, &[seeds], true).unwrap();
    assert_eq!(runs.len(), 14);
    let full = runs.iter().find(|r| r.variant == Some("full")).unwrap();
    assert!(full.config.use_pce && full.config.bias_target && full.config.mu_weight_source);
    let baseline = runs.iter().find(|r| r.variant == Some("baseline")).unwrap();
    assert!(!baseline.config.use_pce && !baseline.config.bias_source && !baseline.config.mu_weight_target);
    let mut toggles: Vec<[bool; 6]> = ABLATION_VARIANTS.iter().map(|v| v.toggles).collect();
    toggles.dedup();
    assert_eq!(toggles.len(), 7);

    let shift = Override::parse("blob_shift=1,0;3,0").unwrap();
    assert_eq!(shift.values, vec!["1,0", "3,0"]);
}

#[test]
fn gen_data_writes_a_readable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = dir.path().join("data");
    let o = utep(&["gen-data", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(out.join("dataset.csv")).unwrap();
    let pair = DomainPair::from_csv(&text).unwrap();
    assert_eq!(pair.source.len(), 60);
    assert_eq!(pair.target.len(), 60);
}
