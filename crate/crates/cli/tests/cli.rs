use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "num_layers=2",
    "d_model=16",
    "num_heads=2",
    "ffn_dim=32",
    "branch_layers=[1]",
    "d_ee=8",
    "branch_heads=1",
    "lexicon_size=6",
    "train_size=12",
    "dev_size=4",
    "test_size=4",
    "epochs_ft1=1",
    "epochs_ft2=1",
    "batch_size=4",
    "confidence_thresholds=[0.5,0.9]",
    "entropy_thresholds=[0.1,0.5]",
];

fn earlyexit(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_earlyexit"));
    cmd.arg("--quiet");
    for kv in TINY {
        cmd.args(["--set", kv]);
    }
    cmd.args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = earlyexit(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn stages_chain_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let ft1 = dir.path().join("ft1.ckpt");
    let ft2 = dir.path().join("ft2.ckpt");
    let ft2_log = dir.path().join("ft2.log");

    ok(&["gen", "--out", p(&corpus)]);
    for split in ["train", "dev", "test"] {
        assert!(corpus.join(split).is_dir(), "missing {split}");
    }

    ok(&["train", "--corpus", p(&corpus), "--out", p(&ft1)]);
    ok(&[
        "branches", "--corpus", p(&corpus), "--checkpoint", p(&ft1), "--out", p(&ft2), "--log", p(&ft2_log),
    ]);
    assert!(fs::read_to_string(&ft2_log).unwrap().contains("L_FT2="));

    let eval = ok(&["eval", "--corpus", p(&corpus), "--checkpoint", p(&ft2), "--mode", "branch1"]);
    let mut lines = eval.lines();
    assert!(lines.next().unwrap().starts_with("criterion,"));
    assert_eq!(lines.count(), 1);

    let report = dir.path().join("sweep.csv");
    ok(&[
        "sweep",
        "--corpus",
        p(&corpus),
        "--checkpoint",
        p(&ft2),
        "--criterion",
        "confidence",
        "--thresholds",
        "0.2,0.6,1.0",
        "--out",
        p(&report),
    ]);
    let text = fs::read_to_string(&report).unwrap();
    assert_eq!(text.lines().count(), 1 + 1 + 3, "{text}");

    let layers = ok(&["layers", "--corpus", p(&corpus), "--checkpoint", p(&ft2), "--split", "dev"]);
    let heads: Vec<&str> = layers.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(heads, ["branch1", "head"]);

    let plots = dir.path().join("plots");
    ok(&["plot", "--report", p(&report), "--out", p(&plots)]);
    assert!(plots.join("tradeoff_confidence.svg").is_file());
    assert!(plots.join("exit_histogram.svg").is_file());
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    ok(&["run", "--out", p(&out)]);
    for f in [
        "config.toml",
        "environment.txt",
        "ft1.ckpt",
        "ft1.log",
        "ft2.ckpt",
        "ft2.log",
        "report.csv",
        "decodes.csv",
        "layers.csv",
        "plots/exit_histogram.svg",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    // baseline + two points per criterion
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 1 + 2 + 2);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, "seed = 11\nfeature_dim = 8\n").unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["--config", p(&cfg), "gen", "--out", p(&a)]);
    ok(&["--config", p(&cfg), "--seed", "12", "--set", "feature_dim=12", "gen", "--out", p(&b)]);

    let manifest = |d: &Path| fs::read_to_string(d.join("test").join("manifest.tsv")).unwrap();
    let dims = |m: &str| -> Vec<String> {
        m.lines().filter(|l| !l.starts_with('#')).map(|l| l.split('\t').nth(3).unwrap().to_string()).collect()
    };
    assert_eq!(dims(&manifest(&a)), vec!["8"; 4]);
    assert_eq!(dims(&manifest(&b)), vec!["12"; 4]);
}

#[test]
fn failures_are_stage_tagged_and_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");

    let out = earlyexit(&["train", "--corpus", p(&missing), "--out", p(&dir.path().join("x"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: [ingest]"), "{err}");

    let out = earlyexit(&["--set", "no_such_key=1", "gen", "--out", p(&missing)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: [config]"));

    let out = earlyexit(&["--set", "noise_std=-1", "gen", "--out", p(&missing)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: [config]"));
}

#[test]
fn plot_refuses_a_lone_row() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.csv");
    let header = "criterion,threshold,wer,mean_wall_clock,mean_op_count,time_saving,op_saving,mean_exit_layer,exit_histogram";
    fs::write(&report, format!("{header}\nbaseline,,0.1,0.01,1000,0,0,2,2:4\n")).unwrap();
    let out = earlyexit(&["plot", "--report", p(&report), "--out", p(&dir.path().join("plots"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: [plot]"));
}
