//! End-to-end runs of the `remarnet` binary.

use std::path::Path;
use std::process::{Command, Output};

fn remarnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_remarnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A configuration small enough for many end-to-end runs.
const TINY: &str = "\
preset = synthetic
data.classes = 3
data.per_class = 6
data.height = 16
data.width = 16
model.channels = 4
model.rm_hidden = 4
model.fc_hidden = 4
train.epochs = 1
train.batch_size = 4
";

fn write_tiny(dir: &Path) -> String {
    let path = dir.join("tiny.ini");
    std::fs::write(&path, TINY).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn train_twice_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let outs: Vec<_> = ["a", "b"].iter().map(|n| dir.path().join(n)).collect();
    for out in &outs {
        let o = remarnet(&["train", "--config", &cfg, "--epochs", "3", "--seed", "7", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["metrics.csv", "checkpoint.tns"] {
        let a = std::fs::read(outs[0].join(file)).unwrap();
        let b = std::fs::read(outs[1].join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
    let metrics = std::fs::read_to_string(outs[0].join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
    assert!(metrics.starts_with("epoch,l_rm,l_ce,l_total,"));

    // The checkpoint evaluates and exports on its own.
    let ck = outs[0].join("checkpoint.tns");
    let o = remarnet(&["eval", "--checkpoint", ck.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("ensemble="));
    let emb = dir.path().join("emb.csv");
    let o = remarnet(&["export-emb", "--checkpoint", ck.to_str().unwrap(), "--out", emb.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&emb).unwrap();
    let header = text.lines().next().unwrap();
    // 4 channels at 16/4 × 16/4.
    assert_eq!(header.split(',').count(), 1 + 4 * 4 * 4);
    assert_eq!(text.lines().count(), 1 + 18);
}

#[test]
fn printed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let printed = remarnet(&["train", "--config", &cfg, "--seed", "11", "--print-config"]);
    assert!(printed.status.success());
    let resolved = dir.path().join("resolved.ini");
    std::fs::write(&resolved, &printed.stdout).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = remarnet(&["train", "--config", &cfg, "--seed", "11", "--out", a.to_str().unwrap()]);
    assert!(o.status.success());
    let o = remarnet(&["train", "--config", resolved.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(
        std::fs::read(a.join("metrics.csv")).unwrap(),
        std::fs::read(b.join("metrics.csv")).unwrap()
    );
}

#[test]
fn ablate_emits_one_row_per_round_and_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let out = dir.path().join("ablate");
    let o = remarnet(&["ablate", "--config", &cfg, "--rounds", "15", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rounds = std::fs::read_to_string(out.join("ablation_rounds.csv")).unwrap();
    let mut lines = rounds.lines();
    assert_eq!(lines.next(), Some("mode,prediction,round,test_acc"));
    let mut counts = std::collections::BTreeMap::new();
    for l in lines {
        let f: Vec<&str> = l.split(',').collect();
        *counts.entry((f[0].to_string(), f[1].to_string())).or_insert(0) += 1;
    }
    let cells: Vec<(&str, &str)> = counts.keys().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    assert_eq!(
        cells,
        vec![
            ("joint", "ensemble"),
            ("joint", "fc"),
            ("joint", "rm"),
            ("single-fc", "fc"),
            ("single-rm", "rm")
        ]
    );
    assert!(counts.values().all(|&c| c == 15));
    let summary = std::fs::read_to_string(out.join("ablation_summary.csv")).unwrap();
    assert_eq!(summary.lines().next(), Some("mode,prediction,mean,std"));
    assert_eq!(summary.lines().count(), 6);
    assert!(stdout(&o).contains("agreement violations: 0"));
}

#[test]
fn stability_emits_one_mean_per_prototype_set() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let out = dir.path().join("stab");
    let o = remarnet(&[
        "stability", "--config", &cfg, "--proto-sets", "9", "--rounds", "3", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(out.join("stability_summary.csv")).unwrap();
    assert_eq!(summary.lines().next(), Some("set,proto_seed,mean,std"));
    assert_eq!(summary.lines().count(), 1 + 9);
    let rounds = std::fs::read_to_string(out.join("stability_rounds.csv")).unwrap();
    assert_eq!(rounds.lines().count(), 1 + 27);
    assert!(stdout(&o).contains("spread="));
}

#[test]
fn wilcoxon_reads_two_columns_of_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    std::fs::write(&a, "acc\n1\n2\n3\n4\n5\n").unwrap();
    std::fs::write(&b, "acc\n0\n0\n0\n0\n0\n").unwrap();
    let o = remarnet(&["wilcoxon", "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "n=5 W+=15 p=0.0625 method=exact\n");

    std::fs::write(&b, "acc\n1\n2\n3\n4\n5\n").unwrap();
    let o = remarnet(&["wilcoxon", "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_preset_micro_passes() {
    let o = remarnet(&["gradcheck", "--preset", "micro"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let line = text.lines().last().unwrap();
    let err: f64 = line
        .split("max relative error=")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse().ok())
        .unwrap();
    assert!(err < 1e-3, "{line}");
}

#[test]
fn exit_codes() {
    assert_eq!(remarnet(&[]).status.code(), Some(1));
    assert_eq!(remarnet(&["teleport"]).status.code(), Some(1));
    assert_eq!(remarnet(&["train", "--seed"]).status.code(), Some(1));
    let o = remarnet(&["train", "--no-such-key", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));
    assert_eq!(remarnet(&["train", "--epochs", "lots"]).status.code(), Some(2));
    assert_eq!(remarnet(&["eval", "--checkpoint", "/nonexistent/ck.tns"]).status.code(), Some(2));
    // A step size this large drives the joint loss to NaN.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let o = remarnet(&["train", "--config", &cfg, "--lr-fc", "1e38", "--lr-embedding", "1e38", "--epochs", "3",
        "--out", dir.path().join("nan").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
