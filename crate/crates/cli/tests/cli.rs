use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psfh-eval"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// A small synthetic challenge with two mock teams, already scored.
fn scored() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = run(p, &["--out-dir", "syn", "synth", "--cases", "8", "--teams", "2", "--size", "96", "--seed", "4"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(p, &["--out-dir", "res", "evaluate", "--manifest", "syn/manifest.csv", "--predictions", "syn/predictions"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

#[test]
fn synth_writes_masks_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["--out-dir", "s", "synth", "--cases", "3", "--size", "64"]);
    assert_eq!(code(&out), 0);
    let manifest = std::fs::read_to_string(dir.path().join("s/manifest.csv")).unwrap();
    let mut lines = manifest.lines();
    assert!(lines.next().unwrap().ends_with("aop_analytic"));
    assert_eq!(lines.count(), 3);
    assert!(dir.path().join("s/gt/case_0002.png").exists());
    assert!(!dir.path().join("s/predictions").exists());
}

#[test]
fn evaluate_then_rank_and_report() {
    let dir = scored();
    let p = dir.path();
    let metrics = std::fs::read_to_string(p.join("res/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 8 * 2 * 3);
    let biometry = std::fs::read_to_string(p.join("res/biometry.csv")).unwrap();
    assert_eq!(biometry.lines().count(), 1 + 8 * 2);

    let out = run(p, &["--out-dir", "rk", "--scheme", "mean-then-rank", "rank", "--metrics", "res/metrics.csv"]);
    assert_eq!(code(&out), 0);
    let board = read_json(&p.join("rk/leaderboard.json"));
    assert_eq!(board["scheme"], "MeanThenRank");
    assert_eq!(board["tasks"].as_array().unwrap().len(), 9);

    let args = [
        "--out-dir", "rep", "report", "--metrics", "res/metrics.csv", "--biometry", "res/biometry.csv", "--samples", "50",
    ];
    assert_eq!(code(&run(p, &args)), 0);
    for f in ["stability.json", "figures/tau.svg", "figures/delta_aop.json", "figures/blob_DSC_PS.svg", "strata_institution.json"] {
        assert!(p.join("rep").join(f).exists(), "{f}");
    }
}

#[test]
fn report_is_byte_stable() {
    let dir = scored();
    let p = dir.path();
    for out in ["r1", "r2"] {
        let args = ["--out-dir", out, "report", "--metrics", "res/metrics.csv", "--samples", "40", "--seed", "7"];
        assert_eq!(code(&run(p, &args)), 0);
    }
    let mut names: Vec<_> = walk(&p.join("r1"));
    names.sort();
    assert!(!names.is_empty());
    for rel in names {
        assert_eq!(std::fs::read(p.join("r1").join(&rel)).unwrap(), std::fs::read(p.join("r2").join(&rel)).unwrap());
    }
}

fn walk(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(root).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path).into_iter().map(|p| Path::new(path.file_name().unwrap()).join(p)));
        } else {
            out.push(path.file_name().unwrap().into());
        }
    }
    out
}

#[test]
fn bootstrap_and_cohort() {
    let dir = scored();
    let p = dir.path();
    let args = ["--out-dir", "b", "bootstrap", "--metrics", "res/metrics.csv", "--samples", "30", "--seed", "2"];
    assert_eq!(code(&run(p, &args)), 0);
    let st = read_json(&p.join("b/stability.json"));
    assert_eq!(st["samples"], 30);
    assert_eq!(st["tasks"][0]["tau"].as_array().unwrap().len(), 30);

    let args = ["--out-dir", "c", "cohort", "--metrics", "res/metrics.csv", "--by", "institution", "--by", "aop_stratum"];
    assert_eq!(code(&run(p, &args)), 0);
    assert!(p.join("c/strata_aop_stratum.json").exists());
    assert_eq!(code(&run(p, &["--out-dir", "c", "cohort", "--metrics", "res/metrics.csv"])), 1);
}

#[test]
fn config_file_fills_in_and_flags_win() {
    let dir = scored();
    let p = dir.path();
    std::fs::write(p.join("cfg.toml"), "scheme = \"MedianThenRank\"\nout-dir = \"fromcfg\"\nalpha = 0.01\n").unwrap();
    assert_eq!(code(&run(p, &["--config", "cfg.toml", "rank", "--metrics", "res/metrics.csv"])), 0);
    assert_eq!(read_json(&p.join("fromcfg/leaderboard.json"))["scheme"], "MedianThenRank");
    assert_eq!(read_json(&p.join("fromcfg/significance.json"))["maps"][0]["alpha"], 0.01);
    let args = ["--config", "cfg.toml", "--scheme", "TestBased", "rank", "--metrics", "res/metrics.csv"];
    assert_eq!(code(&run(p, &args)), 0);
    assert_eq!(read_json(&p.join("fromcfg/leaderboard.json"))["scheme"], "TestBased");

    std::fs::write(p.join("bad.toml"), "colour = 3\n").unwrap();
    assert_eq!(code(&run(p, &["--config", "bad.toml", "rank", "--metrics", "res/metrics.csv"])), 1);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&run(p, &["frobnicate"])), 1);
    assert_eq!(code(&run(p, &["rank"])), 1);
    assert_eq!(code(&run(p, &["--scheme", "best", "rank", "--metrics", "m.csv"])), 1);
    assert_eq!(code(&run(p, &["--alpha", "1.5", "rank", "--metrics", "m.csv"])), 1);
    assert_eq!(code(&run(p, &["--help"])), 0);
}

#[test]
fn data_errors_exit_two() {
    let dir = scored();
    let p = dir.path();
    assert_eq!(code(&run(p, &["rank", "--metrics", "missing.csv"])), 2);

    std::fs::write(p.join("bad.csv"), "case_id,gt_path\nx,y\n").unwrap();
    let out = run(p, &["evaluate", "--manifest", "bad.csv", "--predictions", "syn/predictions"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.csv"));

    std::fs::write(p.join("syn/gt/case_0001.png"), b"not an image").unwrap();
    let out = run(p, &["--out-dir", "e", "evaluate", "--manifest", "syn/manifest.csv", "--predictions", "syn/predictions"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("case_0001"));
}

#[test]
fn undefined_statistics_are_fatal_only_on_request() {
    let dir = scored();
    let p = dir.path();
    std::fs::remove_file(p.join("syn/predictions/team_a/case_0003.png")).unwrap();
    let base = ["--out-dir", "u", "biometry", "--manifest", "syn/manifest.csv", "--predictions", "syn/predictions"];
    let out = run(p, &base);
    assert_eq!(code(&out), 0);
    let rows = std::fs::read_to_string(p.join("u/biometry.csv")).unwrap();
    assert!(rows.contains("case_0003,team_a,"));
    assert!(rows.contains("undefined-pred-missing-PS"));

    let strict: Vec<&str> = std::iter::once("--fail-on-undefined").chain(base).collect();
    assert_eq!(code(&run(p, &strict)), 3);
}
