use std::path::Path;
use std::process::{Command, Output};

use ctxbias::config::ExperimentConfig;
use ctxbias::io::read_corpus;

fn ctxbias(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctxbias"))
        .args(args)
        .env_remove("CTXBIAS_SEED")
        .env_remove("CTXBIAS_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let last = text.lines().last().unwrap_or_default();
    serde_json::from_str(last).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2_with_json() {
    let out = ctxbias(&["sweep", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let out = ctxbias(&["decode", "--id", "x", "--method", "fancy"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1_with_causes() {
    let out = ctxbias(&["decode", "--utterances", "5", "--id", "missing"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "failed");
    assert!(err["causes"].as_array().is_some_and(|c| !c.is_empty()));

    let out = ctxbias(&["config", "--list-lengths", "3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_prints_loadable_toml() {
    let out = ctxbias(&["config", "--seed", "8", "--runs", "4"]);
    assert!(out.status.success());
    let cfg = ExperimentConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!((cfg.seed, cfg.runs), (8, 4));
}

#[test]
fn gen_then_decode_one_utterance() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctxbias(&["gen", "--utterances", "6", "--output-dir", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (corpus, _) = read_corpus(dir.path()).unwrap();
    assert_eq!(corpus.utterances.len(), 6);

    let id = corpus.utterances[0].id.clone();
    let out = ctxbias(&["decode", "--corpus", path(dir.path()), "--id", &id, "--list-len", "201"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dump: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(dump["id"], id.as_str());
    assert_eq!(dump["list_len"], 201);
    let steps = corpus.utterances[0].tokens.len();
    assert_eq!(dump["reference"].as_str().unwrap().chars().count(), steps);
    assert_eq!(dump["hyp_final"].as_str().unwrap().chars().count(), steps);
    assert_eq!(dump["q_list"].as_array().unwrap().len(), steps);
    assert!(dump["losses"]["total"].as_f64().unwrap().is_finite());
    assert_eq!(dump["kept"][0], 0);
}

#[test]
fn sweep_writes_reports_and_report_rereads_them() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = ctxbias(&[
        "sweep",
        "--utterances",
        "10",
        "--runs",
        "1",
        "--list-lengths",
        "51,201",
        "--methods",
        "baseline,psc-joint-gcp",
        "--output-dir",
        path(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.starts_with("# CER // R|P|F1 (%), mean over runs\n"));
    for f in ["summary.json", "table.txt", "rtf.csv", "config.toml"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    assert_eq!(std::fs::read_dir(out_dir.join("cells")).unwrap().count(), 4);

    let out = ctxbias(&["report", "--dir", path(&out_dir)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with(&table));
    assert!(text.contains("method,list_len,rtf,decode_seconds,mean_m_pur\n"));
}
