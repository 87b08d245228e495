use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hmmgmr::{FeatureSchema, GaussianComponent, HmmModel};
use nalgebra::DMatrix;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmmgmr")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

/// Rows of a CSV output, header comments and column line dropped.
fn rows(path: PathBuf) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn small_corpus(dir: &Path, seed: &str) -> String {
    let c = p(dir, "corpus");
    ok(&["synth", "--events", "20", "--length", "30", "--seed", seed, "--out", &c]);
    c
}

#[test]
fn synth_and_train_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let c = small_corpus(d, "3");
        ok(&["train", "--corpus", &c, "--k", "3", "--init", "k-means", "--seed", "9", "--out", &p(d, "m")]);
    }
    for f in ["corpus/events.csv", "corpus/split.json", "corpus/truth.json", "m/model.json", "m/trace.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let events = fs::read_to_string(a.path().join("corpus/events.csv")).unwrap();
    assert!(events.starts_with("# hmmgmr "));
    assert!(events.contains("# seed: 3"));
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let missing = p(d.path(), "nope");
    assert_eq!(code(&["train", "--corpus", &missing, "--out", &p(d.path(), "m")]), 2);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["--version"]), 0);
    let c = small_corpus(d.path(), "1");
    assert_eq!(code(&["train", "--corpus", &c, "--k", "0", "--out", &p(d.path(), "m")]), 1);
    assert_eq!(code(&["select-k", "--corpus", &c, "--k-range", "3-1", "--out", &p(d.path(), "b")]), 1);
    let bad = p(d.path(), "bad.json");
    fs::write(&bad, "{\"k\": 3").unwrap();
    assert_eq!(code(&["decode", "--model", &bad, "--corpus", &c, "--event", "syn0000", "--out", &missing]), 2);
    let cfg = p(d.path(), "cfg.json");
    fs::write(&cfg, "{\"k\": 2, \"colour\": 1}").unwrap();
    assert_eq!(code(&["train", "--corpus", &c, "--config", &cfg, "--out", &p(d.path(), "m")]), 1);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let d = tempfile::tempdir().unwrap();
    let c = small_corpus(d.path(), "2");
    let cfg = p(d.path(), "cfg.json");
    fs::write(&cfg, "{\"k\": 2, \"init\": \"k-means\"}").unwrap();
    ok(&["train", "--corpus", &c, "--config", &cfg, "--out", &p(d.path(), "a")]);
    ok(&["train", "--corpus", &c, "--config", &cfg, "--k", "4", "--out", &p(d.path(), "b")]);
    let k_of = |dir: &str| {
        let text = fs::read_to_string(d.path().join(dir).join("model.json")).unwrap();
        HmmModel::from_document(&text).unwrap().n_states()
    };
    assert_eq!(k_of("a"), 2);
    assert_eq!(k_of("b"), 4);
}

#[test]
fn single_state_pipeline() {
    let d = tempfile::tempdir().unwrap();
    let c = small_corpus(d.path(), "4");
    let m = p(d.path(), "m");
    ok(&["select-k", "--corpus", &c, "--k-range", "1", "--out", &p(d.path(), "b")]);
    let bic = rows(d.path().join("b/bic.csv"));
    assert_eq!(bic.len(), 1);
    assert_eq!(bic[0][0], "1");
    assert_eq!(bic[0].last().unwrap(), "*");
    ok(&["train", "--corpus", &c, "--k", "1", "--out", &m]);
    ok(&["decode", "--model", &p(d.path(), "m/model.json"), "--corpus", &c, "--event", "syn0001", "--out", &p(d.path(), "dec")]);
    let beliefs = rows(d.path().join("dec/beliefs_syn0001.csv"));
    assert_eq!(beliefs.len(), 30);
    assert!(beliefs.iter().all(|r| r[2] == "1.000000" && r[4] == "1"));
}

#[test]
fn decode_and_predict_outputs() {
    let d = tempfile::tempdir().unwrap();
    let c = small_corpus(d.path(), "5");
    ok(&["train", "--corpus", &c, "--k", "3", "--out", &p(d.path(), "m")]);
    let model = p(d.path(), "m/model.json");
    ok(&["decode", "--model", &model, "--corpus", &c, "--event", "syn0002", "--out", &p(d.path(), "dec")]);
    for r in rows(d.path().join("dec/beliefs_syn0002.csv")) {
        let sum: f64 = r[2..5].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 2e-6);
    }
    ok(&["predict", "--model", &model, "--corpus", &c, "--out", &p(d.path(), "pred")]);
    let scores = rows(d.path().join("pred/prediction_scores.csv"));
    assert_eq!(scores.len(), 4);
    assert_eq!(code(&["decode", "--model", &model, "--corpus", &c, "--event", "nope", "--out", &p(d.path(), "x")]), 2);
}

#[test]
fn evaluate_sweep_and_comparison() {
    let d = tempfile::tempdir().unwrap();
    let c = p(d.path(), "corpus");
    ok(&["synth", "--preset", "merge-noise", "--events", "20", "--length", "30", "--out", &c]);
    let out = p(d.path(), "eval");
    ok(&[
        "evaluate", "--corpus", &c, "--feature-set", "dv_lead,dx_lag,vx_ego", "--feature-set",
        "dv_lead,dx_lag,vx_ego,dv_lag", "--compare", "--out", &out,
    ]);
    assert_eq!(rows(d.path().join("eval/variables.csv")).len(), 2);
    assert_eq!(rows(d.path().join("eval/approaches.csv")).len(), 4);
    let table = fs::read_to_string(d.path().join("eval/approaches.txt")).unwrap();
    assert!(table.contains("HMM-GMR") && table.contains("GMM-GMR"));
}

#[test]
fn unvisited_states_are_flagged() {
    let d = tempfile::tempdir().unwrap();
    let c = small_corpus(d.path(), "6");
    ok(&["train", "--corpus", &c, "--k", "2", "--out", &p(d.path(), "m")]);
    let fitted = HmmModel::from_document(&fs::read_to_string(d.path().join("m/model.json")).unwrap()).unwrap();
    let far = GaussianComponent::new(
        fitted.components()[0].mean().map(|v| v + 1e3),
        fitted.components()[0].covariance().clone(),
    )
    .unwrap();
    let mut comps = fitted.components().to_vec();
    comps.push(far);
    let m = HmmModel::new(
        vec![0.5, 0.4, 0.1],
        DMatrix::from_row_slice(3, 3, &[0.8, 0.1, 0.1, 0.1, 0.8, 0.1, 0.1, 0.1, 0.8]),
        comps,
        FeatureSchema::merge_default(),
    )
    .unwrap();
    let path = p(d.path(), "three.json");
    fs::write(&path, m.to_document().unwrap()).unwrap();
    ok(&["state-ranges", "--model", &path, "--corpus", &c, "--out", &p(d.path(), "sr")]);
    let r = rows(d.path().join("sr/state_ranges.csv"));
    assert_eq!(r.len(), 9);
    assert!(r.iter().filter(|r| r[0] == "3").all(|r| r[5] == "unvisited" && r[3].is_empty()));
    assert!(r.iter().filter(|r| r[0] != "3").all(|r| r[5] == "ok"));
}
