//! End-to-end runs of the `slda` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn slda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slda")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = slda(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Fixture {
            dir: tempfile::tempdir().unwrap(),
        };
        ok(&["generate", "--num-docs", "30", "--doc-length", "15", "--seed", "2", "--out", &f.s("syn")]);
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn write(&self, name: &str, text: &str) -> String {
        fs::write(self.path(name), text).unwrap();
        self.s(name)
    }

    fn manifest(&self, name: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.path(name)).unwrap()).unwrap()
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn prune_missing_file_exits_2_naming_the_path() {
    let f = Fixture::new();
    let missing = f.s("nope.txt");
    let out = slda(&["prune", "--docs", &missing, "--out", &f.s("p")]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains(&missing));
}

#[test]
fn prune_parse_error_exits_2() {
    let f = Fixture::new();
    let docs = f.write("bad.docs", "2 0:1\n");
    assert_eq!(code(&slda(&["prune", "--docs", &docs, "--out", &f.s("p")])), 2);
}

#[test]
fn prune_to_nothing_exits_3() {
    let f = Fixture::new();
    let docs = f.write("all.docs", "1 0:1\n1 0:2\n1 0:1\n");
    assert_eq!(code(&slda(&["prune", "--docs", &docs, "--out", &f.s("p")])), 3);
}

#[test]
fn permissive_prune_copies_input() {
    let f = Fixture::new();
    ok(&[
        "prune",
        "--docs",
        &f.s("syn.docs"),
        "--responses",
        &f.s("syn.responses"),
        "--max-doc-frac",
        "1",
        "--min-doc-count",
        "0",
        "--out",
        &f.s("copy"),
    ]);
    assert_eq!(fs::read(f.path("copy.docs")).unwrap(), fs::read(f.path("syn.docs")).unwrap());
    assert_eq!(fs::read(f.path("copy.responses")).unwrap(), fs::read(f.path("syn.responses")).unwrap());
}

fn train(f: &Fixture, out: &str, extra: &[&str]) -> Output {
    let (docs, responses, model) = (f.s("syn.docs"), f.s("syn.responses"), f.s(out));
    let mut args = vec!["train", "--docs", &docs, "--responses", &responses, "--topics", "3", "--out", &model];
    args.extend_from_slice(extra);
    slda(&args)
}

#[test]
fn one_iteration_trace() {
    let f = Fixture::new();
    assert!(train(&f, "m.json", &["--em-max-iters", "1", "--trace", &f.s("t.csv")]).status.success());
    let trace = fs::read_to_string(f.path("t.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], "iteration,corpus_elbo,rel_change");
    assert_eq!(lines.len(), 2);
}

#[test]
fn manifest_digests_match_inputs() {
    let f = Fixture::new();
    assert!(train(&f, "m.json", &[]).status.success());
    let m = f.manifest("m.json.manifest.json");
    assert_eq!(m["command"], "train");
    assert_eq!(m["seed"], 0);
    for name in ["syn.docs", "syn.responses"] {
        let want = hex::encode(Sha256::digest(fs::read(f.path(name)).unwrap()));
        assert_eq!(m["inputs"][f.s(name)]["sha256"], want.as_str());
    }
    let artifacts: Vec<&str> = m["artifacts"].as_array().unwrap().iter().filter_map(Value::as_str).collect();
    assert!(artifacts.contains(&f.s("m.json").as_str()));
    assert!(m["duration_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn thread_count_does_not_change_the_model() {
    let f = Fixture::new();
    assert!(train(&f, "a.json", &["--threads", "1"]).status.success());
    assert!(train(&f, "b.json", &["--threads", "4"]).status.success());
    assert_eq!(fs::read(f.path("a.json")).unwrap(), fs::read(f.path("b.json")).unwrap());
}

#[test]
fn non_count_poisson_response_exits_4() {
    let f = Fixture::new();
    let out = train(&f, "m.json", &["--family", "poisson"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn predictions_one_line_per_document() {
    let f = Fixture::new();
    assert!(train(&f, "m.json", &[]).status.success());
    ok(&["predict", "--model", &f.s("m.json"), "--docs", &f.s("syn.docs"), "--out", &f.s("p.tsv")]);
    let text = fs::read_to_string(f.path("p.tsv")).unwrap();
    assert_eq!(text.lines().count(), 30);
    for line in text.lines() {
        let cols: Vec<f64> = line.split('\t').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols.len(), 2);
        assert_eq!(cols[0], cols[1]);
    }
}

fn reverse_line_order(line: &str) -> String {
    let mut fields: Vec<&str> = line.split_whitespace().collect();
    fields[1..].reverse();
    fields.join(" ")
}

#[test]
fn predictions_ignore_token_order() {
    let f = Fixture::new();
    assert!(train(&f, "m.json", &[]).status.success());
    let docs = fs::read_to_string(f.path("syn.docs")).unwrap();
    let reversed: String = docs.lines().map(|l| reverse_line_order(l) + "\n").collect();
    let rev = f.write("rev.docs", &reversed);
    ok(&["predict", "--model", &f.s("m.json"), "--docs", &f.s("syn.docs"), "--out", &f.s("a.tsv")]);
    ok(&["predict", "--model", &f.s("m.json"), "--docs", &rev, "--out", &f.s("b.tsv")]);
    assert_eq!(fs::read(f.path("a.tsv")).unwrap(), fs::read(f.path("b.tsv")).unwrap());
}

fn zero_eta(model: &Path) {
    let mut m: Value = serde_json::from_str(&fs::read_to_string(model).unwrap()).unwrap();
    for e in m["eta"].as_array_mut().unwrap() {
        *e = Value::from(0.0);
    }
    fs::write(model, serde_json::to_string(&m).unwrap()).unwrap();
}

#[test]
fn zero_coefficients_predict_zero() {
    let f = Fixture::new();
    assert!(train(&f, "m.json", &["--em-max-iters", "2"]).status.success());
    zero_eta(&f.path("m.json"));
    ok(&["predict", "--model", &f.s("m.json"), "--docs", &f.s("syn.docs"), "--out", &f.s("p.tsv")]);
    let text = fs::read_to_string(f.path("p.tsv")).unwrap();
    assert!(text.lines().all(|l| l == "0\t0"));
}

#[test]
fn unknown_term_exits_5() {
    let f = Fixture::new();
    assert!(train(&f, "m.json", &["--em-max-iters", "1"]).status.success());
    let docs = f.write("wide.docs", "1 500:2\n");
    let out = slda(&["predict", "--model", &f.s("m.json"), "--docs", &docs, "--out", &f.s("p.tsv")]);
    assert_eq!(code(&out), 5);
}

#[test]
fn log_transform_reports_both_scales() {
    let f = Fixture::new();
    let ys = f.write("pos.responses", &"2.5\n0.5\n1.5\n".repeat(10));
    ok(&[
        "train",
        "--docs",
        &f.s("syn.docs"),
        "--responses",
        &ys,
        "--topics",
        "2",
        "--response-transform",
        "log",
        "--out",
        &f.s("m.json"),
    ]);
    ok(&["predict", "--model", &f.s("m.json"), "--docs", &f.s("syn.docs"), "--out", &f.s("p.tsv")]);
    for line in fs::read_to_string(f.path("p.tsv")).unwrap().lines() {
        let cols: Vec<f64> = line.split('\t').map(|c| c.parse().unwrap()).collect();
        assert!((cols[0].exp() - cols[1]).abs() < 1e-12 * cols[1]);
    }
}

#[test]
fn eval_writes_reports_and_baseline_table() {
    let f = Fixture::new();
    let out = ok(&[
        "eval",
        "--docs",
        &f.s("syn.docs"),
        "--responses",
        &f.s("syn.responses"),
        "--topics",
        "2,3",
        "--baseline",
        "lda-regression",
        "--out",
        &f.s("ev"),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("baseline"));
    for k in [2, 3] {
        let csv = fs::read_to_string(f.path(&format!("ev.K{k}.csv"))).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "fold,n_test,pr2,corr");
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.lines().last().unwrap().starts_with("pooled,30,"));
        assert!(f.path(&format!("ev.K{k}.baseline.csv")).exists());
    }
    let folds = fs::read_to_string(f.path("ev.folds")).unwrap();
    assert_eq!(folds.lines().next().unwrap(), "document fold");
    assert_eq!(folds.lines().count(), 31);
    for fold in 0..5 {
        let n = folds.lines().skip(1).filter(|l| l.ends_with(&format!(" {fold}"))).count();
        assert_eq!(n, 6);
    }
    let m = f.manifest("ev.manifest.json");
    assert_eq!(m["options"]["folds"], 5);
}

#[test]
fn eval_with_as_many_folds_as_documents() {
    let f = Fixture::new();
    ok(&[
        "eval",
        "--docs",
        &f.s("syn.docs"),
        "--responses",
        &f.s("syn.responses"),
        "--topics",
        "2",
        "--folds",
        "30",
        "--em-max-iters",
        "3",
        "--out",
        &f.s("loo"),
    ]);
    let csv = fs::read_to_string(f.path("loo.K2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 32);
}

#[test]
fn eval_same_seed_same_report() {
    let f = Fixture::new();
    for name in ["a", "b"] {
        ok(&[
            "eval",
            "--docs",
            &f.s("syn.docs"),
            "--responses",
            &f.s("syn.responses"),
            "--topics",
            "2",
            "--seed",
            "5",
            "--out",
            &f.s(name),
        ]);
    }
    assert_eq!(fs::read(f.path("a.K2.csv")).unwrap(), fs::read(f.path("b.K2.csv")).unwrap());
}
