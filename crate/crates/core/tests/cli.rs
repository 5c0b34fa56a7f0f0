mod common;

use std::path::Path;

use common::pipeline::{nnn, ok, p, pipeline, OUTPUTS};

#[test]
fn pipeline_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let strip = |dir: &Path| {
        let mut v: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.join("bench.json")).unwrap()).unwrap();
        for key in nnn_core::bench::BenchReport::TIMING_FIELDS {
            v.as_object_mut().unwrap().remove(key);
        }
        v
    };
    pipeline(a.path());
    let first: Vec<Vec<u8>> = OUTPUTS.iter().map(|f| std::fs::read(a.path().join(f)).unwrap()).collect();
    let first_bench = strip(a.path());
    pipeline(a.path());
    for (f, x) in OUTPUTS.iter().zip(&first) {
        let y = std::fs::read(a.path().join(f)).unwrap();
        assert!(*x == y, "{f} differs between runs");
    }
    assert_eq!(first_bench, strip(a.path()));

    let eval: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("eval.json")).unwrap()).unwrap();
    assert_eq!(eval["method"]["method"], "nnn");
    assert_eq!(eval["config"]["seed"], 42);
    let tiny = nnn_core::embed_io::load_matrix(a.path().join("tiny.emb")).unwrap();
    assert!(tiny.is_normalized());
    assert_eq!(tiny.row(0), &[0.6, 0.8]);
}

#[test]
fn exact_and_augmented_retrieval_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| p(dir.path(), n);
    ok(&["synth", "--out-dir", &d("data"), "--n-ref", "300", "--n-test", "200"]);
    let data = |n: &str| p(&dir.path().join("data"), n);
    let base = [
        "retrieve", "--queries", &data("queries.emb"), "--candidates", &data("candidates.emb"),
        "--refs", &data("refs.emb"), "--method", "nnn", "--alpha", "0.75", "--k", "16", "--depth", "100",
    ];
    let exact_out = d("exact.jsonl");
    let mut exact = base.to_vec();
    exact.extend(["--exact", "--output", &exact_out]);
    ok(&exact);
    let aug_out = d("aug.jsonl");
    let mut aug = base.to_vec();
    aug.extend(["--augmented", "--output", &aug_out]);
    ok(&aug);
    let lists = |f: &str| {
        let t = nnn_core::RankingTable::read_jsonl(std::io::BufReader::new(std::fs::File::open(f).unwrap())).unwrap();
        t.candidate_lists()
    };
    assert_eq!(lists(&exact_out), lists(&aug_out));
}

#[test]
fn alpha_zero_reproduces_raw_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| p(dir.path(), n);
    ok(&["synth", "--out-dir", &d("data"), "--n-ref", "100", "--n-test", "50"]);
    let data = |n: &str| p(&dir.path().join("data"), n);
    ok(&["retrieve", "--queries", &data("queries.emb"), "--candidates", &data("candidates.emb"), "--output", &d("raw.jsonl")]);
    ok(&["retrieve", "--queries", &data("queries.emb"), "--candidates", &data("candidates.emb"), "--refs", &data("refs.emb"), "--method", "nnn", "--alpha", "0", "--k", "8", "--output", &d("zero.jsonl")]);
    assert_eq!(std::fs::read(d("raw.jsonl")).unwrap(), std::fs::read(d("zero.jsonl")).unwrap());
}

#[test]
fn exit_codes_and_error_names() {
    assert_eq!(nnn(&[]).status.code(), Some(2));
    assert_eq!(nnn(&["bias", "--alpha", "1"]).status.code(), Some(2));
    assert_eq!(nnn(&["--help"]).status.code(), Some(0));
    assert_eq!(nnn(&["retrieve", "--queries", "q", "--candidates", "c", "--method", "nope", "--output", "o"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.emb");
    std::fs::write(&junk, b"NOPE-not-an-embedding-file-at-all").unwrap();
    let out = nnn(&["convert", "--input", &p(dir.path(), "missing.tsv"), "--output", &p(dir.path(), "x.emb")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("IoError"));
    let out = nnn(&["diagnose", "--rankings", &p(dir.path(), "r.jsonl"), "--candidates", &junk.to_string_lossy(), "--output", &p(dir.path(), "d.json")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("BadMagic"));
    assert!(!dir.path().join("d.json").exists());
}

#[test]
fn stale_bias_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| p(dir.path(), n);
    ok(&["synth", "--out-dir", &d("a"), "--n-ref", "50", "--n-test", "20"]);
    ok(&["synth", "--out-dir", &d("b"), "--n-ref", "50", "--n-test", "20", "--seed", "7"]);
    ok(&["bias", "--candidates", &d("a/candidates.emb"), "--refs", &d("a/refs.emb"), "--alpha", "1", "--k", "4", "--output", &d("bias.bia")]);
    let out = nnn(&["retrieve", "--queries", &d("a/queries.emb"), "--candidates", &d("a/candidates.emb"), "--refs", &d("b/refs.emb"), "--bias", &d("bias.bia"), "--method", "nnn", "--alpha", "1", "--k", "4", "--output", &d("o.jsonl")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("BiasReferenceMismatch"));
}
