//! The full CLI pipeline over a seeded synthetic benchmark.

use std::path::Path;
use std::process::{Command, Output};

pub fn nnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nnn"))
        .args(args)
        .env("NNN_THREADS", "2")
        .output()
        .unwrap()
}

pub fn ok(args: &[&str]) {
    let out = nnn(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

/// Synthetic data plus every report stage, written under `dir`.
pub fn pipeline(dir: &Path) {
    let d = |n: &str| p(dir, n);
    ok(&["synth", "--kind", "hub", "--out-dir", &d("data"), "--n-ref", "400", "--n-test", "150"]);
    let data = |n: &str| p(&dir.join("data"), n);
    std::fs::write(dir.join("tiny.tsv"), "# two rows\n3\t4\n1e0\t0\n").unwrap();
    ok(&["convert", "--input", &d("tiny.tsv"), "--output", &d("tiny.emb")]);
    ok(&["bias", "--candidates", &data("candidates.emb"), "--refs", &data("refs.emb"), "--alpha", "0.75", "--k", "16", "--output", &d("bias.bia")]);
    ok(&["retrieve", "--queries", &data("queries.emb"), "--candidates", &data("candidates.emb"), "--method", "none", "--output", &d("raw.jsonl")]);
    ok(&["retrieve", "--queries", &data("queries.emb"), "--candidates", &data("candidates.emb"), "--refs", &data("refs.emb"), "--bias", &d("bias.bia"), "--method", "nnn", "--alpha", "0.75", "--k", "16", "--output", &d("nnn.jsonl")]);
    ok(&["retrieve", "--queries", &data("queries.emb"), "--candidates", &data("candidates.emb"), "--refs", &data("refs.emb"), "--ref-candidates", &data("ref_candidates.emb"), "--method", "dualdis", "--beta1", "10", "--beta2", "20", "--output", &d("dualdis.jsonl")]);
    ok(&["eval", "--rankings", &d("nnn.jsonl"), "--truth", &data("truth.tsv"), "--method", "nnn", "--alpha", "0.75", "--k", "16", "--output", &d("eval.json")]);
    ok(&["diagnose", "--rankings", &d("nnn.jsonl"), "--candidates", &data("candidates.emb"), "--baseline", &d("raw.jsonl"), "--output", &d("diag.json")]);
    ok(&["sweep", "--queries", &data("queries.emb"), "--candidates", &data("candidates.emb"), "--refs", &data("refs.emb"), "--truth", &data("truth.tsv"), "--ref-truth", &data("ref_truth.tsv"), "--alphas", "0.5,1", "--ks", "4,16", "--output", &d("sweep.json")]);
    ok(&["ablate", "--queries", &data("queries.emb"), "--candidates", &data("candidates.emb"), "--refs", &data("refs.emb"), "--truth", &data("truth.tsv"), "--method", "nnn", "--alpha", "0.75", "--k", "16", "--output", &d("ablate.json")]);
    ok(&["bench", "--candidates", &data("candidates.emb"), "--refs", &data("refs.emb"), "--alpha", "0.75", "--k", "16", "--ncentroids", "10", "--nprobe", "10", "--output", &d("bench.json")]);
    let labels: String = (0..100).map(|c| format!("{c}\t{}\tg{}\n", if c % 2 == 0 { "A" } else { "B" }, c % 3)).collect();
    std::fs::write(dir.join("labels.tsv"), labels).unwrap();
    let groups: String = (0..150).map(|q| format!("{q}\tg{}\n", q % 3)).collect();
    std::fs::write(dir.join("groups.tsv"), groups).unwrap();
    ok(&["bias-attr", "--rankings", &d("nnn.jsonl"), "--labels", &d("labels.tsv"), "--query-groups", &d("groups.tsv"), "--output", &d("attr.json")]);
}

pub const OUTPUTS: [&str; 12] = [
    "data/candidates.emb", "data/truth.tsv", "tiny.emb", "bias.bia", "raw.jsonl", "nnn.jsonl",
    "dualdis.jsonl", "eval.json", "diag.json", "sweep.json", "ablate.json", "attr.json",
];

