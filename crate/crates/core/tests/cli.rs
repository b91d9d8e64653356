use std::path::Path;
use std::process::{Command, Output};

use lader::corpus::load_click_log;
use lader::eval::RunFile;
use lader::fusion::{GroupLambdas, Lader};
use lader::lexical::InvertedIndex;
use lader::synthbench::{generate, SynthCorpus, SynthSpec};
use tempfile::TempDir;

fn small() -> SynthCorpus {
    let mut spec = SynthSpec::new(4, 20, 6, 8, 0.1, 3);
    spec.log_queries_per_topic = 4;
    generate(&spec).unwrap()
}

fn workspace() -> (TempDir, SynthCorpus) {
    let dir = tempfile::tempdir().unwrap();
    let c = small();
    c.write_to_dir(dir.path()).unwrap();
    (dir, c)
}

fn lader(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lader"))
        .current_dir(dir)
        .arg("--config")
        .arg(dir.join("lader.conf"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = lader(dir, args);
    assert!(out.status.success(), "lader {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

/// The `ALL,ndcg@10` value from a metrics or sweep csv row.
fn ndcg_all(csv: &str, prefix: &str) -> String {
    let key = format!("{prefix}ALL,ndcg@10,");
    let line = csv.lines().find(|l| l.starts_with(&key)).unwrap();
    line[key.len()..].split(',').next().unwrap().to_string()
}

#[test]
fn missing_config_key_is_an_argument_error() {
    let (dir, _) = workspace();
    std::fs::write(dir.path().join("lader.conf"), "queries = test_queries.tsv\n").unwrap();
    let out = lader(dir.path(), &["run"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("click_log"));
}

#[test]
fn corrupt_embeddings_name_the_file() {
    let (dir, _) = workspace();
    std::fs::write(dir.path().join("doc_embeddings.lder"), b"LDERgarbage").unwrap();
    let out = lader(dir.path(), &["build-index"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("doc_embeddings.lder"));
}

#[test]
fn missing_input_is_an_io_error() {
    let (dir, _) = workspace();
    let out = lader(dir.path(), &["ingest", "--set", "documents=nowhere.jsonl"]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.jsonl"));
}

#[test]
fn unknown_mode_is_rejected() {
    let (dir, _) = workspace();
    assert_eq!(code(&lader(dir.path(), &["run", "--mode", "hybrid"])), 2);
    assert_eq!(code(&lader(dir.path(), &["run", "--set", "m"])), 2);
}

#[test]
fn eval_checks_query_sets() {
    let (dir, _) = workspace();
    std::fs::write(dir.path().join("stray.txt"), "nobody Q0 d00_000 1 1.000000 x\n").unwrap();
    let out = lader(dir.path(), &["eval", "--run", "stray.txt"]);
    assert_eq!(code(&out), 3);
    ok(dir.path(), &["eval", "--run", "stray.txt", "--lenient"]);
}

#[test]
fn zero_lambda_full_equals_dr_only() {
    let (dir, _) = workspace();
    ok(dir.path(), &["run", "--mode", "dr-only", "--tag", "t"]);
    ok(dir.path(), &["run", "--mode", "full", "--lambda", "0", "--tag", "t"]);
    let full = read(dir.path(), "out/run.full.txt");
    assert!(!full.is_empty());
    assert_eq!(full, read(dir.path(), "out/run.dr-only.txt"));
}

#[test]
fn la_only_with_empty_log_writes_empty_rankings() {
    let (dir, _) = workspace();
    std::fs::write(dir.path().join("empty.tsv"), "").unwrap();
    ok(dir.path(), &["run", "--mode", "la-only", "--set", "click_log=empty.tsv"]);
    assert_eq!(read(dir.path(), "out/run.la-only.txt"), "");
}

#[test]
fn la_bm25_matches_library_composition() {
    let (dir, c) = workspace();
    ok(dir.path(), &["run", "--mode", "la-bm25"]);
    let from_cli = RunFile::load(dir.path().join("out/run.la-bm25.txt")).unwrap();

    let log = load_click_log(dir.path().join("click_log.tsv")).unwrap();
    let rel = log.rel();
    let q_index = lader::index::FlatIndex::new(c.log_query_embeddings.select(log.query_ids()));
    let bm25 = InvertedIndex::build(&c.documents).unwrap();
    let policy = GroupLambdas::new(Default::default(), c.test_groups());
    let traces = Lader::new(&q_index, &bm25, &rel)
        .run(&c.test_inputs(), |q| policy.config_for(q), 1000)
        .unwrap();
    assert_eq!(from_cli.rankings.len(), traces.len());
    for t in &traces {
        let got = from_cli.get(&t.query_id).unwrap();
        assert_eq!(got.ids().collect::<Vec<_>>(), t.final_ranking.ids().collect::<Vec<_>>());
        for ((_, a), (_, b)) in got.iter().zip(t.final_ranking.iter()) {
            assert!((a - b).abs() <= 5e-7);
        }
    }
}

#[test]
fn perfect_run_scores_one() {
    let (dir, c) = workspace();
    let mut lines = String::new();
    for q in &c.test_queries {
        let judged = c.qrels.get(&q.id).unwrap();
        for (rank, d) in judged.keys().enumerate() {
            lines.push_str(&format!("{} Q0 {d} {} {:.6} perfect\n", q.id, rank + 1, 100.0 - rank as f64));
        }
    }
    std::fs::write(dir.path().join("perfect.txt"), lines).unwrap();
    let csv = ok(dir.path(), &["eval", "--run", "perfect.txt"]);
    assert_eq!(ndcg_all(&csv, ""), "1.000000");
    assert!(csv.contains("ALL,mrr,1.000000"));
}

#[test]
fn sweep_endpoints_match_single_runs() {
    let (dir, _) = workspace();
    ok(dir.path(), &["sweep", "--proportions", "0,1"]);
    ok(dir.path(), &["run", "--mode", "dr-only"]);
    ok(dir.path(), &["run", "--mode", "full"]);
    let sweep = read(dir.path(), "out/sweep.csv");
    let dr = ok(dir.path(), &["eval", "--run", "out/run.dr-only.txt"]);
    let full = ok(dir.path(), &["eval", "--run", "out/run.full.txt"]);
    assert_eq!(ndcg_all(&sweep, "0,0,"), ndcg_all(&dr, ""));
    let n_log = read(dir.path(), "click_log.tsv")
        .lines()
        .map(|l| l.split('\t').next().unwrap().to_string())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    assert_eq!(ndcg_all(&sweep, &format!("1,{n_log},")), ndcg_all(&full, ""));
}

#[test]
fn analyze_writes_one_row_per_feature_plus_intercept() {
    let (dir, _) = workspace();
    ok(dir.path(), &["analyze"]);
    let coef = read(dir.path(), "out/coefficients.csv");
    let mut lines = coef.lines();
    assert_eq!(lines.next(), Some("feature,coefficient"));
    assert_eq!(lines.count(), 10);
    assert_eq!(read(dir.path(), "out/features.csv").lines().count(), 1 + small().test_queries.len());
}

#[test]
fn build_index_is_reproducible() {
    let (dir, _) = workspace();
    ok(dir.path(), &["build-index"]);
    let first = std::fs::read(dir.path().join("out/doc.idx")).unwrap();
    let manifest = read(dir.path(), "out/doc.idx.manifest.json");
    ok(dir.path(), &["build-index"]);
    assert_eq!(std::fs::read(dir.path().join("out/doc.idx")).unwrap(), first);
    let digest = |m: &str| {
        let v: serde_json::Value = serde_json::from_str(m).unwrap();
        v["outputs"].to_string()
    };
    assert_eq!(digest(&manifest), digest(&read(dir.path(), "out/doc.idx.manifest.json")));
}

/// A text-only corpus: every vector comes from the hash embedder.
fn text_workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/text");
    for entry in std::fs::read_dir(golden).unwrap() {
        let p = entry.unwrap().path();
        std::fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
    }
    dir
}

#[test]
fn hash_embeddings_cover_a_text_only_corpus() {
    let dir = text_workspace();
    ok(dir.path(), &["ingest"]);
    ok(dir.path(), &["build-index"]);
    ok(dir.path(), &["run"]);
    let metrics = ok(dir.path(), &["eval", "--run", "out/run.full.txt"]);
    assert_eq!(metrics, read(dir.path(), "expected_metrics.csv"));
}

#[test]
fn free_text_search_shows_log_evidence() {
    let dir = text_workspace();
    let shown = ok(dir.path(), &["search", "aspirin heart attack", "-k", "3"]);
    assert!(shown.contains("aspirin"), "{shown}");
    assert!(shown.lines().any(|l| l.contains("cardio1")), "{shown}");
    let out = lader(dir.path(), &["search", "x", "--set", "doc_embeddings=nowhere.lder"]);
    assert_eq!(code(&out), 2);
}
