//! Generates the synthetic benchmark, writes it to a directory that the
//! `lader` binary can consume, and compares the retrieval modes in-process.
//!
//! ```text
//! cargo run --example synthetic_pipeline -- /tmp/lader-synth
//! cargo run --bin lader -- --config /tmp/lader-synth/lader.conf run --mode full
//! ```

use lader::eval::{evaluate, Metric, RunFile};
use lader::fusion::{FusionConfig, FusionMode, GroupLambdas, Lader};
use lader::index::FlatIndex;
use lader::lexical::InvertedIndex;
use lader::synthbench::{generate, SynthSpec};

fn main() -> lader::error::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "synthetic".into());
    let corpus = generate(&SynthSpec::new(8, 50, 10, 16, 0.1, 7))?;
    let paths = corpus.write_to_dir(&dir)?;
    println!(
        "{} documents, {} logged queries, {} test queries -> {}",
        corpus.documents.len(),
        corpus.log_queries.len(),
        corpus.test_queries.len(),
        paths.config.display()
    );

    let groups = corpus.test_groups();
    let policy = GroupLambdas::new(FusionConfig::default(), groups.clone());
    let query_index = FlatIndex::new(corpus.log_query_embeddings.clone());
    let doc_index = FlatIndex::new(corpus.doc_embeddings.clone());
    let bm25 = InvertedIndex::build(&corpus.documents)?;
    let rel = corpus.click_log.rel();
    let inputs = corpus.test_inputs();
    let policy = &policy;
    let with_mode = |mode| move |q: &str| FusionConfig { mode, ..policy.config_for(q) };

    let dense = Lader::new(&query_index, &doc_index, &rel);
    let lexical = Lader::new(&query_index, &bm25, &rel);
    let runs = [
        ("full", dense.run(&inputs, with_mode(FusionMode::Full), 1000)?),
        ("dr-only", dense.run(&inputs, with_mode(FusionMode::DrOnly), 1000)?),
        ("la-only", dense.run(&inputs, with_mode(FusionMode::LaOnly), 1000)?),
        ("la-bm25", lexical.run(&inputs, with_mode(FusionMode::Full), 1000)?),
        ("bm25", lexical.run(&inputs, with_mode(FusionMode::DrOnly), 1000)?),
    ];
    println!("{:8} {:>8} {:>8} {:>8} {:>8}", "mode", "ALL", "HEAD", "TORSO", "TAIL");
    for (name, traces) in &runs {
        let table = evaluate(&RunFile::from_traces(traces), &corpus.qrels, &groups);
        let cell = |g: &str| table.get(g, Metric::Ndcg10).unwrap_or(0.0);
        println!(
            "{name:8} {:8.4} {:8.4} {:8.4} {:8.4}",
            cell("ALL"),
            cell("HEAD"),
            cell("TORSO"),
            cell("TAIL")
        );
    }
    Ok(())
}
