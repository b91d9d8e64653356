//! Exact top-k inner-product search over a flat index, saved and reloaded.
//!
//! ```text
//! cargo run --release --example flat_search
//! ```

use std::time::Instant;

use lader::index::{load_index, FlatIndex};
use lader::synthbench::{generate, SynthSpec};

fn main() -> lader::error::Result<()> {
    let mut spec = SynthSpec::new(20, 500, 5, 64, 0.0, 11);
    spec.log_queries_per_topic = 1;
    let corpus = generate(&spec)?;
    let index = FlatIndex::new(corpus.doc_embeddings.clone());
    println!("{} documents, dim {}", index.len(), index.dim());

    let start = Instant::now();
    let results = index.batch_search(&corpus.test_query_embeddings, 10)?;
    println!(
        "{} queries in {:.2?}",
        corpus.test_query_embeddings.len(),
        start.elapsed()
    );

    let (qid, top) = (&corpus.test_queries[0].id, &results[0]);
    println!("top 5 for {qid} (topic {}):", corpus.test_topics[0]);
    for (d, s) in top.iter().take(5) {
        println!("  {d}\t{s:.4}");
    }

    let path = std::env::temp_dir().join("lader-example.idx");
    index.save(&path)?;
    let reloaded = load_index(&path)?;
    assert_eq!(reloaded.search(corpus.test_query_embeddings.row(0), 10)?, *top);
    println!("reloaded {} and got the same ranking", path.display());
    Ok(())
}
