//! How retrieval quality grows with the size of the click log.
//!
//! ```text
//! cargo run --release --example log_size_sweep -- 42
//! ```

use lader::analysis::{sweep, sweep_csv, SweepInputs};
use lader::eval::Metric;
use lader::fusion::{FusionConfig, GroupLambdas};
use lader::index::FlatIndex;
use lader::synthbench::{generate, SynthSpec};

fn main() -> lader::error::Result<()> {
    let seed = std::env::args().nth(1).map_or(Ok(0), |s| s.parse()).expect("seed must be an integer");
    let corpus = generate(&SynthSpec::default())?;
    let groups = corpus.test_groups();
    let policy = GroupLambdas::new(FusionConfig::default(), groups.clone());
    let docs = FlatIndex::new(corpus.doc_embeddings.clone());
    let inputs = corpus.test_inputs();
    let config_for = |q: &str| policy.config_for(q);

    let rows = sweep(
        &[0.0, 0.1, 0.25, 0.5, 0.75, 1.0],
        seed,
        &SweepInputs {
            log: &corpus.click_log,
            log_query_embeddings: &corpus.log_query_embeddings,
            documents: &docs,
            queries: &inputs,
            config_for: &config_for,
            qrels: &corpus.qrels,
            groups: &groups,
            k_out: 1000,
        },
    )?;
    for r in &rows {
        let v = |g| r.metrics.get(g, Metric::Ndcg10).unwrap_or(0.0);
        println!(
            "p={:<5} log queries {:4}  ndcg@10 {:.4}  (HEAD {:.4}, TAIL {:.4})",
            r.proportion,
            r.log_queries,
            v("ALL"),
            v("HEAD"),
            v("TAIL")
        );
    }
    let path = std::env::temp_dir().join("lader-sweep.csv");
    std::fs::write(&path, sweep_csv(&rows)).expect("write sweep csv");
    println!("full table in {}", path.display());
    Ok(())
}
