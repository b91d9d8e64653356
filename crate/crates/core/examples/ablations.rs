//! Retrieval-only, log-only and fused rankings side by side, plus a λ grid
//! per query group.
//!
//! ```text
//! cargo run --release --example ablations
//! ```

use lader::corpus::Group;
use lader::eval::{evaluate, Metric, RunFile};
use lader::fusion::{FusionConfig, FusionMode, Lader};
use lader::index::FlatIndex;
use lader::synthbench::{generate, SynthSpec};

fn main() -> lader::error::Result<()> {
    let corpus = generate(&SynthSpec::default())?;
    let groups = corpus.test_groups();
    let q_index = FlatIndex::new(corpus.log_query_embeddings.clone());
    let d_index = FlatIndex::new(corpus.doc_embeddings.clone());
    let rel = corpus.click_log.rel();
    let lader = Lader::new(&q_index, &d_index, &rel);
    let inputs = corpus.test_inputs();

    let ndcg = |mode: FusionMode, lambda: f64| -> lader::error::Result<Vec<f64>> {
        let cfg = FusionConfig { mode, lambda, ..FusionConfig::default() };
        let traces = lader.run(&inputs, |_| cfg, 1000)?;
        let table = evaluate(&RunFile::from_traces(&traces), &corpus.qrels, &groups);
        Ok(["ALL", "HEAD", "TORSO", "TAIL"]
            .iter()
            .map(|g| table.get(g, Metric::Ndcg10).unwrap_or(0.0))
            .collect())
    };

    println!("{:10} {:>7} {:>7} {:>7} {:>7}", "ndcg@10", "ALL", "HEAD", "TORSO", "TAIL");
    let show = |name: &str, v: &[f64]| println!("{name:10} {:7.4} {:7.4} {:7.4} {:7.4}", v[0], v[1], v[2], v[3]);
    show("dr-only", &ndcg(FusionMode::DrOnly, 0.5)?);
    show("la-only", &ndcg(FusionMode::LaOnly, 0.5)?);
    for lambda in [0.1, 0.2, 0.5, 1.0, 2.0] {
        show(&format!("full {lambda}"), &ndcg(FusionMode::Full, lambda)?);
    }
    println!("defaults: {:?}", Group::ALL.map(|g| (g, lader::fusion::default_lambda(g))));
    Ok(())
}
