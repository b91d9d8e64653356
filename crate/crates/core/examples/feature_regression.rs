//! Which queries gain from the click log? Per-query features regressed on
//! the NDCG@10 gain of fusion over retrieval alone.
//!
//! ```text
//! cargo run --release --example feature_regression
//! ```

use lader::analysis::{analyze_gains, fit_linear_regression, FEATURE_NAMES};
use lader::corpus::Group;
use lader::eval::RunFile;
use lader::fusion::{FusionConfig, FusionMode, GroupLambdas, Lader};
use lader::index::FlatIndex;
use lader::synthbench::{generate, SynthSpec};

fn main() -> lader::error::Result<()> {
    let corpus = generate(&SynthSpec::default())?;
    let policy = GroupLambdas::new(FusionConfig::default(), corpus.test_groups());
    let q_index = FlatIndex::new(corpus.log_query_embeddings.clone());
    let d_index = FlatIndex::new(corpus.doc_embeddings.clone());
    let rel = corpus.click_log.rel();
    let lader = Lader::new(&q_index, &d_index, &rel);
    let inputs = corpus.test_inputs();

    let full = lader.run(&inputs, |q| policy.config_for(q), 1000)?;
    let dr_only = lader.run(&inputs, |q| FusionConfig { mode: FusionMode::DrOnly, ..policy.config_for(q) }, 1000)?;
    let analysis = analyze_gains(&full, &RunFile::from_traces(&dr_only), &corpus.test_queries, &rel, &corpus.qrels, Group::Tail)?;

    let mean_gain = analysis.gains.iter().sum::<f64>() / analysis.gains.len() as f64;
    println!("{} queries, mean gain {mean_gain:+.4}, R^2 {:.3}", analysis.gains.len(), analysis.regression.r_squared);
    print!("{}", analysis.coefficients_csv());

    // the same solver on a planted relation
    let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * i % 7) as f64]).collect();
    let y: Vec<f64> = x.iter().map(|r| 1.5 + 2.0 * r[0] - 0.5 * r[1]).collect();
    let fit = fit_linear_regression(&x, &y)?;
    println!("planted 1.5 + 2x - 0.5z -> {:.3} + {:.3}x {:+.3}z", fit.intercept, fit.coefficients[0], fit.coefficients[1]);
    assert_eq!(FEATURE_NAMES.len(), analysis.regression.coefficients.len());
    Ok(())
}
