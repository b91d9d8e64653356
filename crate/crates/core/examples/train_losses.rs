//! The two training objectives and their gradients, used to nudge query
//! vectors toward their clicked documents with plain gradient descent.
//!
//! ```text
//! cargo run --release --example train_losses
//! ```

use lader::losses::{combined_loss, inbatch_nll, triplet_loss, LossBatch};
use lader::synthbench::{generate, SynthSpec};

fn main() -> lader::error::Result<()> {
    let corpus = generate(&SynthSpec::default())?;
    let triples = &corpus.triples[..32];
    let mut batch = LossBatch::from_triples(triples, &corpus.log_query_embeddings, &corpus.doc_embeddings)?;
    println!("batch of {} triples, dim {}, alpha {}, beta {}", batch.size(), batch.dim(), batch.alpha, batch.beta);
    println!(
        "in-batch {:.4}  triplet {:.4}",
        inbatch_nll(&batch)?.loss,
        triplet_loss(&batch)?.loss
    );

    // only the query side moves; documents stay fixed like a frozen index
    let lr = 0.05;
    for step in 0..=40 {
        let out = combined_loss(&batch)?;
        if step % 10 == 0 {
            let active = out.per_row.iter().filter(|l| **l > 0.0).count();
            println!("step {step:2}  combined {:.4}  rows with loss {active}", out.loss);
        }
        batch.queries -= out.grad_queries * lr;
    }
    Ok(())
}
