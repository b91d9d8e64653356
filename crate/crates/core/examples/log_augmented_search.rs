//! One query scored end to end: similar logged queries, their clicked
//! documents, and how both evidence sources add up per document.
//!
//! ```text
//! cargo run --example log_augmented_search -- "does aspirin prevent heart attack"
//! ```

use lader::corpus::{ClickLog, ClickRecord};
use lader::embed::{EmbeddingMatrix, EmbeddingProvider, HashEmbedder};
use lader::fusion::{FusionConfig, Lader, QueryInput};
use lader::index::FlatIndex;

const DOCS: &[(&str, &str)] = &[
    ("aspirin_mi", "low dose aspirin reduces recurrent heart attack"),
    ("chest_pain", "emergency triage of chest pain"),
    ("statin_risk", "statin therapy lowers heart disease risk"),
    ("fever_child", "fever in children is usually viral"),
    ("metformin", "metformin for type 2 diabetes"),
];

/// Logged query, its text, and `(doc, clicks, impressions)`.
type LogEntry = (&'static str, &'static str, &'static [(&'static str, u64, u64)]);

const LOG: &[LogEntry] = &[
    ("cardio1", "aspirin heart attack", &[("aspirin_mi", 40, 60), ("chest_pain", 5, 50)]),
    ("cardio2", "heart disease risk", &[("statin_risk", 9, 20)]),
    ("kids1", "fever in children", &[("fever_child", 30, 70)]),
];

fn main() -> lader::error::Result<()> {
    let text = std::env::args().nth(1).unwrap_or_else(|| "does aspirin prevent heart attack".into());
    let embedder = HashEmbedder { dim: 64, seed: 0 };
    let embed_all = |rows: &mut dyn Iterator<Item = (&str, &str)>| -> lader::error::Result<EmbeddingMatrix> {
        let rows = rows
            .map(|(id, t)| Ok((id.to_string(), embedder.embed(t)?)))
            .collect::<lader::error::Result<Vec<_>>>()?;
        EmbeddingMatrix::from_rows(embedder.dim, rows)
    };
    let docs = FlatIndex::new(embed_all(&mut DOCS.iter().copied())?);
    let queries = FlatIndex::new(embed_all(&mut LOG.iter().map(|(q, t, _)| (*q, *t)))?);

    let records: Vec<ClickRecord> = LOG
        .iter()
        .flat_map(|(q, _, clicks)| {
            clicks.iter().map(move |(d, c, i)| ClickRecord {
                query_id: q.to_string(),
                doc_id: d.to_string(),
                clicks: *c,
                impressions: *i,
            })
        })
        .collect();
    let rel = ClickLog::from_records(records)?.rel();

    let vector = embedder.embed(&text)?;
    let input = QueryInput { id: "live", text: &text, vector: &vector };
    let cfg = FusionConfig { lambda: 0.5, ..FusionConfig::default() };
    let trace = Lader::new(&queries, &docs, &rel).score(&input, &cfg)?;

    println!("similar logged queries:");
    for (q, w) in trace.similar_queries.iter() {
        println!("  {q:8} weight {w:.3} clicked {:?}", rel.get(q));
    }
    println!("final ranking (retrieval + lambda * log):");
    for (d, s) in trace.final_ranking.iter() {
        let c = trace.components.iter().find(|c| c.doc_id == d).unwrap();
        println!("  {d:12} {s:.3} = {:.3} + {:.3}", c.retrieval, c.log);
    }
    Ok(())
}
