//! Lexical retrieval with BM25 over a handful of abstracts.
//!
//! ```text
//! cargo run --example bm25_search -- "fever in children"
//! ```

use lader::corpus::Document;
use lader::lexical::{Bm25Params, InvertedIndex};

const DOCS: &[(&str, &str, &str)] = &[
    ("aspirin_mi", "Aspirin after heart attack", "Low dose aspirin reduces recurrent myocardial infarction."),
    ("statin_risk", "Statins and cardiovascular risk", "Statin therapy lowers cholesterol and heart disease risk."),
    ("fever_child", "Fever in young children", "Most fever in children is viral and resolves with fluids."),
    ("ibuprofen_kids", "Ibuprofen dosing for kids", "Weight based ibuprofen dose for fever and pain in children."),
    ("metformin", "Metformin first line", "Metformin remains first line therapy for type 2 diabetes."),
];

fn main() -> lader::error::Result<()> {
    let query = std::env::args().nth(1).unwrap_or_else(|| "fever in children".into());
    let docs: Vec<Document> = DOCS
        .iter()
        .map(|(id, title, text)| Document {
            id: id.to_string(),
            title: title.to_string(),
            abstract_text: text.to_string(),
        })
        .collect();

    for params in [Bm25Params::default(), Bm25Params { k1: 1.2, b: 0.75 }] {
        let index = InvertedIndex::build_with(&docs, params)?;
        println!("k1={} b={}  query: {query}", params.k1, params.b);
        for (d, s) in index.search(&query, 5)?.iter() {
            println!("  {d:16}{s:.4}");
        }
    }
    Ok(())
}
