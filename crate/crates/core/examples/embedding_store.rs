//! Writing and reading the binary embedding format, plus the two
//! embedding providers.
//!
//! ```text
//! cargo run --example embedding_store
//! ```

use lader::embed::{load_embeddings, EmbeddingMatrix, EmbeddingProvider, HashEmbedder, LookupEmbedder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hasher = HashEmbedder { dim: 16, seed: 0 };
    let texts = [
        ("q1", "aspirin after heart attack"),
        ("q2", "heart attack aspirin dose"),
        ("q3", "fever in children"),
    ];
    let rows = texts
        .iter()
        .map(|(id, t)| Ok((*id, hasher.embed(t)?)))
        .collect::<lader::error::Result<Vec<_>>>()?;
    let matrix = EmbeddingMatrix::from_rows(hasher.dim, rows)?;

    let path = std::env::temp_dir().join("lader-example.lder");
    matrix.save(&path)?;
    let bytes = std::fs::read(&path)?;
    println!("{} rows written, {} bytes, magic {:?}", matrix.len(), bytes.len(), String::from_utf8_lossy(&bytes[..4]));

    let back = load_embeddings(&path)?;
    assert_eq!(back, matrix);

    // unigram and bigram overlap shows up as cosine similarity
    let lookup = LookupEmbedder { matrix: back };
    let q1 = lookup.embed("q1")?;
    for id in ["q2", "q3"] {
        let v = lookup.embed(id)?;
        println!("sim(q1, {id}) = {:.3}", lader::embed::dot(&q1, &v)?);
    }
    match lookup.embed("missing") {
        Err(e) => println!("lookup of an unknown id fails: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
