//! BM25 over an in-memory inverted index.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::index::ScoredList;

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    /// term → (doc row, term frequency), sorted by row
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    doc_ids: Vec<String>,
    rows_by_id: HashMap<String, u32>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    params: Bm25Params,
}

impl InvertedIndex {
    pub fn build(docs: &[Document]) -> Result<Self> {
        Self::build_with(docs, Bm25Params::default())
    }

    pub fn build_with(docs: &[Document], params: Bm25Params) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::arg("cannot build a lexical index over zero documents"));
        }
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(docs.len());
        for (row, doc) in docs.iter().enumerate() {
            let tokens = tokenize(&doc.text());
            doc_lengths.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((row as u32, count));
            }
        }
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        Ok(Self {
            postings,
            doc_ids: docs.iter().map(|d| d.id.clone()).collect(),
            rows_by_id: docs
                .iter()
                .enumerate()
                .map(|(row, d)| (d.id.clone(), row as u32))
                .collect(),
            avg_doc_length: total as f64 / docs.len() as f64,
            doc_lengths,
            params,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, row: usize) -> u32 {
        self.doc_lengths[row]
    }

    pub fn doc_id(&self, row: usize) -> &str {
        &self.doc_ids[row]
    }

    pub fn row_of(&self, doc_id: &str) -> Option<usize> {
        self.rows_by_id.get(doc_id).map(|&r| r as usize)
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn postings(&self, term: &str) -> &[(u32, u32)] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.postings(term).len() as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Top-k documents by BM25. Each distinct query term counts once;
    /// documents matching no term are omitted.
    pub fn search(&self, query_text: &str, k: usize) -> Result<ScoredList> {
        if k == 0 {
            return Err(Error::arg("k must be at least 1"));
        }
        let Bm25Params { k1, b } = self.params;
        let terms: BTreeSet<String> = tokenize(query_text).into_iter().collect();
        let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
        for term in &terms {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = self.idf(term);
            for &(row, tf) in postings {
                let tf = f64::from(tf);
                let len = f64::from(self.doc_lengths[row as usize]);
                let norm = k1 * (1.0 - b + b * len / self.avg_doc_length);
                *scores.entry(row).or_default() += idf * tf * (k1 + 1.0) / (tf + norm);
            }
        }
        let mut list = ScoredList::from_unsorted(
            scores
                .into_iter()
                .filter(|(_, s)| *s > 0.0)
                .map(|(row, s)| (self.doc_ids[row as usize].clone(), s))
                .collect(),
        );
        list.truncate(k);
        Ok(list)
    }
}

pub fn build_lexical(docs: &[Document]) -> Result<InvertedIndex> {
    InvertedIndex::build(docs)
}

pub fn bm25_search(index: &InvertedIndex, query_text: &str, k: usize) -> Result<ScoredList> {
    index.search(query_text, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, title: &str, abs: &str) -> Document {
        Document {
            id: id.into(),
            title: title.into(),
            abstract_text: abs.into(),
        }
    }

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(tokenize("Heart-Attack, TREATMENT!"), ["heart", "attack", "treatment"]);
        assert!(tokenize(" ,. ").is_empty());
    }

    #[test]
    fn counts_single_doc() {
        let idx = build_lexical(&[doc("d0", "a b a", "")]).unwrap();
        assert_eq!(idx.postings("a"), [(0, 2)]);
        assert_eq!(idx.postings("b"), [(0, 1)]);
        assert_eq!(idx.doc_length(0), 3);
    }

    #[test]
    fn average_length() {
        let idx = build_lexical(&[doc("d0", "x y", ""), doc("d1", "x y", "z w")]).unwrap();
        assert_eq!(idx.avg_doc_length(), 3.0);
    }

    #[test]
    fn empty_collection_rejected() {
        assert!(build_lexical(&[]).is_err());
    }

    #[test]
    fn absent_term_gives_empty_list() {
        let idx = build_lexical(&[doc("d0", "alpha", "beta")]).unwrap();
        assert!(bm25_search(&idx, "gamma", 10).unwrap().is_empty());
    }

    #[test]
    fn single_doc_hand_value() {
        let idx = build_lexical(&[doc("d0", "x", "")]).unwrap();
        let k1 = 0.9;
        // idf = ln(1 + 0.5 / 1.5); length equals the average
        let expected = (4f64 / 3.0).ln() * (k1 + 1.0) / (1.0 + k1);
        let got = bm25_search(&idx, "x", 1).unwrap();
        assert_eq!(got.len(), 1);
        assert!((got.entries()[0].1 - expected).abs() < 1e-12);
    }
}
