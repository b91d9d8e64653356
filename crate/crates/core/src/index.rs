//! Exact maximum-inner-product search over an [`EmbeddingMatrix`].
//!
//! The index scans every row. Top-k selection keeps a bounded heap whose
//! root is the current worst candidate, so a search costs
//! `O(N·dim + N·log k)`. Equal scores are ordered by ascending id, which makes
//! every result fully deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::embed::{dot_unchecked, EmbeddingMatrix, Reader};
use crate::error::{Error, Result};

pub const INDEX_MAGIC: &[u8; 4] = b"LIDX";
pub const INDEX_VERSION: u32 = 1;

const BLOCK_ROWS: usize = 256;

/// Ranked `(id, score)` pairs: scores non-increasing, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoredList {
    entries: Vec<(String, f64)>,
}

/// Descending score, then ascending id.
pub fn rank_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    // adding 0.0 folds -0.0 into +0.0 so signed zeros tie
    (b.1 + 0.0).total_cmp(&(a.1 + 0.0)).then_with(|| a.0.cmp(b.0))
}

impl ScoredList {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sorts arbitrary pairs into rank order. Ids must be unique.
    pub fn from_unsorted(mut entries: Vec<(String, f64)>) -> Self {
        entries.sort_by(|a, b| rank_order((&a.0, a.1), (&b.0, b.1)));
        debug_assert!(
            {
                let mut ids: Vec<&str> = entries.iter().map(|e| e.0.as_str()).collect();
                ids.sort_unstable();
                ids.windows(2).all(|w| w[0] != w[1])
            },
            "duplicate ids in scored list"
        );
        Self { entries }
    }

    /// Wraps entries that are already ranked, such as rows read from a run file.
    pub fn from_ranked(entries: Vec<(String, f64)>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(id, s)| (id.as_str(), *s))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|(_, s)| *s)
    }

    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }

    pub fn into_entries(self) -> Vec<(String, f64)> {
        self.entries
    }

    pub(crate) fn retain(&mut self, f: impl FnMut(&(String, f64)) -> bool) {
        self.entries.retain(f);
    }
}

struct Candidate<'a> {
    score: f64,
    id: &'a str,
    row: usize,
}

// Greater means worse, so the max-heap root is the weakest kept candidate.
impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order((self.id, self.score), (other.id, other.score))
    }
}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate<'_> {}

/// Brute-force inner-product index.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatIndex {
    matrix: EmbeddingMatrix,
}

impl FlatIndex {
    pub fn new(matrix: EmbeddingMatrix) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &EmbeddingMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    pub fn id_of_row(&self, row: usize) -> &str {
        self.matrix.id(row)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.matrix.row_of(id).is_some()
    }

    /// The `min(k, N)` rows with the largest inner product, best first.
    pub fn search(&self, query: &[f32], k: usize) -> Result<ScoredList> {
        Ok(ScoredList {
            entries: self
                .search_rows(query, k)?
                .into_iter()
                .map(|(row, s)| (self.matrix.id(row).to_string(), s))
                .collect(),
        })
    }

    /// Like [`search`](Self::search) but yields row numbers.
    pub fn search_rows(&self, query: &[f32], k: usize) -> Result<Vec<(usize, f64)>> {
        if query.len() != self.dim() {
            return Err(Error::arg(format!(
                "query has dim {}, index has dim {}",
                query.len(),
                self.dim()
            )));
        }
        if k == 0 {
            return Err(Error::arg("k must be at least 1"));
        }
        let k = k.min(self.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        let dim = self.dim();
        let data = self.matrix.data();
        let mut heap: BinaryHeap<Candidate<'_>> = BinaryHeap::with_capacity(k + 1);
        let mut scores = [0f64; BLOCK_ROWS];
        for start in (0..self.len()).step_by(BLOCK_ROWS) {
            let end = (start + BLOCK_ROWS).min(self.len());
            let block = &data[start * dim..end * dim];
            for (slot, row) in scores.iter_mut().zip(block.chunks_exact(dim)) {
                *slot = dot_unchecked(query, row);
            }
            for (offset, &score) in scores[..end - start].iter().enumerate() {
                let row = start + offset;
                let cand = Candidate {
                    score,
                    id: self.matrix.id(row),
                    row,
                };
                if heap.len() < k {
                    heap.push(cand);
                } else if let Some(mut worst) = heap.peek_mut() {
                    if cand < *worst {
                        *worst = cand;
                    }
                }
            }
        }
        let mut best = heap.into_vec();
        best.sort();
        Ok(best.into_iter().map(|c| (c.row, c.score)).collect())
    }

    /// Searches every row of `queries`; output order follows input order.
    pub fn batch_search(&self, queries: &EmbeddingMatrix, k: usize) -> Result<Vec<ScoredList>> {
        if queries.dim() != self.dim() {
            return Err(Error::arg(format!(
                "queries have dim {}, index has dim {}",
                queries.dim(),
                self.dim()
            )));
        }
        (0..queries.len())
            .into_par_iter()
            .map(|i| self.search(queries.row(i), k))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&self.matrix.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let mut r = Reader::new(bytes, origin);
        let magic = r.take(4)?;
        if magic != INDEX_MAGIC {
            return Err(Error::format(origin, format!("bad magic {magic:?}, expected LIDX")));
        }
        let version = r.u32()?;
        if version != INDEX_VERSION {
            return Err(Error::format(origin, format!("unsupported index version {version}")));
        }
        Ok(Self::new(EmbeddingMatrix::from_bytes(r.rest(), origin)?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub fn load_index(path: impl AsRef<Path>) -> Result<FlatIndex> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FlatIndex::from_bytes(&bytes, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    #[test]
    fn signed_zeros_tie() {
        assert_eq!(rank_order(("a", -0.0), ("b", 0.0)), Ordering::Less);
    }

    use super::*;

    fn two_rows() -> FlatIndex {
        FlatIndex::new(
            EmbeddingMatrix::from_rows(2, vec![("e1", vec![1.0, 0.0]), ("e2", vec![0.0, 1.0])])
                .unwrap(),
        )
    }

    fn approx(list: &ScoredList) -> Vec<(String, f64)> {
        list.iter().map(|(id, s)| (id.to_string(), (s * 1e6).round() / 1e6)).collect()
    }

    #[test]
    fn dominant_coordinate() {
        let idx = two_rows();
        let top1 = idx.search(&[1.0, 0.1], 1).unwrap();
        assert_eq!(approx(&top1), vec![("e1".to_string(), 1.0)]);
        let top2 = idx.search(&[1.0, 0.1], 2).unwrap();
        assert_eq!(approx(&top2), vec![("e1".to_string(), 1.0), ("e2".to_string(), 0.1)]);
    }

    #[test]
    fn k_larger_than_corpus_returns_all() {
        assert_eq!(two_rows().search(&[1.0, 1.0], 1000).unwrap().len(), 2);
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let m = EmbeddingMatrix::from_rows(
            1,
            vec![("c", vec![1.0]), ("a", vec![1.0]), ("b", vec![1.0]), ("z", vec![2.0])],
        )
        .unwrap();
        let idx = FlatIndex::new(m);
        let res = idx.search(&[1.0], 3).unwrap();
        assert_eq!(res.ids().collect::<Vec<_>>(), ["z", "a", "b"]);
    }

    #[test]
    fn errors() {
        let idx = two_rows();
        assert!(idx.search(&[1.0, 0.0, 0.0], 1).is_err());
        assert!(idx.search(&[1.0, 0.0], 0).is_err());
    }

    #[test]
    fn empty_index_and_batch() {
        let idx = FlatIndex::new(EmbeddingMatrix::empty(2).unwrap());
        assert!(idx.search(&[1.0, 0.0], 5).unwrap().is_empty());
        let none = EmbeddingMatrix::empty(2).unwrap();
        assert!(two_rows().batch_search(&none, 3).unwrap().is_empty());
    }

    #[test]
    fn round_trip_and_bad_magic() {
        let idx = two_rows();
        let back = FlatIndex::from_bytes(&idx.to_bytes(), "mem").unwrap();
        assert_eq!(back, idx);
        let mut bytes = idx.to_bytes();
        bytes[1] = b'?';
        assert!(matches!(FlatIndex::from_bytes(&bytes, "mem"), Err(Error::Format { .. })));
    }
}
