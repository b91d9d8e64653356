//! Embedding storage, providers and the inner-product kernel.
//!
//! Vectors are stored as `f32` and every inner product is accumulated in
//! `f64`. Embeddings are kept exactly as supplied; nothing here normalizes
//! them except [`hash_embed`], which produces unit vectors by construction.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! b"LDER" | version: u32 | dim: u32 | count: u64
//! count × (UTF-8 id, 0x00)
//! count × dim × f32
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lexical::tokenize;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"LDER";
pub const EMBEDDING_VERSION: u32 = 1;
pub const DEFAULT_DIM: usize = 768;

/// Inner product of two equal-length vectors, accumulated in 64-bit.
pub fn dot(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::arg(format!(
            "vector length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(dot_unchecked(a, b))
}

#[inline]
pub(crate) fn dot_unchecked(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// Row-major `f32` matrix with one string id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    rows_by_id: HashMap<String, usize>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, ids: Vec<String>, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("embedding dim must be positive"));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::arg(format!(
                "{} ids × dim {} needs {} values, got {}",
                ids.len(),
                dim,
                ids.len() * dim,
                data.len()
            )));
        }
        if let Some(row) = data.chunks(dim).position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::arg(format!("row {row} (`{}`) is not finite", ids[row])));
        }
        let mut rows_by_id = HashMap::with_capacity(ids.len());
        for (row, id) in ids.iter().enumerate() {
            if id.contains('\0') {
                return Err(Error::arg(format!("id {id:?} contains a NUL byte")));
            }
            if rows_by_id.insert(id.clone(), row).is_some() {
                return Err(Error::arg(format!("duplicate embedding id `{id}`")));
            }
        }
        Ok(Self {
            dim,
            ids,
            data,
            rows_by_id,
        })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new(), Vec::new())
    }

    pub fn from_rows<S: Into<String>>(dim: usize, rows: Vec<(S, Vec<f32>)>) -> Result<Self> {
        let mut ids = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, v) in rows {
            let id = id.into();
            if v.len() != dim {
                return Err(Error::arg(format!(
                    "row `{id}` has length {}, expected {dim}",
                    v.len()
                )));
            }
            ids.push(id);
            data.extend_from_slice(&v);
        }
        Self::new(dim, ids, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, row: usize) -> &str {
        &self.ids[row]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.rows_by_id.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.row_of(id).map(|r| self.row(r))
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.data.chunks(self.dim))
    }

    pub(crate) fn data(&self) -> &[f32] {
        &self.data
    }

    /// Sub-matrix of the listed ids, in matrix row order. Unknown ids are ignored.
    pub fn select<'a, I>(&self, ids: I) -> EmbeddingMatrix
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut rows: Vec<usize> = ids.into_iter().filter_map(|id| self.row_of(id)).collect();
        rows.sort_unstable();
        rows.dedup();
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        let mut ids = Vec::with_capacity(rows.len());
        for r in rows {
            ids.push(self.ids[r].clone());
            data.extend_from_slice(self.row(r));
        }
        EmbeddingMatrix::new(self.dim, ids, data).expect("sub-matrix of a valid matrix")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let id_bytes: usize = self.ids.iter().map(|s| s.len() + 1).sum();
        let mut out = Vec::with_capacity(20 + id_bytes + self.data.len() * 4);
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        for id in &self.ids {
            out.extend_from_slice(id.as_bytes());
            out.push(0);
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses the binary layout; `origin` labels errors.
    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let mut r = Reader::new(bytes, origin);
        let magic = r.take(4)?;
        if magic != EMBEDDING_MAGIC {
            return Err(Error::format(origin, format!("bad magic {magic:?}, expected LDER")));
        }
        let version = r.u32()?;
        if version != EMBEDDING_VERSION {
            return Err(Error::format(origin, format!("unsupported version {version}")));
        }
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(Error::format(origin, "dim is zero"));
        }
        let count = r.u64()?;
        let count = usize::try_from(count)
            .map_err(|_| Error::format(origin, format!("row count {count} too large")))?;
        let mut ids = Vec::with_capacity(count.min(1 << 20));
        for row in 0..count {
            let id = r.c_str().map_err(|_| {
                Error::format(origin, format!("truncated: declared {count} ids, found {row}"))
            })?;
            ids.push(id);
        }
        let need = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::format(origin, "payload size overflows"))?;
        let payload = r.rest();
        if payload.len() != need {
            return Err(Error::format(
                origin,
                format!(
                    "payload holds {} bytes, {count} rows × dim {dim} need {need}",
                    payload.len()
                ),
            ));
        }
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if let Some(row) = data.chunks(dim).position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::format(
                origin,
                format!("row {row} (`{}`) contains a non-finite value", ids[row]),
            ));
        }
        EmbeddingMatrix::new(dim, ids, data).map_err(|e| Error::format(origin, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::from_bytes(&bytes, &path.display().to_string())
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8], origin: &'a str) -> Self {
        Self {
            bytes,
            pos: 0,
            origin,
        }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.origin, "unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }

    fn c_str(&mut self) -> Result<String> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == 0)
            .ok_or_else(|| Error::format(self.origin, "unterminated id"))?;
        let s = std::str::from_utf8(&rest[..end])
            .map_err(|_| Error::format(self.origin, "id is not valid UTF-8"))?
            .to_string();
        self.pos += end + 1;
        Ok(s)
    }

    pub(crate) fn rest(&mut self) -> &'a [u8] {
        let s = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        s
    }
}

/// Source of query or document vectors.
///
/// Implementations must be deterministic: the same input always yields the
/// same vector.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    /// Embeds free text, or looks up a precomputed vector by id.
    fn embed(&self, input: &str) -> Result<Vec<f32>>;
}

/// Feature-hashing embedder used when no trained encoder output is available.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl EmbeddingProvider for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, input: &str) -> Result<Vec<f32>> {
        hash_embed(input, self.dim, self.seed)
    }
}

/// Looks vectors up by id in a precomputed matrix.
#[derive(Debug, Clone)]
pub struct LookupEmbedder {
    pub matrix: EmbeddingMatrix,
}

impl EmbeddingProvider for LookupEmbedder {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn embed(&self, input: &str) -> Result<Vec<f32>> {
        self.matrix
            .get(input)
            .map(<[f32]>::to_vec)
            .ok_or_else(|| Error::arg(format!("no stored embedding for `{input}`")))
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn feature_hash(feature: &str, seed: u64) -> u64 {
    let mut h = FNV_OFFSET ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in feature.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    // splitmix64 finalizer spreads the low bits used for bucketing
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Signed feature hashing of word unigrams and bigrams, L2-normalized.
pub fn hash_embed(text: &str, dim: usize, seed: u64) -> Result<Vec<f32>> {
    if dim < 2 {
        return Err(Error::arg(format!("hash embedding dim must be >= 2, got {dim}")));
    }
    let tokens = tokenize(text);
    let mut acc = vec![0f64; dim];
    let bigrams = tokens.windows(2).map(|w| format!("{} {}", w[0], w[1]));
    for feature in tokens.iter().cloned().chain(bigrams) {
        let h = feature_hash(&feature, seed);
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        acc[bucket] += sign;
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::arg(format!("text {text:?} carries no hashable features")));
    }
    Ok(acc.into_iter().map(|v| (v / norm) as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(dot(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        let s = 0.5f32.sqrt();
        assert!((dot(&[s, s], &[s, s]).unwrap() - 1.0).abs() < 1e-6);
        assert!(dot(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn hash_embed_is_deterministic_and_unit() {
        let a = hash_embed("heart attack treatment", 32, 9).unwrap();
        let b = hash_embed("heart attack treatment", 32, 9).unwrap();
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn hash_embed_rejects_empty_text() {
        assert!(hash_embed("  ,;  ", 16, 0).is_err());
        assert!(hash_embed("x", 1, 0).is_err());
    }

    #[test]
    fn disjoint_texts_are_nearly_orthogonal() {
        let mean_abs: f64 = (0..100u64)
            .map(|seed| {
                let a = hash_embed("heart attack treatment", 64, seed).unwrap();
                let b = hash_embed("myocardial", 64, seed).unwrap();
                dot(&a, &b).unwrap().abs()
            })
            .sum::<f64>()
            / 100.0;
        assert!(mean_abs < 0.2, "mean |dot| = {mean_abs}");
    }

    fn sample_matrix() -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(
            4,
            vec![
                ("a", vec![1.0, -2.5, 0.0, 3.25]),
                ("b", vec![f32::MIN_POSITIVE, 1e-30, -0.0, 7.0]),
                ("c", vec![0.1, 0.2, 0.3, 0.4]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn bytes_round_trip_bit_exact() {
        let m = sample_matrix();
        let back = EmbeddingMatrix::from_bytes(&m.to_bytes(), "mem").unwrap();
        assert_eq!(back.ids(), m.ids());
        let bits = |m: &EmbeddingMatrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn truncated_file_is_format_error() {
        let m = EmbeddingMatrix::from_rows(2, (0..5).map(|i| (format!("r{i}"), vec![i as f32, 1.0])).collect())
            .unwrap();
        let mut bytes = m.to_bytes();
        bytes.truncate(bytes.len() - 8);
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&bytes, "mem"),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn nan_entry_names_row() {
        let m = sample_matrix();
        let mut bytes = m.to_bytes();
        let payload_start = bytes.len() - 3 * 4 * 4;
        let second_row = payload_start + 4 * 4;
        bytes[second_row..second_row + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        match EmbeddingMatrix::from_bytes(&bytes, "mem") {
            Err(Error::Format { message, .. }) => assert!(message.contains("row 1"), "{message}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = sample_matrix().to_bytes();
        bytes[0] = b'X';
        assert!(EmbeddingMatrix::from_bytes(&bytes, "mem").is_err());
        let mut bytes = sample_matrix().to_bytes();
        bytes[4] = 9;
        assert!(EmbeddingMatrix::from_bytes(&bytes, "mem").is_err());
    }

    #[test]
    fn construction_validates() {
        assert!(EmbeddingMatrix::from_rows(2, vec![("a", vec![1.0, 2.0]), ("a", vec![0.0, 0.0])]).is_err());
        assert!(EmbeddingMatrix::from_rows(2, vec![("a", vec![f32::INFINITY, 2.0])]).is_err());
        assert!(EmbeddingMatrix::new(3, vec!["a".into()], vec![1.0]).is_err());
    }

    #[test]
    fn select_keeps_row_order() {
        let m = sample_matrix();
        let s = m.select(["c", "a", "zzz"]);
        assert_eq!(s.ids(), ["a".to_string(), "c".to_string()]);
        assert_eq!(s.get("c").unwrap(), m.get("c").unwrap());
    }

    fn int_vec() -> impl Strategy<Value = Vec<f32>> {
        // integer-valued entries keep every product and sum exact in f32 and f64
        prop::collection::vec((-1000i32..1000).prop_map(|v| v as f32), 8)
    }

    proptest! {
        #[test]
        fn dot_symmetric_and_bilinear(a in int_vec(), b in int_vec(), c in int_vec(), k in -4i32..4) {
            let ab = dot(&a, &b).unwrap();
            prop_assert_eq!(ab, dot(&b, &a).unwrap());
            let rel = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0);

            let ka: Vec<f32> = a.iter().map(|v| v * k as f32).collect();
            prop_assert!(rel(dot(&ka, &b).unwrap(), f64::from(k) * ab));

            let bc: Vec<f32> = b.iter().zip(&c).map(|(x, y)| x + y).collect();
            prop_assert!(rel(dot(&a, &bc).unwrap(), ab + dot(&a, &c).unwrap()));
        }
    }
}
