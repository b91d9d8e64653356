//! Reference implementations used as test oracles. Nothing here calls into
//! the library's scoring code.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, prefix: &str, n: usize, dim: usize) -> Vec<(String, Vec<f32>)> {
    (0..n)
        .map(|i| {
            let v = (0..dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
            (format!("{prefix}{i:05}"), v)
        })
        .collect()
}

pub fn naive_dot(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] as f64 * b[i] as f64;
    }
    s
}

/// Descending score, ascending id.
pub fn sort_ranked(v: &mut [(String, f64)]) {
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
}

/// Scores every row and fully sorts.
pub fn naive_top_k(rows: &[(String, Vec<f32>)], q: &[f32], k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = rows.iter().map(|(id, v)| (id.clone(), naive_dot(q, v))).collect();
    sort_ranked(&mut all);
    all.truncate(k);
    all
}

pub fn naive_softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Score(d) = s̃_d·[d in docs] + λ Σ_i s̃_qi·[d ∈ Rel(q_i)], over the union of
/// retrieved and clicked documents.
pub fn brute_force_fusion(
    similar_queries: &[(String, f64)],
    similar_docs: &[(String, f64)],
    rel: &BTreeMap<String, BTreeSet<String>>,
    lambda: f64,
) -> Vec<(String, f64)> {
    let pq = naive_softmax(&similar_queries.iter().map(|x| x.1).collect::<Vec<_>>());
    let pd = naive_softmax(&similar_docs.iter().map(|x| x.1).collect::<Vec<_>>());
    let mut candidates: BTreeSet<String> = similar_docs.iter().map(|x| x.0.clone()).collect();
    for (q, _) in similar_queries {
        if let Some(docs) = rel.get(q) {
            candidates.extend(docs.iter().cloned());
        }
    }
    let mut out = Vec::new();
    for d in candidates {
        let mut score = 0.0;
        for (j, (doc, _)) in similar_docs.iter().enumerate() {
            if *doc == d {
                score += pd[j];
            }
        }
        for (i, (q, _)) in similar_queries.iter().enumerate() {
            if rel.get(q).is_some_and(|s| s.contains(&d)) {
                score += lambda * pq[i];
            }
        }
        out.push((d, score));
    }
    sort_ranked(&mut out);
    out
}

/// Reference metrics for one query. Grades > 0 count as relevant.
pub mod reference {
    use std::collections::BTreeMap;

    pub fn ndcg(ranked: &[String], grades: &BTreeMap<String, f64>, k: usize) -> f64 {
        let mut dcg = 0.0;
        for (i, d) in ranked.iter().enumerate() {
            if i >= k {
                break;
            }
            let g = grades.get(d).copied().unwrap_or(0.0);
            dcg += g / ((i as f64) + 2.0).log2();
        }
        let mut ideal: Vec<f64> = grades.values().copied().filter(|g| *g > 0.0).collect();
        ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut idcg = 0.0;
        for (i, g) in ideal.iter().enumerate().take(k) {
            idcg += g / ((i as f64) + 2.0).log2();
        }
        if idcg == 0.0 {
            0.0
        } else {
            dcg / idcg
        }
    }

    pub fn rr(ranked: &[String], grades: &BTreeMap<String, f64>, cutoff: usize) -> f64 {
        for (i, d) in ranked.iter().enumerate() {
            if i >= cutoff {
                break;
            }
            if grades.get(d).copied().unwrap_or(0.0) > 0.0 {
                return 1.0 / (i as f64 + 1.0);
            }
        }
        0.0
    }

    pub fn recall(ranked: &[String], grades: &BTreeMap<String, f64>, k: usize) -> Option<f64> {
        let relevant: Vec<&String> = grades.iter().filter(|(_, g)| **g > 0.0).map(|(d, _)| d).collect();
        if relevant.is_empty() {
            return None;
        }
        let top: Vec<&String> = ranked.iter().take(k).collect();
        let hits = relevant.iter().filter(|d| top.contains(d)).count();
        Some(hits as f64 / relevant.len() as f64)
    }
}

/// Central finite differences of `f` with respect to every entry of `x`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            work[i] = x[i] + h;
            let up = f(&work);
            work[i] = x[i] - h;
            let down = f(&work);
            work[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max|a − b| / max(max|a|, max|b|, floor)`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|x| x.abs()).fold(floor, f64::max);
    diff / scale
}

/// Reference batch losses on row-major flattened `B × dim` matrices.
pub fn reference_inbatch(q: &[f64], p: &[f64], n: &[f64], b: usize, dim: usize) -> f64 {
    let row = |m: &[f64], i: usize| m[i * dim..(i + 1) * dim].to_vec();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, c)| a * c).sum::<f64>();
    let mut total = 0.0;
    for i in 0..b {
        let qi = row(q, i);
        let mut scores = Vec::new();
        for j in 0..b {
            scores.push(dot(&qi, &row(p, j)));
        }
        for j in 0..b {
            scores.push(dot(&qi, &row(n, j)));
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        total += lse - scores[i];
    }
    total / b as f64
}

pub fn reference_triplet(q: &[f64], p: &[f64], n: &[f64], b: usize, dim: usize, alpha: f64) -> f64 {
    let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
    let mut total = 0.0;
    for i in 0..b {
        let r = i * dim..(i + 1) * dim;
        let margin = dist(&q[r.clone()], &p[r.clone()]) - dist(&q[r.clone()], &n[r]) + alpha;
        total += margin.max(0.0);
    }
    total / b as f64
}

/// Per-row hinge margins, used to skip batches near the kink.
pub fn triplet_margins(q: &[f64], p: &[f64], n: &[f64], b: usize, dim: usize, alpha: f64) -> Vec<f64> {
    let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
    (0..b)
        .map(|i| {
            let r = i * dim..(i + 1) * dim;
            dist(&q[r.clone()], &p[r.clone()]) - dist(&q[r.clone()], &n[r]) + alpha
        })
        .collect()
}
