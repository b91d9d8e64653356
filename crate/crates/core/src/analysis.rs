//! Which queries profit from log augmentation, and how much log is needed.
//!
//! Two analyses are provided: a sweep that re-runs retrieval with growing
//! seeded samples of the click log, and a per-query linear regression of the
//! NDCG@10 gain (full vs. retrieval-only) on nine query features.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::corpus::{subsample_queries, ClickLog, Group, Query, Rel};
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::eval::{evaluate, ndcg_at_k, Judgments, MetricTable, Qrels, RunFile};
use crate::fusion::{DocRetriever, FusionConfig, Lader, LaderTrace, QueryInput};
use crate::index::FlatIndex;

/// Shannon entropy in nats, with `0 · ln 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if p.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::arg("probabilities must be finite and non-negative"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::arg(format!("probabilities sum to {total}, not 1")));
    }
    Ok(-p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>())
}

pub const FEATURE_NAMES: [&str; 9] = [
    "ql",
    "group_head",
    "group_torso",
    "group_tail",
    "ent_q",
    "ent_d",
    "e_rel",
    "rel1",
    "rel5",
];

#[derive(Debug, Clone, PartialEq)]
pub struct QueryFeatures {
    pub query_id: String,
    /// Whitespace token count.
    pub ql: f64,
    pub group: Group,
    /// Entropy of the normalized similar-query scores.
    pub ent_q: f64,
    /// Entropy of the normalized similar-document scores.
    pub ent_d: f64,
    /// Similarity-weighted expected number of clicked documents.
    pub e_rel: f64,
    /// Clicked documents of the most similar query.
    pub rel1: f64,
    /// Mean clicked documents over the (up to) five most similar queries.
    pub rel5: f64,
    /// Set when the trace had no similar queries or documents.
    pub degenerate: bool,
}

impl QueryFeatures {
    pub fn values(&self) -> [f64; 9] {
        let one_hot = |g: Group| if self.group == g { 1.0 } else { 0.0 };
        [
            self.ql,
            one_hot(Group::Head),
            one_hot(Group::Torso),
            one_hot(Group::Tail),
            self.ent_q,
            self.ent_d,
            self.e_rel,
            self.rel1,
            self.rel5,
        ]
    }
}

pub fn extract_features(trace: &LaderTrace, query: &Query, rel: &Rel, default_group: Group) -> Result<QueryFeatures> {
    let sq: Vec<f64> = trace.similar_queries.scores().collect();
    let sd: Vec<f64> = trace.similar_docs.scores().collect();
    let rel_sizes: Vec<f64> = trace
        .similar_queries
        .ids()
        .map(|q| rel.get(q).len() as f64)
        .collect();
    let ent_q = if sq.is_empty() { 0.0 } else { entropy(&sq)? };
    let ent_d = if sd.is_empty() { 0.0 } else { entropy(&sd)? };
    let top5 = &rel_sizes[..rel_sizes.len().min(5)];
    Ok(QueryFeatures {
        query_id: query.id.clone(),
        ql: query.text.split_whitespace().count() as f64,
        group: query.group_or(default_group),
        ent_q,
        ent_d,
        e_rel: sq.iter().zip(&rel_sizes).map(|(p, n)| p * n).sum(),
        rel1: rel_sizes.first().copied().unwrap_or(0.0),
        rel5: if top5.is_empty() {
            0.0
        } else {
            top5.iter().sum::<f64>() / top5.len() as f64
        },
        degenerate: sq.is_empty() || sd.is_empty(),
    })
}

/// Maps each column onto [0, 1]; constant columns become 0.
pub fn minmax_normalize(rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if rows.len() < 2 {
        return Err(Error::arg("min-max normalization needs at least two rows"));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::arg("feature rows have different lengths"));
    }
    let mut out = rows.to_vec();
    for c in 0..cols {
        let (lo, hi) = rows
            .iter()
            .map(|r| r[c])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        for r in out.iter_mut() {
            r[c] = if hi > lo { (r[c] - lo) / (hi - lo) } else { 0.0 };
        }
    }
    Ok(out)
}

pub const RIDGE_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub r_squared: f64,
    /// The normal equations were singular and were regularized with [`RIDGE_EPSILON`].
    pub ridge_applied: bool,
    /// Still singular after regularization; fell back to a pseudo-inverse.
    pub rank_deficient: bool,
}

impl RegressionResult {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    /// `feature,coefficient` rows followed by the intercept.
    pub fn to_csv(&self, names: &[&str]) -> String {
        let mut out = String::from("feature,coefficient\n");
        for (name, w) in names.iter().zip(&self.coefficients) {
            let _ = writeln!(out, "{name},{w:.6}");
        }
        let _ = writeln!(out, "intercept,{:.6}", self.intercept);
        out
    }
}

/// Ordinary least squares with intercept via the normal equations.
pub fn fit_linear_regression(x: &[Vec<f64>], y: &[f64]) -> Result<RegressionResult> {
    let n = y.len();
    let p = x.first().map_or(0, Vec::len);
    if x.len() != n {
        return Err(Error::arg(format!("{} feature rows but {n} targets", x.len())));
    }
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::arg("feature rows have different lengths"));
    }
    if n < p + 1 {
        return Err(Error::arg(format!("need at least {} rows for {p} features, got {n}", p + 1)));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::arg("regression inputs must be finite"));
    }
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    if ss_tot == 0.0 {
        return Ok(RegressionResult {
            coefficients: vec![0.0; p],
            intercept: mean_y,
            r_squared: 0.0,
            ridge_applied: false,
            rank_deficient: false,
        });
    }

    let design = DMatrix::from_fn(n, p + 1, |r, c| if c < p { x[r][c] } else { 1.0 });
    let target = DVector::from_column_slice(y);
    let mut gram = design.transpose() * &design;
    let rhs = design.transpose() * &target;

    let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0f64), |(lo, hi), &v| (lo.min(v), hi.max(v.abs())));
    let ridge_applied = lo <= hi * 1e-12;
    if ridge_applied {
        for i in 0..=p {
            gram[(i, i)] += RIDGE_EPSILON;
        }
    }
    let (solution, rank_deficient) = match gram.clone().cholesky() {
        Some(ch) => (ch.solve(&rhs), false),
        None => {
            let svd = gram.svd(true, true);
            let sol = svd
                .solve(&rhs, 1e-12)
                .map_err(|e| Error::invalid(format!("regression solve failed: {e}")))?;
            (sol, true)
        }
    };

    let fitted = &design * &solution;
    let ss_res: f64 = fitted.iter().zip(y).map(|(f, v)| (v - f).powi(2)).sum();
    Ok(RegressionResult {
        coefficients: solution.iter().take(p).copied().collect(),
        intercept: solution[p],
        r_squared: (1.0 - ss_res / ss_tot).clamp(0.0, 1.0),
        ridge_applied,
        rank_deficient,
    })
}

/// Per-query NDCG@k of `full` minus that of `baseline`.
pub fn gain_vector(full: &RunFile, baseline: &RunFile, qrels: &Qrels, k: usize) -> Result<BTreeMap<String, f64>> {
    let a: BTreeSet<&str> = full.query_ids().collect();
    let b: BTreeSet<&str> = baseline.query_ids().collect();
    if a != b {
        let only_a: Vec<&str> = a.difference(&b).copied().take(5).collect();
        let only_b: Vec<&str> = b.difference(&a).copied().take(5).collect();
        return Err(Error::invalid(format!(
            "query sets differ: {} only in the first run (e.g. {only_a:?}), {} only in the second (e.g. {only_b:?})",
            a.difference(&b).count(),
            b.difference(&a).count(),
        )));
    }
    let empty = Judgments::new();
    Ok(a.into_iter()
        .map(|q| {
            let judged = qrels.get(q).unwrap_or(&empty);
            let ndcg = |run: &RunFile| ndcg_at_k(run.get(q).expect("query present").ids(), judged, k);
            (q.to_string(), ndcg(full) - ndcg(baseline))
        })
        .collect())
}

/// Features, gains and the fitted model for a set of queries.
#[derive(Debug, Clone, PartialEq)]
pub struct GainAnalysis {
    pub features: Vec<QueryFeatures>,
    pub gains: Vec<f64>,
    pub normalized: Vec<Vec<f64>>,
    pub regression: RegressionResult,
}

impl GainAnalysis {
    pub fn features_csv(&self) -> String {
        let mut out = String::from("query_id,");
        out.push_str(&FEATURE_NAMES.join(","));
        out.push_str(",gain,degenerate\n");
        for (f, g) in self.features.iter().zip(&self.gains) {
            let _ = write!(out, "{}", f.query_id);
            for v in f.values() {
                let _ = write!(out, ",{v:.6}");
            }
            let _ = writeln!(out, ",{g:.6},{}", f.degenerate);
        }
        out
    }

    pub fn coefficients_csv(&self) -> String {
        self.regression.to_csv(&FEATURE_NAMES)
    }
}

/// Extracts features from full-mode traces, computes gains against the
/// retrieval-only run, min-max normalizes and regresses.
pub fn analyze_gains(
    full_traces: &[LaderTrace],
    dr_only: &RunFile,
    queries: &[Query],
    rel: &Rel,
    qrels: &Qrels,
    default_group: Group,
) -> Result<GainAnalysis> {
    let full = RunFile::from_traces(full_traces);
    let gains_by_query = gain_vector(&full, dr_only, qrels, 10)?;
    let by_id: HashMap<&str, &Query> = queries.iter().map(|q| (q.id.as_str(), q)).collect();
    let mut features = Vec::with_capacity(full_traces.len());
    let mut gains = Vec::with_capacity(full_traces.len());
    let mut ordered: Vec<&LaderTrace> = full_traces.iter().collect();
    ordered.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    for t in ordered {
        let q = by_id
            .get(t.query_id.as_str())
            .ok_or_else(|| Error::invalid(format!("no query text for `{}`", t.query_id)))?;
        features.push(extract_features(t, q, rel, default_group)?);
        gains.push(gains_by_query[&t.query_id]);
    }
    let raw: Vec<Vec<f64>> = features.iter().map(|f| f.values().to_vec()).collect();
    let normalized = minmax_normalize(&raw)?;
    let regression = fit_linear_regression(&normalized, &gains)?;
    Ok(GainAnalysis {
        features,
        gains,
        normalized,
        regression,
    })
}

/// Pipeline pieces a log-proportion sweep re-runs for every proportion.
pub struct SweepInputs<'a, R: DocRetriever + ?Sized> {
    pub log: &'a ClickLog,
    /// Embeddings of (at least) every logged query.
    pub log_query_embeddings: &'a EmbeddingMatrix,
    pub documents: &'a R,
    pub queries: &'a [QueryInput<'a>],
    pub config_for: &'a (dyn Fn(&str) -> FusionConfig + Sync),
    pub qrels: &'a Qrels,
    pub groups: &'a HashMap<String, Group>,
    pub k_out: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub proportion: f64,
    pub log_queries: usize,
    pub metrics: MetricTable,
}

/// Runs the full pipeline on a seeded sample of the log for each proportion.
pub fn sweep<R: DocRetriever + ?Sized>(
    proportions: &[f64],
    seed: u64,
    inputs: &SweepInputs<'_, R>,
) -> Result<Vec<SweepRow>> {
    proportions
        .iter()
        .map(|&p| {
            let sample = subsample_queries(inputs.log, p, seed)?;
            let index = FlatIndex::new(inputs.log_query_embeddings.select(sample.query_ids()));
            let rel = sample.rel();
            let lader = Lader::new(&index, inputs.documents, &rel);
            let traces = lader.run(inputs.queries, inputs.config_for, inputs.k_out)?;
            Ok(SweepRow {
                proportion: p,
                log_queries: index.len(),
                metrics: evaluate(&RunFile::from_traces(&traces), inputs.qrels, inputs.groups),
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("proportion,log_queries,group,metric,value,n_queries\n");
    for row in rows {
        for m in &row.metrics.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{}",
                row.proportion,
                row.log_queries,
                m.group,
                m.metric.name(),
                m.value,
                m.n_queries
            );
        }
    }
    out
}
