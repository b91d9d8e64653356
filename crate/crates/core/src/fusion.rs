//! Log-augmented scoring.
//!
//! For an incoming query the retriever fetches the top-`m` most similar
//! logged queries and the top-`n` most similar documents, turns both score
//! lists into probability distributions with a softmax, and scores each
//! candidate document as
//!
//! ```text
//! score(d) = Σ_j s̃_d[j]·[d = d_j]  +  λ · Σ_i s̃_q[i]·[d ∈ Rel(q_i)]
//! ```
//!
//! The candidate set is the top-`n` documents plus every document clicked for
//! one of the `m` similar queries. [`FusionMode::DrOnly`] zeroes the second
//! sum and [`FusionMode::LaOnly`] zeroes the first and keeps only clicked
//! candidates.

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;

use crate::corpus::{Group, Rel};
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::index::{FlatIndex, ScoredList};
use crate::lexical::InvertedIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FusionMode {
    /// Dense (or lexical) scores plus log augmentation.
    Full,
    /// Log-augmentation scores set to zero.
    DrOnly,
    /// Retrieval scores set to zero; only clicked candidates survive.
    LaOnly,
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(FusionMode::Full),
            "dr-only" | "dr_only" => Ok(FusionMode::DrOnly),
            "la-only" | "la_only" => Ok(FusionMode::LaOnly),
            other => Err(Error::arg(format!("unknown fusion mode `{other}`"))),
        }
    }
}

/// Interpolation weight used for each query group unless overridden.
pub fn default_lambda(group: Group) -> f64 {
    match group {
        Group::Head | Group::Torso => 0.5,
        Group::Tail => 0.2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Number of similar logged queries.
    pub m: usize,
    /// Number of similar documents.
    pub n: usize,
    pub lambda: f64,
    pub mode: FusionMode,
    /// Drop the input query from its own neighbour list when it is itself logged.
    pub exclude_self: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            m: 1000,
            n: 1000,
            lambda: 0.5,
            mode: FusionMode::Full,
            exclude_self: true,
        }
    }
}

impl FusionConfig {
    pub fn for_group(group: Group) -> Self {
        Self {
            lambda: default_lambda(group),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::arg("m and n must be at least 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::arg(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::arg("softmax of an empty vector"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::arg("softmax input must be finite"));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

fn normalize(list: &ScoredList) -> ScoredList {
    if list.is_empty() {
        return ScoredList::new();
    }
    let probs = softmax(&list.scores().collect::<Vec<_>>()).expect("retrieval scores are finite");
    // softmax is monotone, so rank order (including ties) is preserved
    ScoredList::from_unsorted(list.ids().map(str::to_string).zip(probs).collect())
}

/// The two additive parts of a candidate's final score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreComponents {
    pub doc_id: String,
    /// `Σ_j s̃_d[j]·[d = d_j]`
    pub retrieval: f64,
    /// `λ · Σ_i s̃_q[i]·[d ∈ Rel(q_i)]`, before any ablation is applied.
    pub log: f64,
    /// Whether some similar query clicked this document.
    pub in_rel: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaderTrace {
    pub query_id: String,
    /// Similar logged queries with softmax-normalized similarities.
    pub similar_queries: ScoredList,
    /// Similar documents with softmax-normalized similarities.
    pub similar_docs: ScoredList,
    pub final_ranking: ScoredList,
    /// Candidate components, ascending by document id.
    pub components: Vec<ScoreComponents>,
    /// Clicked documents absent from the collection, skipped during scoring.
    pub skipped_rel_docs: usize,
}

/// Combines raw similar-query and similar-document lists into a final ranking.
///
/// Inputs are raw similarity scores; they are truncated to `m` and `n`
/// entries and softmax-normalized here. Clicked documents for which
/// `known_doc` returns false are skipped and counted.
pub fn fuse(
    query_id: &str,
    similar_queries: &ScoredList,
    similar_docs: &ScoredList,
    rel: &Rel,
    known_doc: impl Fn(&str) -> bool,
    cfg: &FusionConfig,
) -> Result<LaderTrace> {
    cfg.validate()?;
    let mut queries = similar_queries.clone();
    queries.truncate(cfg.m);
    let mut docs = similar_docs.clone();
    docs.truncate(cfg.n);
    let queries = normalize(&queries);
    let docs = normalize(&docs);

    let mut parts: BTreeMap<&str, ScoreComponents> = BTreeMap::new();
    for (d, s) in docs.iter() {
        parts.insert(
            d,
            ScoreComponents {
                doc_id: d.to_string(),
                retrieval: s,
                log: 0.0,
                in_rel: false,
            },
        );
    }
    let mut skipped = 0usize;
    for (q, s) in queries.iter() {
        for d in rel.get(q) {
            if !known_doc(d) {
                skipped += 1;
                continue;
            }
            let entry = parts.entry(d.as_str()).or_insert_with(|| ScoreComponents {
                doc_id: d.clone(),
                retrieval: 0.0,
                log: 0.0,
                in_rel: false,
            });
            entry.log += cfg.lambda * s;
            entry.in_rel = true;
        }
    }
    if skipped > 0 {
        warn!("query {query_id}: skipped {skipped} clicked documents missing from the collection");
    }

    let components: Vec<ScoreComponents> = parts.into_values().collect();
    let final_scores = components
        .iter()
        .filter_map(|c| match cfg.mode {
            FusionMode::Full => Some(c.retrieval + c.log),
            FusionMode::DrOnly => Some(c.retrieval),
            FusionMode::LaOnly => c.in_rel.then_some(c.log),
        }
        .map(|s| (c.doc_id.clone(), s)))
        .collect();

    Ok(LaderTrace {
        query_id: query_id.to_string(),
        similar_queries: queries,
        similar_docs: docs,
        final_ranking: ScoredList::from_unsorted(final_scores),
        components,
        skipped_rel_docs: skipped,
    })
}

/// Everything a document retriever may need about the incoming query.
#[derive(Debug, Clone, Copy)]
pub struct QueryInput<'a> {
    pub id: &'a str,
    pub text: &'a str,
    pub vector: &'a [f32],
}

/// Produces the top-`n` document list that log evidence is fused with.
pub trait DocRetriever: Sync {
    fn retrieve(&self, query: &QueryInput<'_>, n: usize) -> Result<ScoredList>;

    fn contains(&self, doc_id: &str) -> bool;
}

impl DocRetriever for FlatIndex {
    fn retrieve(&self, query: &QueryInput<'_>, n: usize) -> Result<ScoredList> {
        self.search(query.vector, n)
    }

    fn contains(&self, doc_id: &str) -> bool {
        FlatIndex::contains(self, doc_id)
    }
}

impl DocRetriever for InvertedIndex {
    fn retrieve(&self, query: &QueryInput<'_>, n: usize) -> Result<ScoredList> {
        self.search(query.text, n)
    }

    fn contains(&self, doc_id: &str) -> bool {
        self.row_of(doc_id).is_some()
    }
}

/// A log-augmented retriever: dense query-to-query search over the log plus
/// any document retriever.
pub struct Lader<'a, R: DocRetriever + ?Sized> {
    pub query_index: &'a FlatIndex,
    pub documents: &'a R,
    pub rel: &'a Rel,
}

impl<R: DocRetriever + ?Sized> Clone for Lader<'_, R> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<R: DocRetriever + ?Sized> Copy for Lader<'_, R> {}

impl<'a, R: DocRetriever + ?Sized> Lader<'a, R> {
    pub fn new(query_index: &'a FlatIndex, documents: &'a R, rel: &'a Rel) -> Self {
        Self {
            query_index,
            documents,
            rel,
        }
    }

    fn similar_queries(&self, query: &QueryInput<'_>, cfg: &FusionConfig) -> Result<ScoredList> {
        if query.vector.len() != self.query_index.dim() {
            return Err(Error::arg(format!(
                "query has dim {}, log index has dim {}",
                query.vector.len(),
                self.query_index.dim()
            )));
        }
        if self.query_index.is_empty() {
            return Ok(ScoredList::new());
        }
        let is_self = cfg.exclude_self
            && self.query_index.matrix().get(query.id) == Some(query.vector);
        if !is_self {
            return self.query_index.search(query.vector, cfg.m);
        }
        let mut list = self.query_index.search(query.vector, cfg.m + 1)?;
        list.retain(|(id, _)| id != query.id);
        list.truncate(cfg.m);
        Ok(list)
    }

    pub fn score(&self, query: &QueryInput<'_>, cfg: &FusionConfig) -> Result<LaderTrace> {
        cfg.validate()?;
        let queries = self.similar_queries(query, cfg)?;
        let docs = self.documents.retrieve(query, cfg.n)?;
        fuse(query.id, &queries, &docs, self.rel, |d| self.documents.contains(d), cfg)
    }

    /// Scores every query, truncating final rankings to `k_out`. Output order
    /// matches input order; queries are processed in parallel.
    pub fn run<F>(&self, queries: &[QueryInput<'_>], config_for: F, k_out: usize) -> Result<Vec<LaderTrace>>
    where
        F: Fn(&str) -> FusionConfig + Sync,
    {
        if k_out == 0 {
            return Err(Error::arg("k_out must be at least 1"));
        }
        queries
            .par_iter()
            .map(|q| {
                let mut trace = self.score(q, &config_for(q.id))?;
                trace.final_ranking.truncate(k_out);
                Ok(trace)
            })
            .collect()
    }
}

/// Scores one query vector against dense query and document indexes.
pub fn lader_score(
    query_id: &str,
    query_vec: &[f32],
    q_index: &FlatIndex,
    d_index: &FlatIndex,
    rel: &Rel,
    cfg: &FusionConfig,
) -> Result<LaderTrace> {
    if query_vec.len() != d_index.dim() {
        return Err(Error::arg(format!(
            "query has dim {}, document index has dim {}",
            query_vec.len(),
            d_index.dim()
        )));
    }
    let input = QueryInput {
        id: query_id,
        text: "",
        vector: query_vec,
    };
    Lader::new(q_index, d_index, rel).score(&input, cfg)
}

/// Runs [`lader_score`] for every row of `queries` with one configuration.
pub fn run_queries(
    queries: &EmbeddingMatrix,
    q_index: &FlatIndex,
    d_index: &FlatIndex,
    rel: &Rel,
    cfg: &FusionConfig,
    k_out: usize,
) -> Result<Vec<LaderTrace>> {
    if queries.dim() != d_index.dim() {
        return Err(Error::arg(format!(
            "queries have dim {}, document index has dim {}",
            queries.dim(),
            d_index.dim()
        )));
    }
    let inputs: Vec<QueryInput<'_>> = queries
        .rows()
        .map(|(id, vector)| QueryInput { id, text: "", vector })
        .collect();
    Lader::new(q_index, d_index, rel).run(&inputs, |_| *cfg, k_out)
}

/// Per-query configuration: one base config with λ chosen by query group.
#[derive(Debug, Clone)]
pub struct GroupLambdas {
    pub base: FusionConfig,
    pub lambdas: HashMap<Group, f64>,
    pub groups: HashMap<String, Group>,
    pub default_group: Group,
}

impl GroupLambdas {
    pub fn new(base: FusionConfig, groups: HashMap<String, Group>) -> Self {
        Self {
            base,
            lambdas: Group::ALL.iter().map(|&g| (g, default_lambda(g))).collect(),
            groups,
            default_group: Group::Tail,
        }
    }

    pub fn config_for(&self, query_id: &str) -> FusionConfig {
        let group = self.groups.get(query_id).copied().unwrap_or(self.default_group);
        FusionConfig {
            lambda: self.lambdas[&group],
            ..self.base
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(pairs: &[(&str, f64)]) -> ScoredList {
        ScoredList::from_unsorted(pairs.iter().map(|(i, s)| (i.to_string(), *s)).collect())
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[3.0; 4]).unwrap(), vec![0.25; 4]);
        assert_eq!(softmax(&[7.5]).unwrap(), vec![1.0]);
        let p = softmax(&[1.0, 2.0, 3.0]).unwrap();
        for (got, want) in p.iter().zip([0.09003, 0.24473, 0.66524]) {
            assert!((got - want).abs() < 1e-4);
        }
        assert!(softmax(&[]).is_err());
        assert!(softmax(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn softmax_survives_large_scores() {
        let p = softmax(&[1000.0, 999.0]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > p[1]);
    }

    /// Raw scores whose softmax is exactly the target probabilities.
    fn raw_for(probs: &[(&str, f64)]) -> ScoredList {
        list(&probs.iter().map(|(i, p)| (*i, p.ln())).collect::<Vec<_>>())
    }

    fn worked_example(mode: FusionMode, lambda: f64) -> LaderTrace {
        let rel: Rel = [("q1", vec!["d2", "d3"]), ("q2", vec!["d3"])].into_iter().collect();
        let cfg = FusionConfig {
            lambda,
            mode,
            ..FusionConfig::default()
        };
        fuse(
            "q",
            &raw_for(&[("q1", 0.7), ("q2", 0.3)]),
            &raw_for(&[("d1", 0.6), ("d2", 0.4)]),
            &rel,
            |_| true,
            &cfg,
        )
        .unwrap()
    }

    #[test]
    fn hand_worked_fusion() {
        let t = worked_example(FusionMode::Full, 0.5);
        let got: Vec<(&str, f64)> = t.final_ranking.iter().collect();
        let want = [("d2", 0.75), ("d1", 0.60), ("d3", 0.50)];
        assert_eq!(got.len(), 3);
        for ((gi, gs), (wi, ws)) in got.iter().zip(want) {
            assert_eq!(*gi, wi);
            assert!((gs - ws).abs() < 1e-12, "{gi}: {gs} vs {ws}");
        }
    }

    #[test]
    fn zero_lambda_matches_dr_only() {
        let full = worked_example(FusionMode::Full, 0.0);
        let dr = worked_example(FusionMode::DrOnly, 0.5);
        assert_eq!(full.final_ranking, dr.final_ranking);
    }

    #[test]
    fn la_only_keeps_clicked_candidates() {
        let t = worked_example(FusionMode::LaOnly, 0.5);
        let ids: Vec<&str> = t.final_ranking.ids().collect();
        assert_eq!(ids, ["d3", "d2"]);
        let d3 = t.final_ranking.iter().find(|(i, _)| *i == "d3").unwrap().1;
        assert!((d3 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_log_with_la_only_is_empty() {
        let cfg = FusionConfig {
            mode: FusionMode::LaOnly,
            ..FusionConfig::default()
        };
        let t = fuse("q", &ScoredList::new(), &raw_for(&[("d1", 1.0)]), &Rel::default(), |_| true, &cfg)
            .unwrap();
        assert!(t.final_ranking.is_empty());
        assert!(t.similar_queries.is_empty());
    }

    #[test]
    fn unknown_rel_docs_are_counted_not_scored() {
        let rel: Rel = [("q1", vec!["gone", "d1"])].into_iter().collect();
        let t = fuse(
            "q",
            &raw_for(&[("q1", 1.0)]),
            &raw_for(&[("d1", 1.0)]),
            &rel,
            |d| d != "gone",
            &FusionConfig::default(),
        )
        .unwrap();
        assert_eq!(t.skipped_rel_docs, 1);
        assert_eq!(t.final_ranking.ids().collect::<Vec<_>>(), ["d1"]);
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = FusionConfig {
            lambda: -1.0,
            ..FusionConfig::default()
        };
        assert!(fuse("q", &ScoredList::new(), &ScoredList::new(), &Rel::default(), |_| true, &bad).is_err());
        let bad = FusionConfig { m: 0, ..FusionConfig::default() };
        assert!(bad.validate().is_err());
    }

    fn small_engine() -> (FlatIndex, FlatIndex, Rel) {
        let q = EmbeddingMatrix::from_rows(
            2,
            vec![("q1", vec![1.0, 0.0]), ("q2", vec![0.0, 1.0]), ("q3", vec![0.7, 0.7])],
        )
        .unwrap();
        let d = EmbeddingMatrix::from_rows(
            2,
            vec![("d1", vec![1.0, 0.1]), ("d2", vec![0.1, 1.0]), ("d3", vec![0.5, 0.5])],
        )
        .unwrap();
        let rel: Rel = [("q1", vec!["d3"]), ("q2", vec!["d2"]), ("q3", vec!["d1"])]
            .into_iter()
            .collect();
        (FlatIndex::new(q), FlatIndex::new(d), rel)
    }

    #[test]
    fn self_match_is_excluded() {
        let (qi, di, rel) = small_engine();
        let t = lader_score("q1", &[1.0, 0.0], &qi, &di, &rel, &FusionConfig::default()).unwrap();
        assert!(t.similar_queries.ids().all(|q| q != "q1"));
        assert_eq!(t.similar_queries.len(), 2);
        let sum: f64 = t.similar_queries.scores().sum();
        assert!((sum - 1.0).abs() < 1e-9);

        let keep = FusionConfig {
            exclude_self: false,
            ..FusionConfig::default()
        };
        let t = lader_score("q1", &[1.0, 0.0], &qi, &di, &rel, &keep).unwrap();
        assert_eq!(t.similar_queries.len(), 3);

        // same id with a different vector is not treated as self
        let t = lader_score("q1", &[0.9, 0.0], &qi, &di, &rel, &FusionConfig::default()).unwrap();
        assert_eq!(t.similar_queries.len(), 3);
    }

    #[test]
    fn dim_mismatch_is_argument_error() {
        let (qi, di, rel) = small_engine();
        assert!(matches!(
            lader_score("x", &[1.0, 0.0, 0.0], &qi, &di, &rel, &FusionConfig::default()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn run_truncates_and_preserves_order() {
        let (qi, di, rel) = small_engine();
        let queries = EmbeddingMatrix::from_rows(
            2,
            vec![("t2", vec![0.0, 1.0]), ("t1", vec![1.0, 0.2])],
        )
        .unwrap();
        let traces = run_queries(&queries, &qi, &di, &rel, &FusionConfig::default(), 10).unwrap();
        assert_eq!(traces.iter().map(|t| t.query_id.as_str()).collect::<Vec<_>>(), ["t2", "t1"]);
        assert_eq!(traces[0].final_ranking.len(), 3);
        let short = run_queries(&queries, &qi, &di, &rel, &FusionConfig::default(), 1).unwrap();
        assert!(short.iter().all(|t| t.final_ranking.len() == 1));
    }

    #[test]
    fn group_lambdas() {
        let groups: HashMap<String, Group> =
            [("h".to_string(), Group::Head), ("t".to_string(), Group::Tail)].into_iter().collect();
        let policy = GroupLambdas::new(FusionConfig::default(), groups);
        assert_eq!(policy.config_for("h").lambda, 0.5);
        assert_eq!(policy.config_for("t").lambda, 0.2);
        assert_eq!(policy.config_for("unknown").lambda, 0.2);
    }
}
