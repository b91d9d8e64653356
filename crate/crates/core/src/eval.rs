//! Relevance judgments, TREC run files and ranking metrics.
//!
//! Qrels come from click logs in two flavours: RAW (any click → grade 1) and
//! DCTR (clicks / impressions). Metrics treat a document as relevant when its
//! grade is strictly positive; zero-grade judgments are kept in the qrels but
//! contribute nothing.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::corpus::{read_text, write_text, ClickLog, Group};
use crate::error::{Error, Result};
use crate::fusion::LaderTrace;
use crate::index::ScoredList;

pub type Judgments = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Qrels {
    judgments: BTreeMap<String, Judgments>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: f64) -> Result<()> {
        if !(grade.is_finite() && grade >= 0.0) {
            return Err(Error::invalid(format!(
                "grade for ({query_id}, {doc_id}) must be finite and >= 0, got {grade}"
            )));
        }
        self.judgments
            .entry(query_id.to_string())
            .or_default()
            .insert(doc_id.to_string(), grade);
        Ok(())
    }

    pub fn get(&self, query_id: &str) -> Option<&Judgments> {
        self.judgments.get(query_id)
    }

    pub fn contains_query(&self, query_id: &str) -> bool {
        self.judgments.contains_key(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn num_queries(&self) -> usize {
        self.judgments.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Judgments)> {
        self.judgments.iter().map(|(q, j)| (q.as_str(), j))
    }

    /// Keeps only the listed queries.
    pub fn restrict_to<'a, I: IntoIterator<Item = &'a str>>(&self, query_ids: I) -> Qrels {
        let keep: BTreeSet<&str> = query_ids.into_iter().collect();
        Qrels {
            judgments: self
                .judgments
                .iter()
                .filter(|(q, _)| keep.contains(q.as_str()))
                .map(|(q, j)| (q.clone(), j.clone()))
                .collect(),
        }
    }

    /// TREC qrels text: `query_id 0 doc_id grade`.
    pub fn to_trec(&self) -> String {
        let mut out = String::new();
        for (q, docs) in &self.judgments {
            for (d, g) in docs {
                let _ = writeln!(out, "{q} 0 {d} {g}");
            }
        }
        out
    }

    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut qrels = Qrels::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::parse(path, i + 1, "expected `query_id 0 doc_id grade`"));
            }
            let grade: f64 = fields[3]
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad grade `{}`", fields[3])))?;
            qrels
                .insert(fields[0], fields[2], grade)
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        }
        Ok(qrels)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&read_text(path)?, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_trec())
    }
}

/// Grade 1 for every clicked document.
pub fn build_raw_qrels(log: &ClickLog) -> Qrels {
    let mut qrels = Qrels::new();
    for r in log.records().filter(|r| r.clicks >= 1) {
        qrels.insert(&r.query_id, &r.doc_id, 1.0).expect("grade 1 is valid");
    }
    qrels
}

/// Grade = clicks / impressions; zero-click documents are kept with grade 0.
pub fn build_dctr_qrels(log: &ClickLog) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for r in log.records() {
        if r.impressions == 0 {
            return Err(Error::invalid(format!(
                "({}, {}) has zero impressions",
                r.query_id, r.doc_id
            )));
        }
        qrels.insert(&r.query_id, &r.doc_id, r.clicks as f64 / r.impressions as f64)?;
    }
    Ok(qrels)
}

/// Ranked results per query.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunFile {
    pub rankings: BTreeMap<String, ScoredList>,
}

impl RunFile {
    pub fn from_traces(traces: &[LaderTrace]) -> Self {
        Self {
            rankings: traces
                .iter()
                .map(|t| (t.query_id.clone(), t.final_ranking.clone()))
                .collect(),
        }
    }

    pub fn get(&self, query_id: &str) -> Option<&ScoredList> {
        self.rankings.get(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.rankings.keys().map(String::as_str)
    }

    /// `query_id Q0 doc_id rank score tag`, ranks from 1, six-decimal scores.
    pub fn to_trec(&self, tag: &str) -> String {
        let mut out = String::new();
        for (q, list) in &self.rankings {
            for (rank, (d, s)) in list.iter().enumerate() {
                let _ = writeln!(out, "{q} Q0 {d} {} {s:.6} {tag}", rank + 1);
            }
        }
        out
    }

    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut by_query: BTreeMap<String, Vec<(usize, String, f64, usize)>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 1;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected 6 columns `qid Q0 doc rank score tag`, found {}", f.len()),
                ));
            }
            let rank: usize = f[3]
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad rank `{}`", f[3])))?;
            let score: f64 = f[4]
                .parse()
                .ok()
                .filter(|s: &f64| s.is_finite())
                .ok_or_else(|| Error::parse(path, lineno, format!("bad score `{}`", f[4])))?;
            by_query
                .entry(f[0].to_string())
                .or_default()
                .push((rank, f[2].to_string(), score, lineno));
        }
        let mut rankings = BTreeMap::new();
        for (q, mut rows) in by_query {
            rows.sort_by_key(|r| r.0);
            let mut seen = BTreeSet::new();
            for (expected, (rank, doc, _, lineno)) in rows.iter().enumerate() {
                if *rank != expected + 1 {
                    return Err(Error::parse(
                        path,
                        *lineno,
                        format!("query {q}: ranks must run 1..n contiguously, found {rank}"),
                    ));
                }
                if !seen.insert(doc.as_str()) {
                    return Err(Error::parse(path, *lineno, format!("query {q}: document {doc} repeated")));
                }
            }
            // keep file order (by rank) even if rounded scores tie
            let list = ScoredList::from_ranked(rows.into_iter().map(|(_, d, s, _)| (d, s)).collect());
            rankings.insert(q, list);
        }
        Ok(Self { rankings })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&read_text(path)?, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>, tag: &str) -> Result<()> {
        write_text(path.as_ref(), &self.to_trec(tag))
    }
}

/// Gain applied to a grade inside DCG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Gain {
    /// `grade`
    #[default]
    Linear,
    /// `2^grade − 1`
    Exponential,
}

impl FromStr for Gain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Gain::Linear),
            "exponential" | "exp" => Ok(Gain::Exponential),
            _ => Err(Error::arg(format!("unknown gain `{s}`, expected linear or exponential"))),
        }
    }
}

impl Gain {
    fn apply(self, grade: f64) -> f64 {
        match self {
            Gain::Linear => grade,
            Gain::Exponential => grade.exp2() - 1.0,
        }
    }
}

fn grade_of(judged: &Judgments, doc: &str) -> f64 {
    judged.get(doc).copied().unwrap_or(0.0)
}

pub fn ndcg_at_k_with<'a, I>(ranked: I, judged: &Judgments, k: usize, gain: Gain) -> f64
where
    I: IntoIterator<Item = &'a str>,
{
    let discount = |i: usize| ((i + 2) as f64).log2();
    let dcg: f64 = ranked
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain.apply(grade_of(judged, d)) / discount(i))
        .sum();
    let mut ideal: Vec<f64> = judged.values().copied().filter(|&g| g > 0.0).collect();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain.apply(g) / discount(i))
        .sum();
    if idcg > 0.0 {
        dcg / idcg
    } else {
        0.0
    }
}

/// NDCG@k with linear gain `grade / log2(rank + 1)`.
pub fn ndcg_at_k<'a, I>(ranked: I, judged: &Judgments, k: usize) -> f64
where
    I: IntoIterator<Item = &'a str>,
{
    ndcg_at_k_with(ranked, judged, k, Gain::Linear)
}

/// Reciprocal rank of the first document with positive grade within `cutoff`.
pub fn mrr<'a, I>(ranked: I, judged: &Judgments, cutoff: Option<usize>) -> f64
where
    I: IntoIterator<Item = &'a str>,
{
    ranked
        .into_iter()
        .take(cutoff.unwrap_or(usize::MAX))
        .position(|d| grade_of(judged, d) > 0.0)
        .map_or(0.0, |p| 1.0 / (p + 1) as f64)
}

/// Share of positively graded documents found in the top k; `None` when the
/// query has no relevant documents.
pub fn recall_at_k<'a, I>(ranked: I, judged: &Judgments, k: usize) -> Option<f64>
where
    I: IntoIterator<Item = &'a str>,
{
    let relevant = judged.values().filter(|&&g| g > 0.0).count();
    if relevant == 0 {
        return None;
    }
    let hits = ranked
        .into_iter()
        .take(k)
        .filter(|d| grade_of(judged, d) > 0.0)
        .count();
    Some(hits as f64 / relevant as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Ndcg10,
    Mrr,
    Mrr10,
    Recall10,
    Recall1000,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Ndcg10,
        Metric::Mrr,
        Metric::Mrr10,
        Metric::Recall10,
        Metric::Recall1000,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ndcg10 => "ndcg@10",
            Metric::Mrr => "mrr",
            Metric::Mrr10 => "mrr@10",
            Metric::Recall10 => "recall@10",
            Metric::Recall1000 => "recall@1000",
        }
    }

    /// Value for one query; `None` means the query is skipped for this metric.
    pub fn compute(self, ranked: &ScoredList, judged: &Judgments) -> Option<f64> {
        self.compute_with(ranked, judged, Gain::Linear)
    }

    /// Like [`compute`](Self::compute); `gain` only affects NDCG.
    pub fn compute_with(self, ranked: &ScoredList, judged: &Judgments, gain: Gain) -> Option<f64> {
        match self {
            Metric::Ndcg10 => Some(ndcg_at_k_with(ranked.ids(), judged, 10, gain)),
            Metric::Mrr => Some(mrr(ranked.ids(), judged, None)),
            Metric::Mrr10 => Some(mrr(ranked.ids(), judged, Some(10))),
            Metric::Recall10 => recall_at_k(ranked.ids(), judged, 10),
            Metric::Recall1000 => recall_at_k(ranked.ids(), judged, 1000),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::arg(format!("unknown metric `{s}`")))
    }
}

pub const ALL_GROUPS: &str = "ALL";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    /// `ALL` or a query group name.
    pub group: String,
    pub metric: Metric,
    pub value: f64,
    pub n_queries: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
    /// Run queries with no judgments; reported and skipped.
    pub unjudged: Vec<String>,
}

impl MetricTable {
    pub fn get(&self, group: &str, metric: Metric) -> Option<f64> {
        self.row(group, metric).map(|r| r.value)
    }

    pub fn row(&self, group: &str, metric: Metric) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.group == group && r.metric == metric)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,metric,value,n_queries\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:.6},{}", r.group, r.metric.name(), r.value, r.n_queries);
        }
        out
    }
}

/// Means of every [`Metric`], overall and per query group.
///
/// The evaluated topic set is every judged query that appears in the run or
/// in `groups`; a topic with no run entry is scored as an empty ranking.
/// Queries missing from `groups` count only toward `ALL`.
pub fn evaluate(run: &RunFile, qrels: &Qrels, groups: &HashMap<String, Group>) -> MetricTable {
    evaluate_with(run, qrels, groups, Gain::Linear)
}

pub fn evaluate_with(run: &RunFile, qrels: &Qrels, groups: &HashMap<String, Group>, gain: Gain) -> MetricTable {
    let unjudged: Vec<String> = run
        .query_ids()
        .filter(|q| !qrels.contains_query(q))
        .map(str::to_string)
        .collect();
    let topics: BTreeSet<&str> = run
        .query_ids()
        .chain(groups.keys().map(String::as_str))
        .filter(|q| qrels.contains_query(q))
        .collect();

    let empty = ScoredList::new();
    // (group label, metric) → (sum, count)
    let mut sums: BTreeMap<(u8, Metric), (f64, usize)> = BTreeMap::new();
    for q in &topics {
        let ranked = run.get(q).unwrap_or(&empty);
        let judged = qrels.get(q).expect("topic is judged");
        let mut labels = vec![0u8];
        if let Some(g) = groups.get(*q) {
            labels.push(1 + *g as u8);
        }
        for m in Metric::ALL {
            if let Some(v) = m.compute_with(ranked, judged, gain) {
                for &l in &labels {
                    let e = sums.entry((l, m)).or_insert((0.0, 0));
                    e.0 += v;
                    e.1 += 1;
                }
            }
        }
    }
    let label_name = |l: u8| match l {
        0 => ALL_GROUPS.to_string(),
        g => Group::ALL[(g - 1) as usize].to_string(),
    };
    let present: BTreeSet<u8> = sums.keys().map(|(l, _)| *l).collect();
    let mut rows = Vec::new();
    for l in present {
        for m in Metric::ALL {
            let (sum, n) = sums.get(&(l, m)).copied().unwrap_or((0.0, 0));
            rows.push(MetricRow {
                group: label_name(l),
                metric: m,
                value: if n > 0 { sum / n as f64 } else { 0.0 },
                n_queries: n,
            });
        }
    }
    MetricTable { rows, unjudged }
}
