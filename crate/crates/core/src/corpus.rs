//! Documents, queries, click logs and training triples.
//!
//! All text inputs are UTF-8. Documents are JSON lines; everything else is
//! tab-separated with one record per line. Loaders reject malformed lines
//! with the 1-based line number, and the resulting collections are immutable
//! values that can be shared freely between threads.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    #[serde(default, rename = "abstract")]
    pub abstract_text: String,
}

impl Document {
    /// Text used by the lexical retriever: title and abstract joined by one space.
    pub fn text(&self) -> String {
        if self.abstract_text.is_empty() {
            self.title.clone()
        } else {
            format!("{} {}", self.title, self.abstract_text)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    pub text: String,
    /// Occurrence count in the search log, when known.
    pub frequency: Option<u64>,
}

impl Query {
    pub fn group_or(&self, default: Group) -> Group {
        self.frequency.map(group_of).unwrap_or(default)
    }
}

/// Query frequency bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    Head,
    Torso,
    Tail,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Head, Group::Torso, Group::Tail];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Head => "HEAD",
            Group::Torso => "TORSO",
            Group::Tail => "TAIL",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "HEAD" => Ok(Group::Head),
            "TORSO" => Ok(Group::Torso),
            "TAIL" => Ok(Group::Tail),
            other => Err(Error::arg(format!("unknown query group `{other}`"))),
        }
    }
}

/// HEAD above 44 occurrences, TORSO from 6 to 44, TAIL below 6.
pub fn group_of(frequency: u64) -> Group {
    match frequency {
        45.. => Group::Head,
        6..=44 => Group::Torso,
        _ => Group::Tail,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClickCounts {
    pub clicks: u64,
    pub impressions: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClickRecord {
    pub query_id: String,
    pub doc_id: String,
    pub clicks: u64,
    pub impressions: u64,
}

/// Aggregated click log keyed by query, then document.
///
/// Records with the same `(query, doc)` pair are summed on insertion, so the
/// final log does not depend on input row order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClickLog {
    records: BTreeMap<String, BTreeMap<String, ClickCounts>>,
}

impl ClickLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Aggregates records and validates the result.
    pub fn from_records<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = ClickRecord>,
    {
        let mut log = ClickLog::new();
        for r in records {
            log.add(r)?;
        }
        log.validate()?;
        Ok(log)
    }

    fn add(&mut self, r: ClickRecord) -> Result<()> {
        if r.impressions == 0 {
            return Err(Error::invalid(format!(
                "({}, {}) has zero impressions",
                r.query_id, r.doc_id
            )));
        }
        let entry = self
            .records
            .entry(r.query_id)
            .or_default()
            .entry(r.doc_id)
            .or_default();
        entry.clicks += r.clicks;
        entry.impressions += r.impressions;
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        for (q, docs) in &self.records {
            for (d, c) in docs {
                if c.clicks > c.impressions {
                    return Err(Error::invalid(format!(
                        "({q}, {d}) has {} clicks but only {} impressions",
                        c.clicks, c.impressions
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_queries(&self) -> usize {
        self.records.len()
    }

    pub fn num_records(&self) -> usize {
        self.records.values().map(BTreeMap::len).sum()
    }

    /// Query ids in ascending order.
    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    pub fn contains_query(&self, query_id: &str) -> bool {
        self.records.contains_key(query_id)
    }

    pub fn get(&self, query_id: &str, doc_id: &str) -> Option<ClickCounts> {
        self.records.get(query_id)?.get(doc_id).copied()
    }

    pub fn docs_for(&self, query_id: &str) -> impl Iterator<Item = (&str, ClickCounts)> {
        self.records
            .get(query_id)
            .into_iter()
            .flat_map(|m| m.iter().map(|(d, c)| (d.as_str(), *c)))
    }

    pub fn records(&self) -> impl Iterator<Item = ClickRecord> + '_ {
        self.records.iter().flat_map(|(q, docs)| {
            docs.iter().map(move |(d, c)| ClickRecord {
                query_id: q.clone(),
                doc_id: d.clone(),
                clicks: c.clicks,
                impressions: c.impressions,
            })
        })
    }

    /// Number of distinct records for the query; stands in for the raw log frequency.
    pub fn frequency(&self, query_id: &str) -> u64 {
        self.records.get(query_id).map_or(0, |m| m.len() as u64)
    }

    /// Relevant documents per query: every document with at least one click.
    pub fn rel(&self) -> Rel {
        let map = self
            .records
            .iter()
            .filter_map(|(q, docs)| {
                let clicked: Vec<String> = docs
                    .iter()
                    .filter(|(_, c)| c.clicks >= 1)
                    .map(|(d, _)| d.clone())
                    .collect();
                (!clicked.is_empty()).then(|| (q.clone(), clicked))
            })
            .collect();
        Rel { map }
    }

    /// Keeps only the records of the given queries.
    pub fn restrict_to<'a, I>(&self, query_ids: I) -> ClickLog
    where
        I: IntoIterator<Item = &'a str>,
    {
        let keep: HashSet<&str> = query_ids.into_iter().collect();
        ClickLog {
            records: self
                .records
                .iter()
                .filter(|(q, _)| keep.contains(q.as_str()))
                .map(|(q, d)| (q.clone(), d.clone()))
                .collect(),
        }
    }
}

/// Mapping from a logged query to the documents users clicked for it.
///
/// Document lists are sorted ascending and free of duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Rel {
    map: BTreeMap<String, Vec<String>>,
}

impl Rel {
    pub fn get(&self, query_id: &str) -> &[String] {
        self.map.get(query_id).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.map.iter().map(|(q, d)| (q.as_str(), d.as_slice()))
    }
}

impl<Q, D, I> FromIterator<(Q, I)> for Rel
where
    Q: Into<String>,
    D: Into<String>,
    I: IntoIterator<Item = D>,
{
    fn from_iter<T: IntoIterator<Item = (Q, I)>>(iter: T) -> Self {
        let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (q, docs) in iter {
            let set: BTreeSet<String> = docs.into_iter().map(Into::into).collect();
            if !set.is_empty() {
                map.entry(q.into()).or_default().extend(set);
            }
        }
        for v in map.values_mut() {
            v.sort();
            v.dedup();
        }
        Rel { map }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub query_id: String,
    pub pos_doc_id: String,
    pub neg_doc_id: String,
}

/// Draws `⌊proportion · |queries|⌋` distinct query ids uniformly under `seed`
/// and keeps only their records.
///
/// Samples are nested: for a fixed seed the sample at a smaller proportion is
/// a subset of the sample at a larger one.
pub fn subsample_queries(log: &ClickLog, proportion: f64, seed: u64) -> Result<ClickLog> {
    if !(0.0..=1.0).contains(&proportion) {
        return Err(Error::arg(format!(
            "proportion must lie in [0, 1], got {proportion}"
        )));
    }
    let mut ids: Vec<&str> = log.query_ids().collect();
    let keep = (proportion * ids.len() as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    ids.truncate(keep);
    Ok(log.restrict_to(ids))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Non-empty lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_count(field: &str, path: &str, line: usize, what: &str) -> Result<u64> {
    field
        .trim()
        .parse::<u64>()
        .map_err(|_| Error::parse(path, line, format!("{what} `{field}` is not a non-negative integer")))
}

pub fn parse_documents(text: &str, path: &str) -> Result<Vec<Document>> {
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    for (line, raw) in data_lines(text) {
        let doc: Document = serde_json::from_str(raw)
            .map_err(|e| Error::parse(path, line, format!("bad document record: {e}")))?;
        if doc.id.is_empty() || doc.id.chars().any(char::is_whitespace) {
            return Err(Error::parse(
                path,
                line,
                format!("document id `{}` is empty or contains whitespace", doc.id),
            ));
        }
        if !seen.insert(doc.id.clone()) {
            return Err(Error::invalid(format!(
                "{path}:{line}: duplicate document id `{}`",
                doc.id
            )));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_documents(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    parse_documents(&read_text(path)?, &path.display().to_string())
}

pub fn write_documents(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d).expect("documents serialize"));
        out.push('\n');
    }
    write_text(path.as_ref(), &out)
}

pub fn parse_queries(text: &str, path: &str) -> Result<Vec<Query>> {
    let mut seen = HashSet::new();
    let mut queries = Vec::new();
    for (line, raw) in data_lines(text) {
        let fields: Vec<&str> = raw.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(Error::parse(
                path,
                line,
                format!("expected 2 or 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let id = fields[0].trim();
        let text = fields[1].trim();
        if id.is_empty() || text.is_empty() {
            return Err(Error::parse(path, line, "query id and text must be non-empty"));
        }
        let frequency = match fields.get(2).map(|f| f.trim()) {
            Some(f) if !f.is_empty() => Some(parse_count(f, path, line, "frequency")?),
            _ => None,
        };
        if !seen.insert(id.to_string()) {
            return Err(Error::invalid(format!("{path}:{line}: duplicate query id `{id}`")));
        }
        queries.push(Query {
            id: id.to_string(),
            text: text.to_string(),
            frequency,
        });
    }
    Ok(queries)
}

/// Loads queries; a missing frequency column falls back to the click log's record count.
pub fn load_queries(path: impl AsRef<Path>, log: Option<&ClickLog>) -> Result<Vec<Query>> {
    let path = path.as_ref();
    let mut queries = parse_queries(&read_text(path)?, &path.display().to_string())?;
    if let Some(log) = log {
        for q in queries.iter_mut().filter(|q| q.frequency.is_none()) {
            if log.contains_query(&q.id) {
                q.frequency = Some(log.frequency(&q.id));
            }
        }
    }
    Ok(queries)
}

pub fn write_queries(path: impl AsRef<Path>, queries: &[Query]) -> Result<()> {
    let mut out = String::new();
    for q in queries {
        match q.frequency {
            Some(f) => out.push_str(&format!("{}\t{}\t{}\n", q.id, q.text, f)),
            None => out.push_str(&format!("{}\t{}\n", q.id, q.text)),
        }
    }
    write_text(path.as_ref(), &out)
}

pub fn parse_click_log(text: &str, path: &str) -> Result<ClickLog> {
    let mut records = Vec::new();
    for (line, raw) in data_lines(text) {
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let (q, d) = (fields[0].trim(), fields[1].trim());
        if q.is_empty() || d.is_empty() {
            return Err(Error::parse(path, line, "query and document ids must be non-empty"));
        }
        records.push(ClickRecord {
            query_id: q.to_string(),
            doc_id: d.to_string(),
            clicks: parse_count(fields[2], path, line, "clicks")?,
            impressions: parse_count(fields[3], path, line, "impressions")?,
        });
    }
    ClickLog::from_records(records)
}

pub fn load_click_log(path: impl AsRef<Path>) -> Result<ClickLog> {
    let path = path.as_ref();
    parse_click_log(&read_text(path)?, &path.display().to_string())
}

pub fn write_click_log(path: impl AsRef<Path>, log: &ClickLog) -> Result<()> {
    let mut out = String::new();
    for r in log.records() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.query_id, r.doc_id, r.clicks, r.impressions
        ));
    }
    write_text(path.as_ref(), &out)
}

pub fn parse_triples(text: &str, path: &str) -> Result<Vec<Triple>> {
    let mut triples = Vec::new();
    for (line, raw) in data_lines(text) {
        let fields: Vec<&str> = raw.split('\t').map(str::trim).collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::parse(path, line, "expected query_id, pos_doc_id, neg_doc_id"));
        }
        if fields[1] == fields[2] {
            return Err(Error::invalid(format!(
                "{path}:{line}: positive and negative document are both `{}`",
                fields[1]
            )));
        }
        triples.push(Triple {
            query_id: fields[0].to_string(),
            pos_doc_id: fields[1].to_string(),
            neg_doc_id: fields[2].to_string(),
        });
    }
    Ok(triples)
}

pub fn load_triples(path: impl AsRef<Path>) -> Result<Vec<Triple>> {
    let path = path.as_ref();
    parse_triples(&read_text(path)?, &path.display().to_string())
}

pub fn write_triples(path: impl AsRef<Path>, triples: &[Triple]) -> Result<()> {
    let mut out = String::new();
    for t in triples {
        out.push_str(&format!("{}\t{}\t{}\n", t.query_id, t.pos_doc_id, t.neg_doc_id));
    }
    write_text(path.as_ref(), &out)
}
