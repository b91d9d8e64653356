//! Seeded synthetic corpora with controllably informative click logs.
//!
//! Topics are random directions on the unit sphere. Documents and queries are
//! noisy copies of their topic centroid, and their texts mix topic-specific
//! tokens with shared filler tokens. The click log holds past queries of every
//! topic that clicked a popularity-biased subset of the topic's documents.
//! Held-out test queries are assigned frequencies; frequent ones also have
//! near-duplicate paraphrases in the log, so log evidence concentrates on them.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    group_of, write_click_log, write_documents, write_queries, write_triples, ClickLog, ClickRecord,
    Document, Group, Query, Triple,
};
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::eval::Qrels;
use crate::fusion::QueryInput;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_topics: usize,
    pub docs_per_topic: usize,
    /// Held-out test queries per topic.
    pub queries_per_topic: usize,
    pub dim: usize,
    /// Probability that a logged click lands on a random off-topic document.
    pub click_noise: f64,
    pub seed: u64,
    /// Generic logged queries per topic, on top of test-query paraphrases.
    pub log_queries_per_topic: usize,
    /// Logged paraphrases of each HEAD test query. TORSO queries get one, TAIL none.
    pub head_paraphrases: usize,
    /// Most clicked documents per logged query; each query clicks between half this and this many.
    pub clicks_per_query: usize,
    /// Zipf exponent of within-topic document popularity.
    pub popularity_skew: f64,
    /// Norm of the centroids before noise is added.
    pub scale: f64,
    pub doc_noise: f64,
    pub query_noise: f64,
    /// Noise of a paraphrase around the query it paraphrases.
    pub paraphrase_noise: f64,
    /// Probability that a document token is drawn from its topic vocabulary.
    pub doc_topicality: f64,
    /// Probability that a query token is drawn from its topic vocabulary.
    pub query_topicality: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_topics: 8,
            docs_per_topic: 50,
            queries_per_topic: 10,
            dim: 16,
            click_noise: 0.1,
            seed: 7,
            log_queries_per_topic: 8,
            head_paraphrases: 4,
            clicks_per_query: 6,
            popularity_skew: 1.0,
            scale: 3.0,
            doc_noise: 2.0,
            query_noise: 2.0,
            paraphrase_noise: 0.1,
            doc_topicality: 0.08,
            query_topicality: 0.25,
        }
    }
}

impl SynthSpec {
    /// The core six parameters; the rest keep their defaults.
    pub fn new(
        n_topics: usize,
        docs_per_topic: usize,
        queries_per_topic: usize,
        dim: usize,
        click_noise: f64,
        seed: u64,
    ) -> Self {
        Self {
            n_topics,
            docs_per_topic,
            queries_per_topic,
            dim,
            click_noise,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_topics == 0 || self.docs_per_topic == 0 || self.queries_per_topic == 0 {
            return Err(Error::arg("topic, document and query counts must be at least 1"));
        }
        if self.clicks_per_query == 0 {
            return Err(Error::arg("clicks_per_query must be at least 1"));
        }
        if self.dim < 4 {
            return Err(Error::arg(format!("dim must be at least 4, got {}", self.dim)));
        }
        if !(0.0..=1.0).contains(&self.click_noise) {
            return Err(Error::arg(format!("click_noise must lie in [0, 1], got {}", self.click_noise)));
        }
        if self.click_noise > 0.0 && self.n_topics < 2 {
            return Err(Error::arg("click noise needs at least two topics"));
        }
        let non_negative = [
            self.popularity_skew,
            self.scale,
            self.doc_noise,
            self.query_noise,
            self.paraphrase_noise,
        ];
        if !(0.0..=1.0).contains(&self.doc_topicality) || !(0.0..=1.0).contains(&self.query_topicality) {
            return Err(Error::arg("topicality must lie in [0, 1]"));
        }
        if non_negative.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::arg("skew, scale and noise levels must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub spec: SynthSpec,
    pub documents: Vec<Document>,
    /// Topic of each document, aligned with `documents`.
    pub doc_topics: Vec<usize>,
    pub log_queries: Vec<Query>,
    pub test_queries: Vec<Query>,
    pub test_topics: Vec<usize>,
    pub click_log: ClickLog,
    pub triples: Vec<Triple>,
    pub doc_embeddings: EmbeddingMatrix,
    pub log_query_embeddings: EmbeddingMatrix,
    pub test_query_embeddings: EmbeddingMatrix,
    /// Same-topic documents, grade 1, for every test query.
    pub qrels: Qrels,
}

/// Where [`SynthCorpus::write_to_dir`] put each file.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPaths {
    pub config: PathBuf,
    pub documents: PathBuf,
    pub log_queries: PathBuf,
    pub test_queries: PathBuf,
    pub click_log: PathBuf,
    pub triples: PathBuf,
    pub doc_embeddings: PathBuf,
    pub log_query_embeddings: PathBuf,
    pub test_query_embeddings: PathBuf,
    pub qrels: PathBuf,
}

impl SynthCorpus {
    /// Frequency group of every test query.
    pub fn test_groups(&self) -> HashMap<String, Group> {
        self.test_queries
            .iter()
            .map(|q| (q.id.clone(), q.group_or(Group::Tail)))
            .collect()
    }

    pub fn test_inputs(&self) -> Vec<QueryInput<'_>> {
        self.test_queries
            .iter()
            .map(|q| QueryInput {
                id: &q.id,
                text: &q.text,
                vector: self.test_query_embeddings.get(&q.id).expect("every test query is embedded"),
            })
            .collect()
    }

    /// Writes every artifact plus a `lader.conf` that points at them.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<SynthPaths> {
        let dir = dir.as_ref();
        let paths = SynthPaths {
            config: dir.join("lader.conf"),
            documents: dir.join("documents.jsonl"),
            log_queries: dir.join("log_queries.tsv"),
            test_queries: dir.join("test_queries.tsv"),
            click_log: dir.join("click_log.tsv"),
            triples: dir.join("triples.tsv"),
            doc_embeddings: dir.join("doc_embeddings.lder"),
            log_query_embeddings: dir.join("log_query_embeddings.lder"),
            test_query_embeddings: dir.join("test_query_embeddings.lder"),
            qrels: dir.join("qrels.txt"),
        };
        write_documents(&paths.documents, &self.documents)?;
        write_queries(&paths.log_queries, &self.log_queries)?;
        write_queries(&paths.test_queries, &self.test_queries)?;
        write_click_log(&paths.click_log, &self.click_log)?;
        write_triples(&paths.triples, &self.triples)?;
        self.doc_embeddings.save(&paths.doc_embeddings)?;
        self.log_query_embeddings.save(&paths.log_query_embeddings)?;
        self.test_query_embeddings.save(&paths.test_query_embeddings)?;
        self.qrels.save(&paths.qrels)?;
        let config = format!(
            "# synthetic corpus, seed {}\n\
             documents = documents.jsonl\n\
             log_queries = log_queries.tsv\n\
             queries = test_queries.tsv\n\
             click_log = click_log.tsv\n\
             doc_embeddings = doc_embeddings.lder\n\
             log_query_embeddings = log_query_embeddings.lder\n\
             query_embeddings = test_query_embeddings.lder\n\
             qrels = qrels.txt\n\
             out_dir = out\n\
             seed = {}\n",
            self.spec.seed, self.spec.seed
        );
        crate::corpus::write_text(&paths.config, &config)?;
        Ok(paths)
    }
}

const TOPIC_VOCAB: usize = 24;
const SHARED_VOCAB: usize = 150;

struct Gen {
    rng: ChaCha8Rng,
    spec: SynthSpec,
    centroids: Vec<Vec<f64>>,
}

impl Gen {
    fn gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    fn unit_vector(&mut self) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..self.spec.dim).map(|_| self.gaussian()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-9 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }

    /// `scale · (centre + noise · g)` with `g` standard normal per coordinate,
    /// the noise being scaled so its expected norm matches `noise`.
    fn around(&mut self, centre: &[f64], noise: f64) -> Vec<f32> {
        let per_coord = noise / (self.spec.dim as f64).sqrt();
        let scale = self.spec.scale;
        centre
            .iter()
            .map(|&c| (scale * (c + per_coord * self.gaussian())) as f32)
            .collect()
    }

    fn topic_vector(&mut self, topic: usize, noise: f64) -> Vec<f32> {
        let centre = self.centroids[topic].clone();
        self.around(&centre, noise)
    }

    fn text(&mut self, topic: usize, len: usize, topical: f64) -> String {
        (0..len)
            .map(|_| {
                if self.rng.random_bool(topical) {
                    format!("t{topic}w{}", self.rng.random_range(0..TOPIC_VOCAB))
                } else {
                    format!("w{}", self.rng.random_range(0..SHARED_VOCAB))
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn test_frequency(rng: &mut ChaCha8Rng, group: Group) -> u64 {
    match group {
        Group::Head => rng.random_range(45..=200),
        Group::Torso => rng.random_range(6..=44),
        Group::Tail => rng.random_range(1..=5),
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut gen = Gen {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        spec: spec.clone(),
        centroids: Vec::new(),
    };
    gen.centroids = (0..spec.n_topics).map(|_| gen.unit_vector()).collect();

    let mut documents = Vec::new();
    let mut doc_topics = Vec::new();
    let mut doc_rows = Vec::new();
    for topic in 0..spec.n_topics {
        for j in 0..spec.docs_per_topic {
            let id = format!("d{topic:02}_{j:03}");
            let title = gen.text(topic, 6, spec.doc_topicality);
            let abstract_text = gen.text(topic, 40, spec.doc_topicality);
            doc_rows.push((id.clone(), gen.topic_vector(topic, spec.doc_noise)));
            documents.push(Document {
                id,
                title,
                abstract_text,
            });
            doc_topics.push(topic);
        }
    }

    // popularity order inside each topic is a random permutation
    let popularity = WeightedIndex::new(
        (0..spec.docs_per_topic).map(|r| 1.0 / ((r + 1) as f64).powf(spec.popularity_skew)),
    )
    .map_err(|e| Error::arg(format!("bad popularity weights: {e}")))?;
    let by_rank: Vec<Vec<usize>> = (0..spec.n_topics)
        .map(|topic| {
            let mut docs: Vec<usize> = (0..spec.docs_per_topic)
                .map(|j| topic * spec.docs_per_topic + j)
                .collect();
            docs.shuffle(&mut gen.rng);
            docs
        })
        .collect();

    let mut test_queries = Vec::new();
    let mut test_topics = Vec::new();
    let mut test_rows = Vec::new();
    let mut log_queries = Vec::new();
    let mut log_rows = Vec::new();
    let mut log_topics = Vec::new();
    for topic in 0..spec.n_topics {
        for i in 0..spec.queries_per_topic {
            let group = Group::ALL[i % 3];
            let id = format!("t{topic:02}_{i:03}");
            let len = gen.rng.random_range(2..=6);
            let text = gen.text(topic, len, spec.query_topicality);
            let vector = gen.topic_vector(topic, spec.query_noise);
            let frequency = test_frequency(&mut gen.rng, group);
            let paraphrases = match group {
                Group::Head => spec.head_paraphrases,
                Group::Torso => 1,
                Group::Tail => 0,
            };
            let centre: Vec<f64> = vector.iter().map(|&x| f64::from(x) / spec.scale).collect();
            for p in 0..paraphrases {
                let para = gen.around(&centre, spec.paraphrase_noise);
                log_queries.push(Query {
                    id: format!("{id}_p{p}"),
                    text: text.clone(),
                    frequency: Some(frequency),
                });
                log_rows.push((format!("{id}_p{p}"), para));
                log_topics.push(topic);
            }
            test_queries.push(Query {
                id: id.clone(),
                text,
                frequency: Some(frequency),
            });
            test_rows.push((id, vector));
            test_topics.push(topic);
        }
        for i in 0..spec.log_queries_per_topic {
            let id = format!("l{topic:02}_{i:03}");
            let len = gen.rng.random_range(2..=6);
            let text = gen.text(topic, len, spec.query_topicality);
            let vector = gen.topic_vector(topic, spec.query_noise);
            let frequency = gen.rng.random_range(1..=60);
            log_queries.push(Query {
                id: id.clone(),
                text,
                frequency: Some(frequency),
            });
            log_rows.push((id, vector));
            log_topics.push(topic);
        }
    }

    let n_docs = documents.len();
    let max_clicks = spec.clicks_per_query.min(spec.docs_per_topic);
    let mut records = Vec::new();
    let mut triples = Vec::new();
    for (query, &topic) in log_queries.iter().zip(&log_topics) {
        let n_clicks = gen.rng.random_range(max_clicks.div_ceil(2)..=max_clicks);
        let mut clicked: Vec<usize> = Vec::new();
        while clicked.len() < n_clicks {
            let doc = by_rank[topic][popularity.sample(&mut gen.rng)];
            if !clicked.contains(&doc) {
                clicked.push(doc);
            }
        }
        for doc in clicked {
            let doc = if spec.click_noise > 0.0 && gen.rng.random_bool(spec.click_noise) {
                loop {
                    let other = gen.rng.random_range(0..n_docs);
                    if doc_topics[other] != topic {
                        break other;
                    }
                }
            } else {
                doc
            };
            let clicks = gen.rng.random_range(1..=3u64);
            let impressions = clicks + gen.rng.random_range(0..=6u64);
            records.push(ClickRecord {
                query_id: query.id.clone(),
                doc_id: documents[doc].id.clone(),
                clicks,
                impressions,
            });
            let negative = loop {
                let other = gen.rng.random_range(0..n_docs);
                if doc_topics[other] != topic {
                    break other;
                }
            };
            if negative != doc {
                triples.push(Triple {
                    query_id: query.id.clone(),
                    pos_doc_id: documents[doc].id.clone(),
                    neg_doc_id: documents[negative].id.clone(),
                });
            }
        }
    }
    let click_log = ClickLog::from_records(records)?;
    // keep declared frequencies consistent with their groups
    debug_assert!(test_queries
        .iter()
        .all(|q| q.frequency.map(group_of) == Some(q.group_or(Group::Tail))));

    let mut qrels = Qrels::new();
    for (q, &topic) in test_queries.iter().zip(&test_topics) {
        for (d, &t) in documents.iter().zip(&doc_topics) {
            if t == topic {
                qrels.insert(&q.id, &d.id, 1.0)?;
            }
        }
    }

    Ok(SynthCorpus {
        spec: spec.clone(),
        documents,
        doc_topics,
        log_queries,
        test_queries,
        test_topics,
        click_log,
        triples,
        doc_embeddings: EmbeddingMatrix::from_rows(spec.dim, doc_rows)?,
        log_query_embeddings: EmbeddingMatrix::from_rows(spec.dim, log_rows)?,
        test_query_embeddings: EmbeddingMatrix::from_rows(spec.dim, test_rows)?,
        qrels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(noise: f64) -> SynthSpec {
        SynthSpec::new(3, 10, 3, 8, noise, 11)
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate(&small(0.2)).unwrap(), generate(&small(0.2)).unwrap());
        assert_ne!(generate(&small(0.2)).unwrap(), generate(&SynthSpec { seed: 12, ..small(0.2) }).unwrap());
    }

    #[test]
    fn noiseless_clicks_stay_on_topic() {
        let c = generate(&small(0.0)).unwrap();
        let topic_of: HashMap<&str, usize> = c
            .documents
            .iter()
            .zip(&c.doc_topics)
            .map(|(d, &t)| (d.id.as_str(), t))
            .collect();
        for r in c.click_log.records() {
            // both id schemes carry the topic in characters 1..3
            assert_eq!(r.query_id[1..3].parse::<usize>().unwrap(), topic_of[r.doc_id.as_str()]);
        }
    }

    #[test]
    fn shapes_and_groups() {
        let c = generate(&SynthSpec::default()).unwrap();
        assert_eq!(c.documents.len(), 400);
        assert_eq!(c.test_queries.len(), 80);
        assert_eq!(c.doc_embeddings.dim(), 16);
        assert_eq!(c.log_query_embeddings.len(), c.log_queries.len());
        assert_eq!(c.click_log.num_queries(), c.log_queries.len());
        assert_eq!(c.qrels.num_queries(), 80);
        let groups = c.test_groups();
        for g in Group::ALL {
            assert!(groups.values().any(|&x| x == g));
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&SynthSpec { dim: 3, ..small(0.1) }).is_err());
        assert!(generate(&SynthSpec { n_topics: 0, ..small(0.1) }).is_err());
        assert!(generate(&small(1.5)).is_err());
    }
}
