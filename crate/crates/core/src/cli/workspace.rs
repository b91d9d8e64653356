//! Loads pipeline inputs named by a [`Config`], recording their digests.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use super::config::Config;
use super::manifest::RunManifest;
use super::FusionArgs;
use crate::corpus::{load_click_log, load_documents, load_queries, ClickLog, Document, Group, Query};
use crate::embed::{hash_embed, load_embeddings, EmbeddingMatrix, HashEmbedder, DEFAULT_DIM};
use crate::error::{Error, Result};
use crate::eval::{Gain, Qrels};
use crate::fusion::{FusionConfig, GroupLambdas};
use crate::index::{load_index, FlatIndex};
use crate::lexical::{Bm25Params, InvertedIndex};

pub const DOC_INDEX_FILE: &str = "doc.idx";
pub const QUERY_INDEX_FILE: &str = "query.idx";

pub struct Workspace {
    pub cfg: Config,
}

impl Workspace {
    pub fn new(cfg: Config) -> Self {
        Self { cfg }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.cfg.out_dir()
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir().join(name)
    }

    pub fn seed(&self) -> Result<u64> {
        self.cfg.parsed_or("seed", 0)
    }

    pub fn manifest(&self, command: &str) -> Result<RunManifest> {
        Ok(RunManifest::start(command, self.cfg.values(), self.seed()?))
    }

    pub fn hash_embedder(&self) -> Result<HashEmbedder> {
        Ok(HashEmbedder {
            dim: self.cfg.parsed_or("embedding_dim", DEFAULT_DIM)?,
            seed: self.cfg.parsed_or("hash_seed", 0)?,
        })
    }

    pub fn gain(&self) -> Result<Gain> {
        self.cfg.parsed_or("gain", Gain::Linear)
    }

    pub fn default_group(&self) -> Result<Group> {
        self.cfg.parsed_or("default_group", Group::Tail)
    }

    fn input(&self, key: &str, m: &mut RunManifest) -> Result<PathBuf> {
        let path = self.cfg.require_path(key)?;
        m.add_input(&path)?;
        Ok(path)
    }

    fn optional_input(&self, key: &str, m: &mut RunManifest) -> Result<Option<PathBuf>> {
        match self.cfg.path(key) {
            Some(p) => {
                m.add_input(&p)?;
                Ok(Some(p))
            }
            None => Ok(None),
        }
    }

    pub fn documents(&self, m: &mut RunManifest) -> Result<Vec<Document>> {
        load_documents(self.input("documents", m)?)
    }

    pub fn click_log(&self, m: &mut RunManifest) -> Result<ClickLog> {
        load_click_log(self.input("click_log", m)?)
    }

    /// Queries to score, with frequencies falling back to the click log.
    pub fn queries(&self, log: Option<&ClickLog>, m: &mut RunManifest) -> Result<Vec<Query>> {
        load_queries(self.input("queries", m)?, log)
    }

    pub fn log_queries(&self, log: &ClickLog, m: &mut RunManifest) -> Result<Option<Vec<Query>>> {
        self.optional_input("log_queries", m)?
            .map(|p| load_queries(p, Some(log)))
            .transpose()
    }

    pub fn qrels(&self, explicit: Option<&Path>, m: &mut RunManifest) -> Result<Qrels> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => self.cfg.require_path("qrels")?,
        };
        m.add_input(&path)?;
        Qrels::load(path)
    }

    pub fn bm25(&self, docs: &[Document]) -> Result<InvertedIndex> {
        let defaults = Bm25Params::default();
        let params = Bm25Params {
            k1: self.cfg.parsed_or("bm25_k1", defaults.k1)?,
            b: self.cfg.parsed_or("bm25_b", defaults.b)?,
        };
        InvertedIndex::build_with(docs, params)
    }

    /// Document vectors from `doc_embeddings`, or hash embeddings of the texts.
    pub fn build_doc_index(&self, m: &mut RunManifest) -> Result<FlatIndex> {
        if let Some(path) = self.optional_input("doc_embeddings", m)? {
            return Ok(FlatIndex::new(load_embeddings(path)?));
        }
        let docs = self.documents(m)?;
        info!("hash-embedding {} documents", docs.len());
        let h = self.hash_embedder()?;
        let rows: Vec<(String, Vec<f32>)> = docs
            .par_iter()
            .map(|d| Ok((d.id.clone(), hash_embed(&d.text(), h.dim, h.seed)?)))
            .collect::<Result<_>>()?;
        Ok(FlatIndex::new(EmbeddingMatrix::from_rows(h.dim, rows)?))
    }

    /// One row per logged query, from `log_query_embeddings` or hash
    /// embeddings of `log_queries` texts.
    pub fn build_query_index(&self, log: &ClickLog, m: &mut RunManifest) -> Result<FlatIndex> {
        if let Some(path) = self.optional_input("log_query_embeddings", m)? {
            let all = load_embeddings(&path)?;
            if let Some(missing) = log.query_ids().find(|q| all.row_of(q).is_none()) {
                return Err(Error::invalid(format!(
                    "{}: no embedding for logged query `{missing}`",
                    path.display()
                )));
            }
            return Ok(FlatIndex::new(all.select(log.query_ids())));
        }
        let h = self.hash_embedder()?;
        let Some(queries) = self.log_queries(log, m)? else {
            if log.is_empty() {
                return Ok(FlatIndex::new(EmbeddingMatrix::empty(h.dim)?));
            }
            return Err(Error::arg(
                "set `log_query_embeddings`, or `log_queries` so logged queries can be hash-embedded",
            ));
        };
        let texts: HashMap<&str, &str> = queries.iter().map(|q| (q.id.as_str(), q.text.as_str())).collect();
        let ids: Vec<&str> = log.query_ids().collect();
        let rows: Vec<(String, Vec<f32>)> = ids
            .par_iter()
            .map(|&q| {
                let text = texts
                    .get(q)
                    .ok_or_else(|| Error::invalid(format!("logged query `{q}` has no text in log_queries")))?;
                Ok((q.to_string(), hash_embed(text, h.dim, h.seed)?))
            })
            .collect::<Result<_>>()?;
        Ok(FlatIndex::new(EmbeddingMatrix::from_rows(h.dim, rows)?))
    }

    fn cached_index(&self, name: &str, m: &mut RunManifest) -> Result<Option<FlatIndex>> {
        let path = self.out(name);
        if !path.exists() {
            return Ok(None);
        }
        m.add_input(&path)?;
        load_index(&path).map(Some)
    }

    /// The built document index if present, else built in memory.
    pub fn doc_index(&self, m: &mut RunManifest) -> Result<FlatIndex> {
        match self.cached_index(DOC_INDEX_FILE, m)? {
            Some(idx) => Ok(idx),
            None => self.build_doc_index(m),
        }
    }

    pub fn query_index(&self, log: &ClickLog, m: &mut RunManifest) -> Result<FlatIndex> {
        match self.cached_index(QUERY_INDEX_FILE, m)? {
            Some(idx) => Ok(idx),
            None => self.build_query_index(log, m),
        }
    }

    /// Vectors for `queries`, looked up in `query_embeddings` or hash-embedded.
    pub fn query_vectors(&self, queries: &[Query], dim: usize, m: &mut RunManifest) -> Result<EmbeddingMatrix> {
        if let Some(path) = self.optional_input("query_embeddings", m)? {
            let all = load_embeddings(&path)?;
            if let Some(missing) = queries.iter().find(|q| all.row_of(&q.id).is_none()) {
                return Err(Error::invalid(format!(
                    "{}: no embedding for query `{}`",
                    path.display(),
                    missing.id
                )));
            }
            let picked = all.select(queries.iter().map(|q| q.id.as_str()));
            if picked.dim() != dim {
                return Err(Error::invalid(format!(
                    "query embeddings have dim {}, indexes have dim {dim}",
                    picked.dim()
                )));
            }
            return Ok(picked);
        }
        let h = self.hash_embedder()?;
        if h.dim != dim {
            return Err(Error::arg(format!(
                "hash embedding dim {} differs from index dim {dim}; set embedding_dim or query_embeddings",
                h.dim
            )));
        }
        let rows: Vec<(String, Vec<f32>)> = queries
            .par_iter()
            .map(|q| Ok((q.id.clone(), hash_embed(&q.text, h.dim, h.seed)?)))
            .collect::<Result<_>>()?;
        EmbeddingMatrix::from_rows(dim, rows)
    }

    /// Config values with command-line fusion flags applied on top.
    pub fn fusion_policy(&self, args: &FusionArgs, queries: &[Query]) -> Result<(GroupLambdas, usize)> {
        let base = FusionConfig::default();
        let cfg = FusionConfig {
            m: args.m.map_or_else(|| self.cfg.parsed_or("m", base.m), Ok)?,
            n: args.n.map_or_else(|| self.cfg.parsed_or("n", base.n), Ok)?,
            exclude_self: self.cfg.parsed_or("exclude_self", base.exclude_self)?,
            ..base
        };
        let default_group = self.default_group()?;
        let groups: HashMap<String, Group> = queries
            .iter()
            .map(|q| (q.id.clone(), q.group_or(default_group)))
            .collect();
        let mut policy = GroupLambdas::new(cfg, groups);
        policy.default_group = default_group;
        for (group, key, flag) in [
            (Group::Head, "lambda_head", args.lambda_head),
            (Group::Torso, "lambda_torso", args.lambda_torso),
            (Group::Tail, "lambda_tail", args.lambda_tail),
        ] {
            let value = match args.lambda.or(flag) {
                Some(v) => v,
                None => self.cfg.parsed_or(key, policy.lambdas[&group])?,
            };
            policy.lambdas.insert(group, value);
        }
        let k_out = args.k_out.map_or_else(|| self.cfg.parsed_or("k_out", 1000usize), Ok)?;
        for g in Group::ALL {
            FusionConfig {
                lambda: policy.lambdas[&g],
                ..cfg
            }
            .validate()?;
        }
        if self.cfg.get("lambda").is_some() {
            warn!("config key `lambda` is ignored; use lambda_head, lambda_torso and lambda_tail");
        }
        Ok((policy, k_out))
    }
}
