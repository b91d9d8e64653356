use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use log::warn;

use super::manifest::RunManifest;
use super::workspace::{Workspace, DOC_INDEX_FILE, QUERY_INDEX_FILE};
use super::{Command, FusionArgs, RunMode};
use crate::analysis::{analyze_gains, sweep, sweep_csv, SweepInputs};
use crate::corpus::{load_triples, write_click_log, write_documents, write_queries, write_text, write_triples, ClickLog, Group, Query, Rel};
use crate::embed::{hash_embed, load_embeddings, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::eval::{build_dctr_qrels, build_raw_qrels, evaluate_with, Metric, Qrels, RunFile, ALL_GROUPS};
use crate::fusion::{FusionConfig, FusionMode, GroupLambdas, Lader, LaderTrace, QueryInput};
use crate::index::FlatIndex;

pub(super) fn dispatch(ws: &Workspace, command: Command) -> Result<()> {
    match command {
        Command::Ingest => ingest(ws),
        Command::BuildIndex => build_index(ws),
        Command::Run {
            mode,
            fusion,
            output,
            tag,
        } => run(ws, mode, &fusion, output, tag),
        Command::Eval {
            run,
            qrels,
            output,
            lenient,
        } => eval(ws, &run, qrels.as_deref(), output, lenient),
        Command::Sweep {
            proportions,
            seed,
            fusion,
            output,
        } => sweep_cmd(ws, &proportions, seed, &fusion, output),
        Command::Analyze { baseline, fusion } => analyze(ws, baseline.as_deref(), &fusion),
        Command::Search {
            text,
            id,
            k,
            mode,
            fusion,
        } => search(ws, text.as_deref(), id.as_deref(), k, mode, &fusion),
    }
}

fn ingest(ws: &Workspace) -> Result<()> {
    let mut m = ws.manifest("ingest")?;
    let docs = ws.documents(&mut m)?;
    let log = ws.click_log(&mut m)?;
    let known: HashSet<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    let unknown = log.records().filter(|r| !known.contains(r.doc_id.as_str())).count();
    if unknown > 0 {
        warn!("{unknown} click records point at documents missing from the collection");
    }

    let mut outputs = Vec::new();
    let emit = |name: &str, outputs: &mut Vec<PathBuf>| {
        let p = ws.out(name);
        outputs.push(p.clone());
        p
    };
    write_documents(emit("documents.jsonl", &mut outputs), &docs)?;
    write_click_log(emit("click_log.tsv", &mut outputs), &log)?;
    if ws.cfg.get("queries").is_some() {
        let queries = ws.queries(Some(&log), &mut m)?;
        print_groups("queries", &queries, ws.default_group()?);
        write_queries(emit("queries.tsv", &mut outputs), &queries)?;
    }
    if let Some(queries) = ws.log_queries(&log, &mut m)? {
        write_queries(emit("log_queries.tsv", &mut outputs), &queries)?;
    }
    if let Some(path) = ws.cfg.path("triples") {
        m.add_input(&path)?;
        let triples = load_triples(&path)?;
        if let Some(t) = triples
            .iter()
            .find(|t| !known.contains(t.pos_doc_id.as_str()) || !known.contains(t.neg_doc_id.as_str()))
        {
            return Err(Error::invalid(format!(
                "triple for query `{}` names an unknown document",
                t.query_id
            )));
        }
        println!("triples: {}", triples.len());
        write_triples(emit("triples.tsv", &mut outputs), &triples)?;
    }
    build_raw_qrels(&log).save(emit("qrels.raw.txt", &mut outputs))?;
    build_dctr_qrels(&log)?.save(emit("qrels.dctr.txt", &mut outputs))?;
    println!("documents: {}", docs.len());
    println!("logged queries: {}", log.num_queries());
    println!("click records: {}", log.num_records());
    m.finish(&outputs)
}

fn print_groups(label: &str, queries: &[Query], default: Group) {
    let mut counts: HashMap<Group, usize> = HashMap::new();
    for q in queries {
        *counts.entry(q.group_or(default)).or_default() += 1;
    }
    let parts: Vec<String> = Group::ALL
        .iter()
        .map(|g| format!("{g}={}", counts.get(g).copied().unwrap_or(0)))
        .collect();
    println!("{label}: {} ({})", queries.len(), parts.join(" "));
}

fn build_index(ws: &Workspace) -> Result<()> {
    let mut m = ws.manifest("build-index")?;
    let log = ws.click_log(&mut m)?;
    let docs = ws.build_doc_index(&mut m)?;
    let queries = ws.build_query_index(&log, &mut m)?;
    if queries.dim() != docs.dim() {
        return Err(Error::invalid(format!(
            "query embeddings have dim {}, document embeddings have dim {}",
            queries.dim(),
            docs.dim()
        )));
    }
    let doc_path = ws.out(DOC_INDEX_FILE);
    let query_path = ws.out(QUERY_INDEX_FILE);
    docs.save(&doc_path)?;
    queries.save(&query_path)?;
    println!("N_q={} N_d={} dim={}", queries.len(), docs.len(), docs.dim());
    m.finish(&[doc_path, query_path])
}

/// Everything a scoring command needs, loaded once.
struct Pipeline {
    log: ClickLog,
    rel: Rel,
    query_index: FlatIndex,
    doc_index: FlatIndex,
    queries: Vec<Query>,
    vectors: EmbeddingMatrix,
}

impl Pipeline {
    fn load(ws: &Workspace, m: &mut RunManifest) -> Result<Self> {
        let log = ws.click_log(m)?;
        let doc_index = ws.doc_index(m)?;
        let query_index = ws.query_index(&log, m)?;
        if query_index.dim() != doc_index.dim() {
            return Err(Error::invalid(format!(
                "query index has dim {}, document index has dim {}",
                query_index.dim(),
                doc_index.dim()
            )));
        }
        let queries = ws.queries(Some(&log), m)?;
        let vectors = ws.query_vectors(&queries, doc_index.dim(), m)?;
        Ok(Self {
            rel: log.rel(),
            log,
            query_index,
            doc_index,
            queries,
            vectors,
        })
    }

    fn inputs(&self) -> Vec<QueryInput<'_>> {
        self.queries
            .iter()
            .zip(self.vectors.rows())
            .map(|(q, (_, v))| QueryInput {
                id: &q.id,
                text: &q.text,
                vector: v,
            })
            .collect()
    }

    fn traces(
        &self,
        ws: &Workspace,
        mode: RunMode,
        policy: &GroupLambdas,
        k_out: usize,
        m: &mut RunManifest,
    ) -> Result<Vec<LaderTrace>> {
        let inputs = self.inputs();
        let config = |q: &str| FusionConfig {
            mode: fusion_mode(mode),
            ..policy.config_for(q)
        };
        match mode {
            RunMode::LaBm25 => {
                let bm25 = ws.bm25(&ws.documents(m)?)?;
                Lader::new(&self.query_index, &bm25, &self.rel).run(&inputs, config, k_out)
            }
            _ => Lader::new(&self.query_index, &self.doc_index, &self.rel).run(&inputs, config, k_out),
        }
    }
}

fn fusion_mode(mode: RunMode) -> FusionMode {
    match mode {
        RunMode::Full | RunMode::LaBm25 => FusionMode::Full,
        RunMode::DrOnly => FusionMode::DrOnly,
        RunMode::LaOnly => FusionMode::LaOnly,
    }
}

fn run(ws: &Workspace, mode: RunMode, fusion: &FusionArgs, output: Option<PathBuf>, tag: Option<String>) -> Result<()> {
    let mut m = ws.manifest(&format!("run --mode {}", mode.name()))?;
    let p = Pipeline::load(ws, &mut m)?;
    let (policy, k_out) = ws.fusion_policy(fusion, &p.queries)?;
    if mode == RunMode::LaOnly && p.log.is_empty() {
        warn!("click log is empty; la-only produces empty rankings");
    }
    let traces = p.traces(ws, mode, &policy, k_out, &mut m)?;
    let path = output.unwrap_or_else(|| ws.out(&format!("run.{}.txt", mode.name())));
    let tag = tag.unwrap_or_else(|| format!("lader-{}", mode.name()));
    RunFile::from_traces(&traces).save(&path, &tag)?;
    let skipped: usize = traces.iter().map(|t| t.skipped_rel_docs).sum();
    if skipped > 0 {
        warn!("{skipped} clicked documents were missing from the index and skipped");
    }
    println!("{} queries ranked, run written to {}", traces.len(), path.display());
    m.finish(&[path])
}

fn groups_for(ws: &Workspace, m: &mut RunManifest) -> Result<HashMap<String, Group>> {
    if ws.cfg.get("queries").is_none() {
        return Ok(HashMap::new());
    }
    let log = match ws.cfg.get("click_log") {
        Some(_) => Some(ws.click_log(m)?),
        None => None,
    };
    let default = ws.default_group()?;
    Ok(ws
        .queries(log.as_ref(), m)?
        .into_iter()
        .map(|q| {
            let g = q.group_or(default);
            (q.id, g)
        })
        .collect())
}

fn set_difference(run: &RunFile, qrels: &Qrels) -> Option<String> {
    let a: BTreeSet<&str> = run.query_ids().collect();
    let b: BTreeSet<&str> = qrels.query_ids().collect();
    if a == b {
        return None;
    }
    let only_run: Vec<&str> = a.difference(&b).copied().collect();
    let only_qrels: Vec<&str> = b.difference(&a).copied().collect();
    let show = |v: &[&str]| v.iter().take(5).copied().collect::<Vec<_>>().join(", ");
    Some(format!(
        "query sets differ: {} only in the run [{}], {} only in the qrels [{}]",
        only_run.len(),
        show(&only_run),
        only_qrels.len(),
        show(&only_qrels)
    ))
}

fn eval(ws: &Workspace, run_path: &Path, qrels: Option<&Path>, output: Option<PathBuf>, lenient: bool) -> Result<()> {
    let mut m = ws.manifest("eval")?;
    m.add_input(run_path)?;
    let run = RunFile::load(run_path)?;
    let qrels = ws.qrels(qrels, &mut m)?;
    if let Some(diff) = set_difference(&run, &qrels) {
        if !lenient {
            return Err(Error::invalid(diff));
        }
        warn!("{diff}");
    }
    let groups = groups_for(ws, &mut m)?;
    let table = evaluate_with(&run, &qrels, &groups, ws.gain()?);
    let stem = run_path.file_stem().map_or("run".into(), |s| s.to_string_lossy());
    let path = output.unwrap_or_else(|| ws.out(&format!("metrics.{stem}.csv")));
    let csv = table.to_csv();
    write_text(&path, &csv)?;
    print!("{csv}");
    m.finish(&[path])
}

fn sweep_cmd(ws: &Workspace, proportions: &[f64], seed: Option<u64>, fusion: &FusionArgs, output: Option<PathBuf>) -> Result<()> {
    let mut m = ws.manifest("sweep")?;
    let seed = match seed {
        Some(s) => s,
        None => ws.seed()?,
    };
    m.seed = seed;
    let p = Pipeline::load(ws, &mut m)?;
    let (policy, k_out) = ws.fusion_policy(fusion, &p.queries)?;
    let qrels = ws.qrels(None, &mut m)?;
    let inputs = p.inputs();
    let config_for = |q: &str| policy.config_for(q);
    let rows = sweep(
        proportions,
        seed,
        &SweepInputs {
            log: &p.log,
            log_query_embeddings: p.query_index.matrix(),
            documents: &p.doc_index,
            queries: &inputs,
            config_for: &config_for,
            qrels: &qrels,
            groups: &policy.groups,
            k_out,
        },
    )?;
    for r in &rows {
        let ndcg = r.metrics.get(ALL_GROUPS, Metric::Ndcg10).unwrap_or(0.0);
        println!("p={} log_queries={} ndcg@10={ndcg:.4}", r.proportion, r.log_queries);
    }
    let path = output.unwrap_or_else(|| ws.out("sweep.csv"));
    write_text(&path, &sweep_csv(&rows))?;
    m.finish(&[path])
}

fn analyze(ws: &Workspace, baseline: Option<&Path>, fusion: &FusionArgs) -> Result<()> {
    let mut m = ws.manifest("analyze")?;
    let p = Pipeline::load(ws, &mut m)?;
    let (policy, k_out) = ws.fusion_policy(fusion, &p.queries)?;
    let qrels = ws.qrels(None, &mut m)?;
    let full = p.traces(ws, RunMode::Full, &policy, k_out, &mut m)?;
    let baseline = match baseline {
        Some(path) => {
            m.add_input(path)?;
            RunFile::load(path)?
        }
        None => RunFile::from_traces(&p.traces(ws, RunMode::DrOnly, &policy, k_out, &mut m)?),
    };
    let analysis = analyze_gains(&full, &baseline, &p.queries, &p.rel, &qrels, ws.default_group()?)?;
    let features = ws.out("features.csv");
    let coefficients = ws.out("coefficients.csv");
    write_text(&features, &analysis.features_csv())?;
    let csv = analysis.coefficients_csv();
    write_text(&coefficients, &csv)?;
    print!("{csv}");
    let r = &analysis.regression;
    println!("r_squared={:.4} ridge={} queries={}", r.r_squared, r.ridge_applied, analysis.gains.len());
    if r.rank_deficient {
        warn!("feature matrix is rank deficient even after ridge; coefficients are a pseudo-inverse solution");
    }
    m.finish(&[features, coefficients])
}

fn search(
    ws: &Workspace,
    text: Option<&str>,
    id: Option<&str>,
    k: usize,
    mode: RunMode,
    fusion: &FusionArgs,
) -> Result<()> {
    if k == 0 {
        return Err(Error::arg("k must be at least 1"));
    }
    if id.is_none() && ws.cfg.get("doc_embeddings").is_some() {
        return Err(Error::arg(
            "documents use stored embeddings, which free text cannot be projected into; \
             pass --id of a query in the embedding store",
        ));
    }
    let mut m = ws.manifest("search")?;
    let log = ws.click_log(&mut m)?;
    let doc_index = ws.doc_index(&mut m)?;
    let query_index = ws.query_index(&log, &mut m)?;
    let rel = log.rel();
    let dim = doc_index.dim();

    let (query_id, vector, text) = match (id, text) {
        (Some(id), text) => {
            let mut found = None;
            for key in ["query_embeddings", "log_query_embeddings"] {
                if let Some(path) = ws.cfg.path(key) {
                    if let Some(v) = load_embeddings(&path)?.get(id) {
                        found = Some(v.to_vec());
                        break;
                    }
                }
            }
            let v = found.ok_or_else(|| {
                Error::invalid(format!(
                    "cannot embed `{id}`: it is in neither query_embeddings nor log_query_embeddings"
                ))
            })?;
            (id.to_string(), v, text.unwrap_or("").to_string())
        }
        (None, Some(text)) => {
            let h = ws.hash_embedder()?;
            let v = hash_embed(text, dim, h.seed)
                .map_err(|e| Error::arg(format!("cannot embed the query text: {e}")))?;
            ("search".to_string(), v, text.to_string())
        }
        (None, None) => return Err(Error::arg("give query text or --id")),
    };
    if vector.len() != dim {
        return Err(Error::invalid(format!(
            "query vector has dim {}, index has dim {dim}",
            vector.len()
        )));
    }

    let (policy, _) = ws.fusion_policy(fusion, &[])?;
    let cfg = FusionConfig {
        mode: fusion_mode(mode),
        ..policy.config_for(&query_id)
    };
    let input = QueryInput {
        id: &query_id,
        text: &text,
        vector: &vector,
    };
    let trace = match mode {
        RunMode::LaBm25 => {
            let bm25 = ws.bm25(&ws.documents(&mut m)?)?;
            Lader::new(&query_index, &bm25, &rel).score(&input, &cfg)?
        }
        _ => Lader::new(&query_index, &doc_index, &rel).score(&input, &cfg)?,
    };

    println!("query {query_id} mode={} lambda={}", mode.name(), cfg.lambda);
    println!("rank\tdoc\tscore\tretrieval\tlog");
    let parts: HashMap<&str, _> = trace.components.iter().map(|c| (c.doc_id.as_str(), c)).collect();
    for (i, (doc, score)) in trace.final_ranking.iter().take(k).enumerate() {
        let c = parts[doc];
        println!("{}\t{doc}\t{score:.6}\t{:.6}\t{:.6}", i + 1, c.retrieval, c.log);
    }
    println!("similar queries ({} of at most {})", trace.similar_queries.len(), cfg.m);
    for (q, s) in trace.similar_queries.iter().take(k) {
        let clicked = rel.get(q);
        let shown: Vec<&str> = clicked.iter().take(5).map(String::as_str).collect();
        let more = if clicked.len() > 5 { " ..." } else { "" };
        println!("  {q}\t{s:.6}\t[{}{more}]", shown.join(" "));
    }
    Ok(())
}
