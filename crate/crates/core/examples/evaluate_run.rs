//! Click-derived relevance labels and TREC-style evaluation.
//!
//! With no arguments a small run is built in memory. Given a run file and a
//! qrels file it evaluates those instead:
//!
//! ```text
//! cargo run --example evaluate_run
//! cargo run --example evaluate_run -- out/run.full.txt qrels.txt
//! ```

use std::collections::HashMap;

use lader::corpus::{ClickLog, ClickRecord};
use lader::eval::{build_dctr_qrels, build_raw_qrels, evaluate, evaluate_with, Gain, Qrels, RunFile};
use lader::index::ScoredList;

fn record(q: &str, d: &str, clicks: u64, impressions: u64) -> ClickRecord {
    ClickRecord {
        query_id: q.into(),
        doc_id: d.into(),
        clicks,
        impressions,
    }
}

fn main() -> lader::error::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let [run, qrels] = args.as_slice() {
        let table = evaluate(&RunFile::load(run)?, &Qrels::load(qrels)?, &HashMap::new());
        print!("{}", table.to_csv());
        return Ok(());
    }

    let log = ClickLog::from_records(vec![
        record("q1", "a", 8, 10),
        record("q1", "b", 1, 10),
        record("q1", "c", 0, 10),
        record("q2", "d", 3, 4),
    ])?;
    let raw = build_raw_qrels(&log);
    let dctr = build_dctr_qrels(&log)?;
    println!("raw qrels:\n{}dctr qrels:\n{}", raw.to_trec(), dctr.to_trec());

    let mut run = RunFile::default();
    let ranked = |v: &[(&str, f64)]| ScoredList::from_unsorted(v.iter().map(|(d, s)| (d.to_string(), *s)).collect());
    run.rankings.insert("q1".into(), ranked(&[("b", 0.9), ("a", 0.8), ("x", 0.1)]));
    run.rankings.insert("q2".into(), ranked(&[("x", 0.5), ("d", 0.4)]));
    print!("{}", run.to_trec("demo"));

    for (name, qrels) in [("raw", &raw), ("dctr", &dctr)] {
        for gain in [Gain::Linear, Gain::Exponential] {
            let table = evaluate_with(&run, qrels, &HashMap::new(), gain);
            let ndcg = table.get("ALL", lader::eval::Metric::Ndcg10).unwrap_or(0.0);
            println!("{name:5} {gain:?} gain: ndcg@10 {ndcg:.4}");
        }
    }
    print!("{}", evaluate(&run, &dctr, &HashMap::new()).to_csv());
    Ok(())
}
