mod common;

use std::collections::BTreeMap;

use common::reference;
use lader::eval::{evaluate, mrr, ndcg_at_k, ndcg_at_k_with, recall_at_k, Gain, Qrels, RunFile};
use lader::index::ScoredList;
use proptest::prelude::*;

fn judged() -> impl Strategy<Value = BTreeMap<String, f64>> {
    prop::collection::btree_map((0usize..40).prop_map(|d| format!("d{d:02}")), 0.0f64..3.0, 0..15)
}

fn ranking() -> impl Strategy<Value = Vec<String>> {
    Just((0..40).map(|d| format!("d{d:02}")).collect::<Vec<_>>())
        .prop_shuffle()
        .prop_flat_map(|v| (0..=v.len()).prop_map(move |n| v[..n].to_vec()))
}

fn strs(v: &[String]) -> impl Iterator<Item = &str> {
    v.iter().map(String::as_str)
}

proptest! {
    #[test]
    fn agrees_with_reference(ranked in ranking(), judged in judged(), k in 1usize..50) {
        prop_assert!((ndcg_at_k(strs(&ranked), &judged, k) - reference::ndcg(&ranked, &judged, k)).abs() < 1e-12);
        prop_assert_eq!(mrr(strs(&ranked), &judged, Some(k)), reference::rr(&ranked, &judged, k));
        prop_assert_eq!(mrr(strs(&ranked), &judged, None), reference::rr(&ranked, &judged, usize::MAX));
        prop_assert_eq!(recall_at_k(strs(&ranked), &judged, k), reference::recall(&ranked, &judged, k));
    }

    #[test]
    fn ndcg_is_bounded(ranked in ranking(), judged in judged(), k in 1usize..50) {
        for gain in [Gain::Linear, Gain::Exponential] {
            let v = ndcg_at_k_with(strs(&ranked), &judged, k, gain);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn ideal_ordering_scores_one(judged in judged(), k in 1usize..20) {
        prop_assume!(judged.values().any(|&g| g > 0.0));
        let mut ideal: Vec<(&String, &f64)> = judged.iter().collect();
        ideal.sort_by(|a, b| b.1.total_cmp(a.1));
        let ranked: Vec<String> = ideal.into_iter().map(|(d, _)| d.clone()).collect();
        for gain in [Gain::Linear, Gain::Exponential] {
            prop_assert!((ndcg_at_k_with(strs(&ranked), &judged, k, gain) - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn graded_example_by_hand() {
    let judged: BTreeMap<String, f64> = [("a", 2.0), ("b", 1.0)].map(|(d, g)| (d.to_string(), g)).into();
    let ranked = ["x", "b", "a"];
    let dcg = 1.0 / 3f64.log2() + 2.0 / 4f64.log2();
    let idcg = 2.0 + 1.0 / 3f64.log2();
    assert!((ndcg_at_k(ranked, &judged, 10) - dcg / idcg).abs() < 1e-12);
    let exp_dcg = 1.0 / 3f64.log2() + 3.0 / 4f64.log2();
    let exp_idcg = 3.0 + 1.0 / 3f64.log2();
    assert!((ndcg_at_k_with(ranked, &judged, 10, Gain::Exponential) - exp_dcg / exp_idcg).abs() < 1e-12);
    assert_eq!(mrr(ranked, &judged, None), 0.5);
    assert_eq!(recall_at_k(ranked, &judged, 2), Some(0.5));
}

#[test]
fn trec_round_trip_preserves_metrics() {
    let mut qrels = Qrels::new();
    qrels.insert("q1", "d1", 1.0).unwrap();
    qrels.insert("q1", "d3", 0.25).unwrap();
    let mut run = RunFile::default();
    run.rankings.insert(
        "q1".into(),
        ScoredList::from_unsorted(vec![("d3".into(), 0.9), ("d2".into(), 0.5), ("d1".into(), 0.1)]),
    );
    let back = RunFile::parse(&run.to_trec("t"), "mem").unwrap();
    let qrels_back = Qrels::parse(&qrels.to_trec(), "mem").unwrap();
    let groups = Default::default();
    assert_eq!(evaluate(&run, &qrels, &groups).to_csv(), evaluate(&back, &qrels_back, &groups).to_csv());
}
