mod common;

use common::{gaussian_rows, naive_top_k, rng};
use lader::embed::EmbeddingMatrix;
use lader::index::{load_index, FlatIndex};
use proptest::prelude::*;

fn small_integer_rows(values: Vec<Vec<i8>>) -> Vec<(String, Vec<f32>)> {
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| (format!("r{i:03}"), v.into_iter().map(f32::from).collect()))
        .collect()
}

proptest! {
    // small integers force plenty of exact ties
    #[test]
    fn matches_full_sort_with_ties(
        (dim, rows, query) in (1usize..6).prop_flat_map(|dim| (
            Just(dim),
            prop::collection::vec(prop::collection::vec(-2i8..=2, dim), 1..120),
            prop::collection::vec(-2i8..=2, dim),
        )),
        k in 1usize..150,
    ) {
        let rows = small_integer_rows(rows);
        let q: Vec<f32> = query.into_iter().map(f32::from).collect();
        let index = FlatIndex::new(EmbeddingMatrix::from_rows(dim, rows.clone()).unwrap());
        let got: Vec<(String, f64)> = index.search(&q, k).unwrap().into_entries();
        prop_assert_eq!(got, naive_top_k(&rows, &q, k));
    }

    #[test]
    fn prefix_property(seed in 0u64..1000, k in 1usize..40) {
        let mut r = rng(seed);
        let rows = gaussian_rows(&mut r, "v", 300, 8);
        let index = FlatIndex::new(EmbeddingMatrix::from_rows(8, rows.clone()).unwrap());
        let q = rows[0].1.clone();
        let big = index.search(&q, k + 10).unwrap();
        let small = index.search(&q, k).unwrap();
        prop_assert_eq!(&big.entries()[..k], small.entries());
    }
}

#[test]
fn batch_search_matches_single_queries() {
    let mut r = rng(9);
    let rows = gaussian_rows(&mut r, "d", 700, 12);
    let queries = EmbeddingMatrix::from_rows(12, gaussian_rows(&mut r, "q", 25, 12)).unwrap();
    let index = FlatIndex::new(EmbeddingMatrix::from_rows(12, rows).unwrap());
    let batch = index.batch_search(&queries, 17).unwrap();
    for (i, list) in batch.iter().enumerate() {
        assert_eq!(*list, index.search(queries.row(i), 17).unwrap());
    }
}

#[test]
fn saved_index_searches_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(10);
    let rows = gaussian_rows(&mut r, "d", 400, 6);
    let index = FlatIndex::new(EmbeddingMatrix::from_rows(6, rows.clone()).unwrap());
    let path = dir.path().join("docs.idx");
    index.save(&path).unwrap();
    let back = load_index(&path).unwrap();
    assert_eq!(back, index);
    assert_eq!(back.search(&rows[3].1, 20).unwrap(), index.search(&rows[3].1, 20).unwrap());
    let first = std::fs::read(&path).unwrap();
    back.save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);
}
