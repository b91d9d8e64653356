//! Dense retrieval that borrows relevance evidence from a click log.
//!
//! A query is scored against the document collection with exact
//! inner-product search, and against previously logged queries; documents
//! clicked for similar logged queries receive extra score weighted by that
//! similarity.
//!
//! Modules, roughly in pipeline order:
//!
//! * [`corpus`]: documents, queries, click logs and their file formats
//! * [`embed`]: embedding matrices, the `LDER` store and embedding providers
//! * [`index`]: exact top-k search ([`index::FlatIndex`])
//! * [`lexical`]: BM25 over an inverted index
//! * [`fusion`]: the log-augmented scorer ([`fusion::Lader`])
//! * [`losses`]: in-batch and triplet training losses with gradients
//! * [`eval`]: qrels, run files and ranking metrics
//! * [`analysis`]: per-query features, regression and log-size sweeps
//! * [`synthbench`]: a seeded synthetic collection with planted topics
//! * [`cli`]: the `lader` command line
//!
//! Each capability has a runnable example under `examples/`, e.g.
//! `cargo run --example log_augmented_search`.

pub mod analysis;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod index;
pub mod lexical;
pub mod losses;
pub mod synthbench;
pub mod cli;
