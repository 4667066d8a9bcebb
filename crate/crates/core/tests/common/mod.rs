#![allow(dead_code)]

pub mod gradcases;
pub mod oracles;

use corefrl::corpus::{hash_embeddings, synth::generate, EmbeddingTable, SynthConfig};
use corefrl::trainer::TrainConfig;
use corefrl::Document;

/// A model small enough for exhaustive finite-difference checks.
pub fn tiny_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 1,
        max_span_width: 3,
        feature_dim: 2,
        lstm_hidden: 3,
        ffnn_hidden: 4,
        ffnn_out: 3,
        seed,
        ..TrainConfig::default()
    }
}

/// Small synthetic corpus with hash embeddings of dimension `dim`.
pub fn small_corpus(num_docs: usize, dim: usize, seed: u64) -> (Vec<Document>, EmbeddingTable) {
    let cfg = SynthConfig { num_docs, seed, ..SynthConfig::default() };
    let docs = generate(&cfg).unwrap();
    let table = hash_embeddings(&docs, dim, seed).unwrap();
    (docs, table)
}
