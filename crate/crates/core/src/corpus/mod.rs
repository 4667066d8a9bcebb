//! Reading and writing corpora and token embeddings.

pub mod conll;
pub mod embeddings;
pub mod jsonl;
pub mod synth;

use std::path::Path;

pub use conll::{parse_conll, write_conll};
pub use embeddings::{hash_embeddings, EmbeddingTable};
pub use jsonl::{parse_jsonl, read_jsonl_file, write_jsonl, write_jsonl_file};
pub use synth::{generate, SynthConfig};

use crate::document::Document;
use crate::error::{CorefError, Result};

/// Reads a corpus, choosing the parser by extension: `.jsonl`/`.json` are JSON
/// lines, anything else is CoNLL-2012.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("json") => read_jsonl_file(path),
        _ => {
            let file = std::fs::File::open(path).map_err(|e| CorefError::file(path, e))?;
            parse_conll(std::io::BufReader::new(file))
        }
    }
}
