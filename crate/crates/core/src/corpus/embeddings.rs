//! Per-token embedding tables keyed by `(doc_key, token_index)`.
//!
//! Binary layout, integers little-endian:
//!
//! ```text
//! "ACNE" | version: u32 | dim: u32 | count: u64 | record × count
//! record = key_len: u16 | doc_key bytes | token: u32 | f64 × dim
//! ```
//!
//! Records are written in `(doc_key, token)` order so equal tables give equal bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::document::Document;
use crate::error::{CorefError, Result};

pub const MAGIC: &[u8; 4] = b"ACNE";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    docs: BTreeMap<String, BTreeMap<u32, Vec<f64>>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(CorefError::EmbeddingFormat("dimension must be positive".into()));
        }
        Ok(EmbeddingTable { dim, docs: BTreeMap::new() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.docs.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&mut self, doc_key: &str, token: usize, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(CorefError::EmbeddingFormat(format!(
                "vector of length {} in a table of dimension {}",
                vector.len(),
                self.dim
            )));
        }
        let token = u32::try_from(token).map_err(|_| CorefError::EmbeddingFormat("token index too large".into()))?;
        self.docs.entry(doc_key.to_string()).or_default().insert(token, vector);
        Ok(())
    }

    pub fn get(&self, doc_key: &str, token: usize) -> Option<&[f64]> {
        let token = u32::try_from(token).ok()?;
        self.docs.get(doc_key)?.get(&token).map(Vec::as_slice)
    }

    /// Row-major `[num_tokens × dim]` matrix for `doc`, or the first missing token.
    pub fn document_matrix(&self, doc: &Document) -> Result<Vec<f64>> {
        let n = doc.num_tokens();
        let missing = |token| CorefError::MissingEmbedding { doc_key: doc.doc_key.clone(), token };
        let rows = self.docs.get(&doc.doc_key).ok_or_else(|| missing(0))?;
        let mut out = Vec::with_capacity(n * self.dim);
        for t in 0..n {
            let row = rows.get(&(t as u32)).ok_or_else(|| missing(t))?;
            out.extend_from_slice(row);
        }
        Ok(out)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        for (key, rows) in &self.docs {
            let key_len = u16::try_from(key.len())
                .map_err(|_| CorefError::EmbeddingFormat(format!("document key too long: {key}")))?;
            for (token, vector) in rows {
                out.write_all(&key_len.to_le_bytes())?;
                out.write_all(key.as_bytes())?;
                out.write_all(&token.to_le_bytes())?;
                for v in vector {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(CorefError::EmbeddingFormat("bad magic".into()));
        }
        let version = u32::from_le_bytes(cur.array()?);
        if version != VERSION {
            return Err(CorefError::EmbeddingFormat(format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(cur.array()?) as usize;
        let count = u64::from_le_bytes(cur.array()?);
        let mut table = EmbeddingTable::new(dim)?;
        for _ in 0..count {
            let key_len = u16::from_le_bytes(cur.array()?) as usize;
            let key = std::str::from_utf8(cur.take(key_len)?)
                .map_err(|_| CorefError::EmbeddingFormat("document key is not UTF-8".into()))?
                .to_string();
            let token = u32::from_le_bytes(cur.array()?) as usize;
            let vector = cur
                .take(dim * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            table.insert(&key, token, vector)?;
        }
        if cur.pos != bytes.len() {
            return Err(CorefError::EmbeddingFormat(format!("{} trailing bytes", bytes.len() - cur.pos)));
        }
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| CorefError::file(path, e))?;
        self.write(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| CorefError::file(path, e))?;
        Self::read(std::io::BufReader::new(file))
    }

    /// Adds every entry of `other`; dimensions must agree.
    pub fn merge(&mut self, other: EmbeddingTable) -> Result<()> {
        if other.dim != self.dim {
            return Err(CorefError::EmbeddingFormat(format!("cannot merge dimension {} into {}", other.dim, self.dim)));
        }
        for (key, rows) in other.docs {
            self.docs.entry(key).or_default().extend(rows);
        }
        Ok(())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(CorefError::EmbeddingFormat(format!("truncated at byte {}", self.pos)));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // separator so ("ab","c") and ("a","bc") differ
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Weight of the position-in-sentence component relative to the word component.
const POSITION_WEIGHT: f64 = 0.1;
const POSITION_BUCKETS: usize = 8;

/// Deterministic stand-in for contextual embeddings: each token gets a pseudo-random
/// vector determined by `(seed, lowercased word)` plus a small component for its
/// coarse position in the sentence. Equal words get nearly equal vectors, so models
/// can learn lexical identity.
pub fn hash_embeddings(docs: &[Document], dim: usize, seed: u64) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::new(dim)?;
    let positions: Vec<Vec<f64>> = (0..POSITION_BUCKETS)
        .map(|b| unit_vector(fnv1a(&[&seed.to_le_bytes(), b"position", &b.to_le_bytes()]), dim))
        .collect();
    let mut cache: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for doc in docs {
        for (t, (word, pos)) in doc.tokens().zip(doc.positions_in_sentence()).enumerate() {
            let key = word.to_lowercase();
            let base = cache
                .entry(key)
                .or_insert_with_key(|k| unit_vector(fnv1a(&[&seed.to_le_bytes(), b"word", k.as_bytes()]), dim));
            let p = &positions[(pos / 4).min(POSITION_BUCKETS - 1)];
            let v = base.iter().zip(p).map(|(b, p)| b + POSITION_WEIGHT * p).collect();
            table.insert(&doc.doc_key, t, v)?;
        }
    }
    Ok(table)
}

/// Uniform entries scaled so the expected squared norm is 1.
fn unit_vector(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = (3.0 / dim as f64).sqrt();
    (0..dim).map(|_| rng.gen_range(-bound..bound)).collect()
}
