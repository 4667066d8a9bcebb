//! Tokenized documents with gold coreference clusters.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{CorefError, Result};

/// Inclusive token interval `[start, end]` over the flattened document.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }
}

impl From<(usize, usize)> for Span {
    fn from((start, end): (usize, usize)) -> Self {
        Span { start, end }
    }
}

impl From<Span> for (usize, usize) {
    fn from(s: Span) -> Self {
        (s.start, s.end)
    }
}

impl std::fmt::Display for Span {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

pub type Cluster = Vec<Span>;

/// The seven OntoNotes genres; anything else maps to [`UNKNOWN_GENRE`].
pub const GENRES: [&str; 7] = ["bc", "bn", "mz", "nw", "pt", "tc", "wb"];
pub const UNKNOWN_GENRE: usize = GENRES.len();
pub const NUM_GENRES: usize = GENRES.len() + 1;

pub fn genre_id(doc_key: &str) -> usize {
    let prefix = doc_key.split('/').next().unwrap_or("");
    GENRES.iter().position(|&g| g == prefix).unwrap_or(UNKNOWN_GENRE)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub doc_key: String,
    #[serde(default)]
    pub genre: usize,
    pub sentences: Vec<Vec<String>>,
    /// One speaker id per token of the flattened document.
    pub speakers: Vec<usize>,
    pub clusters: Vec<Cluster>,
}

impl Document {
    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }

    /// Sentence index of every token.
    pub fn sentence_ids(&self) -> Vec<usize> {
        self.sentences
            .iter()
            .enumerate()
            .flat_map(|(s, sent)| std::iter::repeat(s).take(sent.len()))
            .collect()
    }

    /// Position of every token within its sentence.
    pub fn positions_in_sentence(&self) -> Vec<usize> {
        self.sentences.iter().flat_map(|sent| 0..sent.len()).collect()
    }

    pub fn gold_mentions(&self) -> Vec<Span> {
        let mut spans: Vec<Span> = self.clusters.iter().flatten().copied().collect();
        spans.sort();
        spans.dedup();
        spans
    }

    /// Checks the structural invariants: spans inside the document, no span in two
    /// clusters or twice in one, and one speaker per token.
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| CorefError::InvalidDocument { doc_key: self.doc_key.clone(), msg };
        let n = self.num_tokens();
        if self.speakers.len() != n {
            return Err(err(format!("{} speakers for {} tokens", self.speakers.len(), n)));
        }
        if self.sentences.iter().any(Vec::is_empty) {
            return Err(err("empty sentence".into()));
        }
        let mut owner = HashMap::new();
        for (c, cluster) in self.clusters.iter().enumerate() {
            if cluster.is_empty() {
                return Err(err(format!("cluster {c} is empty")));
            }
            for span in cluster {
                if span.start > span.end || span.end >= n {
                    return Err(err(format!("span {span} outside document of {n} tokens")));
                }
                if let Some(prev) = owner.insert(*span, c) {
                    return Err(err(format!("span {span} appears in clusters {prev} and {c}")));
                }
            }
        }
        Ok(())
    }

    /// Sorts spans within clusters and clusters by their first span.
    pub fn canonicalize(&mut self) {
        canonicalize_clusters(&mut self.clusters);
    }
}

pub fn canonicalize_clusters(clusters: &mut Vec<Cluster>) {
    for c in clusters.iter_mut() {
        c.sort();
        c.dedup();
    }
    clusters.retain(|c| !c.is_empty());
    clusters.sort();
}

/// Clusters with at least two mentions, canonically ordered.
pub fn drop_singletons(clusters: &[Cluster]) -> Vec<Cluster> {
    let mut out: Vec<Cluster> = clusters.iter().filter(|c| c.len() > 1).cloned().collect();
    canonicalize_clusters(&mut out);
    out
}
