//! Synthetic coreference corpora with known gold clusters.
//!
//! Each document introduces a few entities by name and refers back to them by
//! repeating the name or by a pronoun that agrees with the entity's class
//! (`he`/`she`/`it`). Mentions are embedded in short filler sentences. Every
//! name has one surface form for the whole corpus, drawn up front.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::document::{Cluster, Document, Span, UNKNOWN_GENRE};
use crate::error::{CorefError, Result};

pub const PRONOUNS: [&str; 3] = ["he", "she", "it"];

const FILLERS: [&str; 20] = [
    "the", "then", "walked", "to", "market", "and", "was", "very", "happy", "yesterday", "in", "city", "with", "a",
    "friend", "later", "again", "today", "there", "said",
];

/// Tokens that may sit between the first and last token of a multi-word name.
const CONNECTORS: [&str; 6] = ["van", "de", "la", "del", "von", "st"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// Number of distinct entity names.
    pub vocab_size: usize,
    pub num_docs: usize,
    pub entities_per_doc: usize,
    pub mentions_per_entity: usize,
    /// Probability that a non-first mention is a pronoun.
    pub pronoun_rate: f64,
    pub seed: u64,
    /// Names are `1..=max_name_width` tokens long; 1 gives single-token names.
    /// Each name keeps its width in every document.
    #[serde(default = "one")]
    pub max_name_width: usize,
    /// Name widths `w` are drawn with weight `decay^(w−1)`; 1 is uniform, smaller
    /// values make long names rarer.
    #[serde(default = "uniform")]
    pub name_width_decay: f64,
}

fn one() -> usize {
    1
}

fn uniform() -> f64 {
    1.0
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab_size: 50,
            num_docs: 100,
            entities_per_doc: 3,
            mentions_per_entity: 4,
            pronoun_rate: 0.5,
            seed: 0,
            max_name_width: 1,
            name_width_decay: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("num_docs", self.num_docs),
            ("entities_per_doc", self.entities_per_doc),
            ("mentions_per_entity", self.mentions_per_entity),
            ("max_name_width", self.max_name_width),
        ] {
            if v == 0 {
                return Err(CorefError::config(format!("{name} must be positive")));
            }
        }
        if !(self.name_width_decay > 0.0 && self.name_width_decay <= 1.0) {
            return Err(CorefError::config("name_width_decay must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.pronoun_rate) {
            return Err(CorefError::config("pronoun_rate must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Entity class of name `idx`: its pronoun index.
pub fn name_class(idx: usize) -> usize {
    idx % PRONOUNS.len()
}

pub fn generate(cfg: &SynthConfig) -> Result<Vec<Document>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lexicon: Vec<Vec<String>> = (0..cfg.vocab_size).map(|idx| name_tokens(cfg, idx, &mut rng)).collect();
    (0..cfg.num_docs).map(|k| generate_document(cfg, &lexicon, k, &mut rng)).collect()
}

fn generate_document(cfg: &SynthConfig, lexicon: &[Vec<String>], k: usize, rng: &mut ChaCha8Rng) -> Result<Document> {
    let names = pick_names(cfg, rng);
    let surface: Vec<&Vec<String>> = names.iter().map(|&idx| &lexicon[idx]).collect();

    let mut order: Vec<usize> = (0..names.len())
        .flat_map(|e| std::iter::repeat(e).take(cfg.mentions_per_entity))
        .collect();
    order.shuffle(rng);

    let mut sentences = Vec::with_capacity(order.len());
    let mut clusters: Vec<Cluster> = vec![Vec::new(); names.len()];
    let mut introduced = vec![false; names.len()];
    let mut offset = 0;
    for &e in &order {
        let mention: Vec<String> = if introduced[e] && rng.gen_bool(cfg.pronoun_rate) {
            vec![PRONOUNS[name_class(names[e])].to_string()]
        } else {
            surface[e].clone()
        };
        introduced[e] = true;
        let before = rng.gen_range(0..=1);
        let after = rng.gen_range(1..=2);
        let mut sentence: Vec<String> = (0..before).map(|_| filler(rng)).collect();
        let start = offset + sentence.len();
        clusters[e].push(Span::new(start, start + mention.len() - 1));
        sentence.extend(mention);
        sentence.extend((0..after).map(|_| filler(rng)));
        offset += sentence.len();
        sentences.push(sentence);
    }
    let mut doc = Document {
        doc_key: format!("synth_{k:05}"),
        genre: UNKNOWN_GENRE,
        speakers: vec![0; offset],
        sentences,
        clusters,
    };
    doc.canonicalize();
    doc.validate()?;
    Ok(doc)
}

/// Distinct names, preferring distinct pronoun classes so pronouns are resolvable.
fn pick_names(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut classes = [0, 1, 2];
    classes.shuffle(rng);
    let mut used: Vec<usize> = Vec::with_capacity(cfg.entities_per_doc);
    for e in 0..cfg.entities_per_doc {
        let class = classes[e % classes.len()];
        let free: Vec<usize> = (0..cfg.vocab_size).filter(|i| !used.contains(i)).collect();
        let same_class: Vec<usize> = free.iter().copied().filter(|&i| name_class(i) == class).collect();
        let pick = if let Some(&i) = same_class.choose(rng) {
            i
        } else if let Some(&i) = free.choose(rng) {
            i
        } else {
            rng.gen_range(0..cfg.vocab_size)
        };
        used.push(pick);
    }
    used
}

/// Surface form of name `idx`: `name{idx}`, or `first{idx} <connectors> last{idx}`.
fn name_tokens(cfg: &SynthConfig, idx: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let width = if cfg.max_name_width == 1 {
        1
    } else if cfg.name_width_decay == 1.0 {
        rng.gen_range(1..=cfg.max_name_width)
    } else {
        let weights = (0..cfg.max_name_width as i32).map(|k| cfg.name_width_decay.powi(k));
        WeightedIndex::new(weights).expect("positive weights").sample(rng) + 1
    };
    if width == 1 {
        return vec![format!("name{idx}")];
    }
    let mut tokens = vec![format!("first{idx}")];
    tokens.extend((0..width - 2).map(|_| CONNECTORS.choose(rng).unwrap().to_string()));
    tokens.push(format!("last{idx}"));
    tokens
}

fn filler(rng: &mut ChaCha8Rng) -> String {
    FILLERS.choose(rng).unwrap().to_string()
}
