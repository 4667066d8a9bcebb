//! Greedy inference and corpus evaluation on a frozen model.

use corefrl_nn::Graph;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingTable;
use crate::document::{drop_singletons, Cluster, Document};
use crate::env::{span_clusters, EpisodeRecord};
use crate::error::Result;
use crate::metrics::{evaluate, MetricReport};
use crate::model::CorefModel;
use crate::trainer::episode::{rollout, token_matrix, Candidates, Mentions, RolloutOptions};

/// Predicted clusters of one document, as written by `predict`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub doc_key: String,
    pub clusters: Vec<Cluster>,
}

/// Greedy episode over `doc`; returns non-singleton clusters and the step trace.
pub fn decode_with_trace(
    model: &CorefModel,
    doc: &Document,
    embeddings: &EmbeddingTable,
) -> Result<(Vec<Cluster>, EpisodeRecord)> {
    let Some(tokens) = token_matrix(doc, embeddings)? else {
        return Ok((Vec::new(), EpisodeRecord { steps: Vec::new(), terminal: true }));
    };
    let mut g = Graph::new(&model.store);
    let candidates = Candidates::build(&mut g, model, doc, &tokens, None)?;
    let keep = candidates.prune(&g, model.config.prune_ratio, doc.num_tokens());
    let mentions = Mentions::select(&candidates, &keep);
    let mut oracle = mentions.oracle(&g, model, doc)?;
    let opts = RolloutOptions {
        credit: model.config.reward_credit,
        score_feature: model.config.score_feature,
        with_critic: false,
    };
    let out = rollout(&mut g, model, &mentions, &mut oracle, None, opts)?;
    Ok((drop_singletons(&span_clusters(&out.links, &mentions.spans)), out.record))
}

pub fn decode(model: &CorefModel, doc: &Document, embeddings: &EmbeddingTable) -> Result<Vec<Cluster>> {
    Ok(decode_with_trace(model, doc, embeddings)?.0)
}

/// Decodes every document (in parallel); output order follows `docs`.
pub fn predict_corpus(model: &CorefModel, docs: &[Document], embeddings: &EmbeddingTable) -> Result<Vec<Prediction>> {
    docs.par_iter()
        .map(|doc| {
            Ok(Prediction { doc_key: doc.doc_key.clone(), clusters: decode(model, doc, embeddings)? })
        })
        .collect()
}

/// Corpus-level metrics of `predictions` against the gold clusters of `docs`,
/// matched by `doc_key`; a document without a prediction counts as empty.
pub fn score_predictions(docs: &[Document], predictions: &[Prediction]) -> Result<MetricReport> {
    let by_key: std::collections::HashMap<&str, &Prediction> =
        predictions.iter().map(|p| (p.doc_key.as_str(), p)).collect();
    let empty: Vec<Cluster> = Vec::new();
    Ok(evaluate(docs.iter().map(|d| {
        let pred = by_key.get(d.doc_key.as_str()).map_or(&empty, |p| &p.clusters);
        (d.clusters.as_slice(), pred.as_slice())
    })))
}

pub fn evaluate_corpus(model: &CorefModel, docs: &[Document], embeddings: &EmbeddingTable) -> Result<MetricReport> {
    let predictions = predict_corpus(model, docs, embeddings)?;
    score_predictions(docs, &predictions)
}

/// Gold-mention recall of one width bucket `lo..=hi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketRecall {
    pub lo: usize,
    pub hi: usize,
    pub gold: usize,
    pub detected: usize,
    /// `None` when the bucket holds no gold mention.
    pub recall: Option<f64>,
}

/// Width buckets used for reporting detection recall by span length.
pub const WIDTH_BUCKETS: [(usize, usize); 4] = [(1, 2), (3, 4), (5, 7), (8, 10)];

/// Evaluation-mode mention logits of every candidate span of `doc`.
pub fn candidate_logits(
    model: &CorefModel,
    doc: &Document,
    embeddings: &EmbeddingTable,
) -> Result<Vec<(crate::document::Span, f64)>> {
    let Some(tokens) = token_matrix(doc, embeddings)? else {
        return Ok(Vec::new());
    };
    let mut g = Graph::new(&model.store);
    let c = Candidates::build(&mut g, model, doc, &tokens, None)?;
    Ok(c.spans.iter().copied().zip(c.logit_values(&g)).collect())
}

/// Per-bucket recall of gold mentions among spans with a positive mention logit.
pub fn mention_detection_by_width(
    model: &CorefModel,
    docs: &[Document],
    embeddings: &EmbeddingTable,
    buckets: &[(usize, usize)],
) -> Result<Vec<BucketRecall>> {
    let per_doc: Vec<Vec<(usize, bool)>> = docs
        .par_iter()
        .map(|doc| {
            let logits: std::collections::HashMap<_, _> = candidate_logits(model, doc, embeddings)?.into_iter().collect();
            Ok(doc
                .gold_mentions()
                .into_iter()
                .map(|s| (s.width(), logits.get(&s).is_some_and(|&l| l > 0.0)))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(count_by_width(per_doc.iter().flatten().copied(), buckets))
}

/// Buckets `(width, detected)` observations.
pub fn count_by_width(observations: impl Iterator<Item = (usize, bool)>, buckets: &[(usize, usize)]) -> Vec<BucketRecall> {
    let mut out: Vec<BucketRecall> =
        buckets.iter().map(|&(lo, hi)| BucketRecall { lo, hi, gold: 0, detected: 0, recall: None }).collect();
    for (width, hit) in observations {
        if let Some(b) = out.iter_mut().find(|b| (b.lo..=b.hi).contains(&width)) {
            b.gold += 1;
            b.detected += usize::from(hit);
        }
    }
    for b in &mut out {
        b.recall = (b.gold > 0).then(|| b.detected as f64 / b.gold as f64);
    }
    out
}

/// Fraction of all gold mentions detected (positive logit).
pub fn mention_recall(model: &CorefModel, docs: &[Document], embeddings: &EmbeddingTable) -> Result<f64> {
    let all = mention_detection_by_width(model, docs, embeddings, &[(1, usize::MAX)])?;
    Ok(all[0].recall.unwrap_or(0.0))
}
