//! Candidate spans, span representations, mention scores and pruning.

use corefrl_nn::{Embedding, Graph, Init, ParamId, ParamStore, Tensor, Var};
use rand::Rng;

use crate::document::{Document, Span};
use crate::error::{CorefError, Result};

/// Every span of at most `max_width` tokens inside one sentence, ordered by
/// `(start, end)`.
pub fn enumerate_spans(doc: &Document, max_width: usize) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut offset = 0;
    for sentence in &doc.sentences {
        let len = sentence.len();
        for s in 0..len {
            for e in s..len.min(s + max_width) {
                spans.push(Span::new(offset + s, offset + e));
            }
        }
        offset += len;
    }
    spans
}

/// Attention-weighted head of a span: logits `v_o · x_t`, softmax over the span's
/// tokens, weighted sum of the token rows of `tokens` (`[w × d]`).
pub fn head_attention(g: &mut Graph, tokens: Var, v_o: Var) -> Result<Var> {
    let logits = g.matvec(tokens, v_o)?;
    let alpha = g.softmax(logits, 0)?;
    Ok(g.vecmat(alpha, tokens)?)
}

/// Learned parts of the span representation: the head-attention vector and the
/// span-width embedding.
#[derive(Clone, Debug)]
pub struct SpanModel {
    pub v_o: ParamId,
    pub width: Embedding,
    pub token_dim: usize,
    pub feature_dim: usize,
    pub max_width: usize,
}

impl SpanModel {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        token_dim: usize,
        feature_dim: usize,
        max_width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(SpanModel {
            v_o: store.add("span.v_o", &[token_dim], Init::Xavier, rng)?,
            width: Embedding::new(store, "span.width", max_width, feature_dim, rng)?,
            token_dim,
            feature_dim,
            max_width,
        })
    }

    /// Length of `[x_start; x_end; head; width]`.
    pub fn repr_dim(&self) -> usize {
        3 * self.token_dim + self.feature_dim
    }

    pub fn width_bucket(&self, span: Span) -> usize {
        span.width().min(self.max_width) - 1
    }

    /// Representations of `spans` over the token matrix `tokens` (`[T × d]`,
    /// row-major). The token matrix is a constant; gradients reach `v_o` and the
    /// width table.
    pub fn represent(&self, g: &mut Graph, tokens: &Tensor, spans: &[Span]) -> Result<Vec<Var>> {
        if tokens.rank() != 2 || tokens.cols() != self.token_dim {
            return Err(CorefError::Invalid(format!(
                "token matrix shape {:?} does not match embedding dimension {}",
                tokens.shape(),
                self.token_dim
            )));
        }
        let all = g.constant(tokens.clone());
        let v_o = g.param(self.v_o);
        let mut out = Vec::with_capacity(spans.len());
        for &span in spans {
            if span.end >= tokens.rows() {
                return Err(CorefError::Invalid(format!("span {span} outside document")));
            }
            let start = g.row(all, span.start)?;
            let end = g.row(all, span.end)?;
            let rows = tokens.data()[span.start * self.token_dim..(span.end + 1) * self.token_dim].to_vec();
            let x = g.constant(Tensor::matrix(span.width(), self.token_dim, rows)?);
            let head = head_attention(g, x, v_o)?;
            let width = self.width.lookup(g, self.width_bucket(span))?;
            out.push(g.concat(&[start, end, head, width])?);
        }
        Ok(out)
    }
}

/// `1.0` for spans that are gold mentions, else `0.0`.
pub fn mention_labels(spans: &[Span], gold: &[Span]) -> Vec<f64> {
    let gold: std::collections::HashSet<&Span> = gold.iter().collect();
    spans.iter().map(|s| if gold.contains(s) { 1.0 } else { 0.0 }).collect()
}

/// Mean binary cross-entropy of the mention logits against their labels.
pub fn detection_loss(g: &mut Graph, logits: &[Var], labels: &[f64]) -> Result<Var> {
    if logits.is_empty() {
        return Err(CorefError::Invalid("detection loss over an empty span set".into()));
    }
    let z = g.concat(logits)?;
    Ok(g.bce_with_logits(z, labels)?)
}

/// Keeps the `⌈ratio · num_tokens⌉` highest-scoring spans (ties: earlier start, then
/// shorter width). `spans` must be ordered by `(start, end)`; the returned indices
/// are ascending, so the kept spans stay in that order.
pub fn prune(spans: &[Span], logits: &[f64], ratio: f64, num_tokens: usize) -> Vec<usize> {
    debug_assert_eq!(spans.len(), logits.len());
    let keep = ((ratio * num_tokens as f64).ceil() as usize).min(spans.len());
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by(|&a, &b| {
        logits[b]
            .total_cmp(&logits[a])
            .then(spans[a].start.cmp(&spans[b].start))
            .then(spans[a].width().cmp(&spans[b].width()))
    });
    order.truncate(keep);
    order.sort_unstable();
    order
}
