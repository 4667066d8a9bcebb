//! Coreference metrics: MUC, B³, CEAF-φ4 and their average.
//!
//! All metrics drop singleton clusters first. Corpus scores sum numerators and
//! denominators over documents before dividing.

pub mod assignment;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::document::{drop_singletons, Cluster, Span};

pub use assignment::max_weight_assignment;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Prf { precision, recall, f1 }
    }
}

/// Numerators and denominators of one metric.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Counts {
    pub p_num: f64,
    pub p_den: f64,
    pub r_num: f64,
    pub r_den: f64,
}

impl Counts {
    pub fn prf(&self) -> Prf {
        let ratio = |n: f64, d: f64| if d > 0.0 { n / d } else { 0.0 };
        Prf::from_pr(ratio(self.p_num, self.p_den), ratio(self.r_num, self.r_den))
    }

    pub fn add(&mut self, other: Counts) {
        self.p_num += other.p_num;
        self.p_den += other.p_den;
        self.r_num += other.r_num;
        self.r_den += other.r_den;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub muc: Prf,
    pub b3: Prf,
    pub ceaf_phi4: Prf,
    pub avg_f1: f64,
}

pub fn avg_f1(muc: f64, b3: f64, ceaf: f64) -> f64 {
    (muc + b3 + ceaf) / 3.0
}

fn owner_map(clusters: &[Cluster]) -> HashMap<Span, usize> {
    clusters.iter().enumerate().flat_map(|(c, cl)| cl.iter().map(move |&s| (s, c))).collect()
}

/// Σ(|S| − |partition of S by `other`|) and Σ(|S| − 1) over clusters `S` of `keys`.
fn muc_side(keys: &[Cluster], other: &[Cluster]) -> (f64, f64) {
    let owner = owner_map(other);
    let mut num = 0.0;
    let mut den = 0.0;
    for s in keys {
        let mut parts = std::collections::HashSet::new();
        let mut unowned = 0;
        for m in s {
            match owner.get(m) {
                Some(&c) => {
                    parts.insert(c);
                }
                None => unowned += 1,
            }
        }
        num += (s.len() - parts.len() - unowned) as f64;
        den += (s.len() - 1) as f64;
    }
    (num, den)
}

pub fn muc_counts(gold: &[Cluster], pred: &[Cluster]) -> Counts {
    let (gold, pred) = (drop_singletons(gold), drop_singletons(pred));
    let (r_num, r_den) = muc_side(&gold, &pred);
    let (p_num, p_den) = muc_side(&pred, &gold);
    Counts { p_num, p_den, r_num, r_den }
}

/// Σ over mentions `m` of `keys` of `|K_m ∩ O_m| / |K_m|`, and the mention count.
fn b3_side(keys: &[Cluster], other: &[Cluster]) -> (f64, f64) {
    let owner = owner_map(other);
    let mut num = 0.0;
    let mut den = 0.0;
    for k in keys {
        let mut overlap: HashMap<usize, usize> = HashMap::new();
        for m in k {
            if let Some(&c) = owner.get(m) {
                *overlap.entry(c).or_default() += 1;
            }
        }
        // every mention of k in other-cluster c shares |k ∩ c| mentions
        let shared: usize = overlap.values().map(|&n| n * n).sum();
        num += shared as f64 / k.len() as f64;
        den += k.len() as f64;
    }
    (num, den)
}

pub fn b3_counts(gold: &[Cluster], pred: &[Cluster]) -> Counts {
    let (gold, pred) = (drop_singletons(gold), drop_singletons(pred));
    let (r_num, r_den) = b3_side(&gold, &pred);
    let (p_num, p_den) = b3_side(&pred, &gold);
    Counts { p_num, p_den, r_num, r_den }
}

pub fn phi4(a: &[Span], b: &[Span]) -> f64 {
    let common = a.iter().filter(|m| b.contains(m)).count();
    2.0 * common as f64 / (a.len() + b.len()) as f64
}

pub fn ceaf_phi4_counts(gold: &[Cluster], pred: &[Cluster]) -> Counts {
    let (gold, pred) = (drop_singletons(gold), drop_singletons(pred));
    let sim: Vec<Vec<f64>> = gold.iter().map(|g| pred.iter().map(|p| phi4(g, p)).collect()).collect();
    let (total, _) = max_weight_assignment(&sim);
    Counts { p_num: total, p_den: pred.len() as f64, r_num: total, r_den: gold.len() as f64 }
}

pub fn muc(gold: &[Cluster], pred: &[Cluster]) -> Prf {
    muc_counts(gold, pred).prf()
}

pub fn b_cubed(gold: &[Cluster], pred: &[Cluster]) -> Prf {
    b3_counts(gold, pred).prf()
}

pub fn ceaf_phi4(gold: &[Cluster], pred: &[Cluster]) -> Prf {
    ceaf_phi4_counts(gold, pred).prf()
}

/// Corpus-level accumulation of all three metrics.
#[derive(Clone, Debug, Default)]
pub struct MetricAccumulator {
    pub muc: Counts,
    pub b3: Counts,
    pub ceaf: Counts,
}

impl MetricAccumulator {
    pub fn add_document(&mut self, gold: &[Cluster], pred: &[Cluster]) {
        self.muc.add(muc_counts(gold, pred));
        self.b3.add(b3_counts(gold, pred));
        self.ceaf.add(ceaf_phi4_counts(gold, pred));
    }

    pub fn report(&self) -> MetricReport {
        let (muc, b3, ceaf_phi4) = (self.muc.prf(), self.b3.prf(), self.ceaf.prf());
        MetricReport { muc, b3, ceaf_phi4, avg_f1: avg_f1(muc.f1, b3.f1, ceaf_phi4.f1) }
    }
}

/// Corpus report over paired `(gold, predicted)` cluster sets.
pub fn evaluate<'a, I>(pairs: I) -> MetricReport
where
    I: IntoIterator<Item = (&'a [Cluster], &'a [Cluster])>,
{
    let mut acc = MetricAccumulator::default();
    for (gold, pred) in pairs {
        acc.add_document(gold, pred);
    }
    acc.report()
}
