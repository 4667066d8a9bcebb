//! Independent, definition-level reference implementations used as test oracles.
//! Deliberately naive: no shared code with the library under test.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use corefrl::Span;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Clusters = Vec<Vec<Span>>;

fn non_singletons(c: &Clusters) -> Vec<BTreeSet<Span>> {
    c.iter().filter(|k| k.len() >= 2).map(|k| k.iter().copied().collect()).collect()
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn div(n: f64, d: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        n / d
    }
}

/// MUC: for each key cluster, count the pieces it is cut into by the response
/// (mentions absent from the response are pieces of their own).
pub fn muc(gold: &Clusters, pred: &Clusters) -> (f64, f64, f64) {
    let side = |keys: &[BTreeSet<Span>], resp: &[BTreeSet<Span>]| {
        let mut num = 0.0;
        let mut den = 0.0;
        for k in keys {
            let mut pieces: Vec<BTreeSet<Span>> = Vec::new();
            for r in resp {
                let inter: BTreeSet<Span> = k.intersection(r).copied().collect();
                if !inter.is_empty() {
                    pieces.push(inter);
                }
            }
            let covered: usize = pieces.iter().map(BTreeSet::len).sum();
            let partitions = pieces.len() + (k.len() - covered);
            num += (k.len() - partitions) as f64;
            den += (k.len() - 1) as f64;
        }
        (num, den)
    };
    let (g, p) = (non_singletons(gold), non_singletons(pred));
    let (rn, rd) = side(&g, &p);
    let (pn, pd) = side(&p, &g);
    let (pr, rc) = (div(pn, pd), div(rn, rd));
    (pr, rc, f1(pr, rc))
}

/// B³: average over each side's mentions of the overlap fraction of the two
/// clusters containing the mention.
pub fn b_cubed(gold: &Clusters, pred: &Clusters) -> (f64, f64, f64) {
    let (g, p) = (non_singletons(gold), non_singletons(pred));
    let find = |cs: &[BTreeSet<Span>], m: &Span| cs.iter().find(|c| c.contains(m)).cloned().unwrap_or_default();
    let mut r_sum = 0.0;
    let mut r_n = 0.0;
    for c in &g {
        for m in c {
            let other = find(&p, m);
            r_sum += c.intersection(&other).count() as f64 / c.len() as f64;
            r_n += 1.0;
        }
    }
    let mut p_sum = 0.0;
    let mut p_n = 0.0;
    for c in &p {
        for m in c {
            let other = find(&g, m);
            p_sum += c.intersection(&other).count() as f64 / c.len() as f64;
            p_n += 1.0;
        }
    }
    let (pr, rc) = (div(p_sum, p_n), div(r_sum, r_n));
    (pr, rc, f1(pr, rc))
}

fn phi4(a: &BTreeSet<Span>, b: &BTreeSet<Span>) -> f64 {
    2.0 * a.intersection(b).count() as f64 / (a.len() + b.len()) as f64
}

/// Best total similarity over all one-to-one alignments, by exhaustive search.
pub fn best_alignment(sim: &[Vec<f64>]) -> f64 {
    fn go(row: usize, sim: &[Vec<f64>], used: &mut Vec<bool>) -> f64 {
        if row == sim.len() {
            return 0.0;
        }
        // leave this row unmatched
        let mut best = go(row + 1, sim, used);
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                best = best.max(sim[row][c] + go(row + 1, sim, used));
                used[c] = false;
            }
        }
        best
    }
    let cols = sim.first().map_or(0, Vec::len);
    go(0, sim, &mut vec![false; cols])
}

pub fn ceaf_phi4(gold: &Clusters, pred: &Clusters) -> (f64, f64, f64) {
    let (g, p) = (non_singletons(gold), non_singletons(pred));
    let sim: Vec<Vec<f64>> = g.iter().map(|a| p.iter().map(|b| phi4(a, b)).collect()).collect();
    let total = best_alignment(&sim);
    let (pr, rc) = (div(total, p.len() as f64), div(total, g.len() as f64));
    (pr, rc, f1(pr, rc))
}

/// Connected components with ≥ 2 nodes of the undirected link graph on `1..=n`, by
/// breadth-first search.
pub fn components(links: &[(usize, usize)], n: usize) -> Vec<Vec<usize>> {
    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(a, b) in links {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    let mut seen = vec![false; n + 1];
    let mut out = Vec::new();
    for start in 1..=n {
        if seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(x) = queue.pop_front() {
            comp.push(x);
            for &y in adj.get(&x).into_iter().flatten() {
                if !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
        if comp.len() > 1 {
            comp.sort();
            out.push(comp);
        }
    }
    out.sort();
    out
}

/// Random clustering of a random subset of mentions `0..max_mentions` into at most
/// `max_clusters` clusters (singletons included).
pub fn random_clusters(rng: &mut ChaCha8Rng, max_mentions: usize, max_clusters: usize) -> Clusters {
    let k = rng.gen_range(1..=max_clusters);
    let mut clusters: Clusters = vec![Vec::new(); k];
    for m in 0..max_mentions {
        if rng.gen_bool(0.75) {
            clusters[rng.gen_range(0..k)].push(Span::new(m, m));
        }
    }
    clusters.retain(|c| !c.is_empty());
    clusters
}
