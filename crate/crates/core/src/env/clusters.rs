//! Turning pairwise links into clusters.

use std::collections::BTreeMap;

use crate::document::{canonicalize_clusters, Cluster, Span};

/// Disjoint-set forest with path halving and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }
}

/// Connected components of the link graph over mention indices `1..=n`, keeping
/// only components with at least two mentions. Components are sorted internally and
/// ordered by their smallest member.
pub fn links_to_clusters(links: &[(usize, usize)], n: usize) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(n + 1);
    for &(i, j) in links {
        debug_assert!(j >= 1 && j < i && i <= n, "invalid link ({i}, {j}) for n = {n}");
        uf.union(i, j);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for m in 1..=n {
        let root = uf.find(m);
        groups.entry(root).or_default().push(m);
    }
    let mut clusters: Vec<Vec<usize>> = groups.into_values().filter(|c| c.len() > 1).collect();
    clusters.sort();
    clusters
}

/// Like [`links_to_clusters`], mapping 1-based mention index `k` to `spans[k - 1]`.
pub fn span_clusters(links: &[(usize, usize)], spans: &[Span]) -> Vec<Cluster> {
    let mut clusters: Vec<Cluster> = links_to_clusters(links, spans.len())
        .into_iter()
        .map(|c| c.into_iter().map(|k| spans[k - 1]).collect())
        .collect();
    canonicalize_clusters(&mut clusters);
    clusters
}
