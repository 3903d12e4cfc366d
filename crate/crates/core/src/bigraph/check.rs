//! Brute-force structural checks over left subsets.
//!
//! Everything except [`sampled_expansion_check`] enumerates subsets
//! exhaustively, so it is only meant for desk-scale graphs (a few hundred
//! thousand subsets).

use std::collections::BTreeMap;

use super::graph::Adjacency;
use crate::rng::{stream, stream_rng};
use crate::scalar::Scalar;

/// Outcome of an expansion check. When `holds` is false, `violating_set`
/// is the first violator in lexicographic enumeration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpansionWitness {
    pub holds: bool,
    pub violating_set: Option<Vec<usize>>,
    pub neighborhood_size: Option<usize>,
}

/// Neighborhood bitmasks for the present left nodes of a graph.
pub(crate) struct NeighborMasks {
    pub nodes: Vec<usize>,
    pub masks: Vec<Vec<u64>>,
    pub words: usize,
}

impl NeighborMasks {
    pub fn new<A: Adjacency + ?Sized>(g: &A) -> Self {
        let words = g.right_size().div_ceil(64).max(1);
        let mut nodes = Vec::new();
        let mut masks = Vec::new();
        let mut buf = Vec::new();
        for x in 0..g.left_size() {
            if !g.is_left_present(x) {
                continue;
            }
            g.neighbors_into(x, &mut buf);
            let mut m = vec![0u64; words];
            for &y in &buf {
                m[y / 64] |= 1 << (y % 64);
            }
            nodes.push(x);
            masks.push(m);
        }
        NeighborMasks {
            nodes,
            masks,
            words,
        }
    }

    /// Visits every nonempty subset of at most `k` present nodes in
    /// lexicographic order, passing the chosen positions and the size of the
    /// union of their neighborhoods. Stops early when `visit` returns false.
    pub fn for_each_subset(&self, k: usize, mut visit: impl FnMut(&[usize], usize) -> bool) {
        let k = k.min(self.nodes.len());
        if k == 0 {
            return;
        }
        let mut acc = vec![vec![0u64; self.words]; k + 1];
        let mut counts = vec![0usize; k + 1];
        let mut chosen = Vec::with_capacity(k);
        self.dfs(0, k, &mut acc, &mut counts, &mut chosen, &mut visit);
    }

    fn dfs(
        &self,
        start: usize,
        k: usize,
        acc: &mut [Vec<u64>],
        counts: &mut [usize],
        chosen: &mut Vec<usize>,
        visit: &mut impl FnMut(&[usize], usize) -> bool,
    ) -> bool {
        let depth = chosen.len();
        for i in start..self.nodes.len() {
            let (lo, hi) = acc.split_at_mut(depth + 1);
            let prev = &lo[depth];
            let next = &mut hi[0];
            let mut added = 0usize;
            for w in 0..self.words {
                let m = self.masks[i][w];
                added += (m & !prev[w]).count_ones() as usize;
                next[w] = prev[w] | m;
            }
            counts[depth + 1] = counts[depth] + added;
            chosen.push(i);
            if !visit(chosen, counts[depth + 1]) {
                return false;
            }
            if depth + 1 < k && !self.dfs(i + 1, k, acc, counts, chosen, visit) {
                return false;
            }
            chosen.pop();
        }
        true
    }
}

/// Checks `e`-expansion up to `k`: every nonempty set `S` of at most `k`
/// present left nodes has at least `e · #S` neighbors.
pub fn expansion_check<A, T>(g: &A, e: T, k: usize) -> ExpansionWitness
where
    A: Adjacency + ?Sized,
    T: Scalar,
{
    let masks = NeighborMasks::new(g);
    let mut witness = ExpansionWitness {
        holds: true,
        violating_set: None,
        neighborhood_size: None,
    };
    masks.for_each_subset(k, |chosen, n| {
        if T::of(n) < e * T::of(chosen.len()) {
            witness.holds = false;
            witness.violating_set = Some(chosen.iter().map(|&i| masks.nodes[i]).collect());
            witness.neighborhood_size = Some(n);
            false
        } else {
            true
        }
    });
    witness
}

/// Number of nonempty subsets of at most `k` out of `n` elements, saturating.
pub fn subset_count(n: usize, k: usize) -> u128 {
    let mut total: u128 = 0;
    let mut c: u128 = 1;
    for i in 1..=k.min(n) {
        c = c.saturating_mul((n - i + 1) as u128) / i as u128;
        total = total.saturating_add(c);
    }
    total
}

/// Expansion check on `samples` random sets per size `1..=k`. A failure is
/// conclusive; success is evidence only.
pub fn sampled_expansion_check<A, T>(
    g: &A,
    e: T,
    k: usize,
    samples: usize,
    seed: u64,
) -> ExpansionWitness
where
    A: Adjacency + ?Sized,
    T: Scalar,
{
    let present: Vec<usize> = (0..g.left_size())
        .filter(|&x| g.is_left_present(x))
        .collect();
    let mut rng = stream_rng(seed, stream::VERIFIER);
    for size in 1..=k.min(present.len()) {
        for _ in 0..samples {
            let set: Vec<usize> = rand::seq::index::sample(&mut rng, present.len(), size)
                .iter()
                .map(|i| present[i])
                .collect();
            let n = neighborhood(g, &set).len();
            if T::of(n) < e * T::of(size) {
                return ExpansionWitness {
                    holds: false,
                    violating_set: Some(set),
                    neighborhood_size: Some(n),
                };
            }
        }
    }
    ExpansionWitness {
        holds: true,
        violating_set: None,
        neighborhood_size: None,
    }
}

/// Largest matching of `set` into the right side, via augmenting paths.
fn matching_size<A: Adjacency + ?Sized>(g: &A, set: &[usize]) -> usize {
    let adj: Vec<Vec<usize>> = set.iter().map(|&x| g.neighbors_vec(x)).collect();
    let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
    let mut matched = 0;
    for i in 0..set.len() {
        let mut visited = Vec::new();
        if augment(i, &adj, &mut owner, &mut visited) {
            matched += 1;
        }
    }
    matched
}

fn augment(
    i: usize,
    adj: &[Vec<usize>],
    owner: &mut BTreeMap<usize, usize>,
    visited: &mut Vec<usize>,
) -> bool {
    for &y in &adj[i] {
        if visited.contains(&y) {
            continue;
        }
        visited.push(y);
        let free = match owner.get(&y) {
            None => true,
            Some(&j) => augment(j, adj, owner, visited),
        };
        if free {
            owner.insert(y, i);
            return true;
        }
    }
    false
}

/// True iff every set of at most `k` present left nodes can be matched
/// (has a system of distinct representatives). Decided by augmenting paths
/// on every set of size exactly `min(k, #present)`, which covers all smaller
/// sets.
pub fn offline_matching_check<A: Adjacency + ?Sized>(g: &A, k: usize) -> bool {
    let present: Vec<usize> = (0..g.left_size())
        .filter(|&x| g.is_left_present(x))
        .collect();
    let size = k.min(present.len());
    if size == 0 {
        return true;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        let set: Vec<usize> = idx.iter().map(|&i| present[i]).collect();
        if matching_size(g, &set) < size {
            return false;
        }
        // advance to the next combination in lexicographic order
        let n = present.len();
        let mut i = size;
        while i > 0 && idx[i - 1] == n - size + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return true;
        }
        idx[i - 1] += 1;
        for j in i..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Union of the neighborhoods of `set`, sorted.
pub fn neighborhood<A: Adjacency + ?Sized>(g: &A, set: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut buf = Vec::new();
    for &x in set {
        g.neighbors_into(x, &mut buf);
        out.extend_from_slice(&buf);
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Right nodes with exactly one neighbor in `set`, sorted.
pub fn private_neighbors<A: Adjacency + ?Sized>(g: &A, set: &[usize]) -> Vec<usize> {
    let mut hits: BTreeMap<usize, usize> = BTreeMap::new();
    let mut buf = Vec::new();
    for &x in set {
        g.neighbors_into(x, &mut buf);
        for &y in &buf {
            *hits.entry(y).or_default() += 1;
        }
    }
    hits.into_iter()
        .filter(|&(_, c)| c == 1)
        .map(|(y, _)| y)
        .collect()
}

/// A left set is critical when it has no more neighbors than elements.
pub fn is_critical<A: Adjacency + ?Sized>(g: &A, set: &[usize]) -> bool {
    neighborhood(g, set).len() <= set.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigraph::{fixtures, generate::sample_random, BiGraph};
    use crate::scalar::Rational;

    #[test]
    fn left_intro_expansion() {
        let g = fixtures::left_intro();
        assert!(expansion_check(&g, 1.0, 2).holds);
        let w = expansion_check(&g, Rational::from_integer(1), 3);
        assert!(!w.holds);
        assert_eq!(w.violating_set, Some(vec![0, 1, 2]));
        assert_eq!(w.neighborhood_size, Some(2));
    }

    #[test]
    fn complete_graph_expands_fully() {
        let g = fixtures::complete(5, 5);
        assert!(expansion_check(&g, 5_f64, 1).holds);
        assert!(!expansion_check(&g, 5.0, 2).holds);
    }

    #[test]
    fn offline_matching_on_fixtures() {
        let g = fixtures::left_intro();
        assert!(offline_matching_check(&g, 2));
        assert!(!offline_matching_check(&g, 3));
        assert!(offline_matching_check(&fixtures::right_intro(), 2));
        assert!(offline_matching_check(
            &BiGraph::build(0, 0, vec![]).unwrap(),
            3
        ));
    }

    #[test]
    fn private_neighbors_examples() {
        let g = fixtures::left_intro();
        assert_eq!(private_neighbors(&g, &[1]), vec![0, 1]);
        assert_eq!(private_neighbors(&g, &[0, 1]), vec![1]);
    }

    #[test]
    fn violator_recount_is_strictly_below() {
        for seed in 0..30 {
            let g = sample_random(9, 7, 2, seed).unwrap();
            let w = expansion_check(&g, Rational::new(3, 2), 3);
            if let Some(s) = &w.violating_set {
                let n = neighborhood(&g, s).len();
                assert!(
                    Rational::from_integer(n as i64)
                        < Rational::new(3, 2) * Rational::from_integer(s.len() as i64)
                );
            }
        }
    }

    #[test]
    fn subset_enumeration_count() {
        let g = sample_random(10, 12, 3, 4).unwrap();
        let masks = NeighborMasks::new(&g);
        let mut count = 0;
        masks.for_each_subset(3, |_, _| {
            count += 1;
            true
        });
        assert_eq!(count, 10 + 45 + 120);
    }

    #[test]
    fn subset_counts_and_sampled_check() {
        assert_eq!(subset_count(4, 2), 10);
        assert_eq!(subset_count(3, 5), 7);
        assert_eq!(subset_count(40, 4), 40 + 780 + 9880 + 91390);
        let g = crate::bigraph::fixtures::left_intro();
        let w = sampled_expansion_check(&g, 2.0, 2, 50, 1);
        assert!(!w.holds);
        assert_eq!(w.neighborhood_size, Some(1));
        assert!(
            sampled_expansion_check(&crate::bigraph::fixtures::complete(5, 5), 1.0, 5, 20, 1).holds
        );
    }
}
