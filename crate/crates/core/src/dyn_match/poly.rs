//! Polynomial-time dynamic matching with protected nodes and virtual matches.
//!
//! A left node is protected when at least `⌈D/3⌉` of its neighbors carry a
//! match of either kind. Protected nodes without a standard match always hold
//! a virtual match, reserved for their next request.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::bigraph::{Adjacency, BiGraph};
use crate::game::{MatchError, Matcher};

#[derive(Debug, Clone)]
pub struct PolyMatcher {
    graph: Arc<BiGraph>,
    right_adj: Arc<Vec<Vec<usize>>>,
    capacity: usize,
    threshold: usize,
    standard: Vec<Option<usize>>,
    virtual_match: Vec<Option<usize>>,
    owner: Vec<Option<usize>>,
    matched_neighbors: Vec<usize>,
    protected: usize,
    max_protected: usize,
    probes: u64,
}

impl PolyMatcher {
    /// Matcher for up to `capacity` simultaneous matches. The graph should be
    /// left-regular with `(2D/3 + 2)`-expansion up to `capacity + 1`.
    pub fn new(graph: impl Into<Arc<BiGraph>>, capacity: usize) -> Result<Self, MatchError> {
        let graph = graph.into();
        if !graph.left_regular() {
            return Err(MatchError::Premise("graph must be left-regular".into()));
        }
        if graph.degree() > graph.left_size() {
            return Err(MatchError::Premise(format!(
                "degree {} exceeds left size {}",
                graph.degree(),
                graph.left_size()
            )));
        }
        let right_adj = Arc::new(graph.right_adjacency());
        Ok(Self::with_right_adjacency(graph, right_adj, capacity))
    }

    /// Shares a precomputed right adjacency between copies.
    pub(crate) fn with_right_adjacency(
        graph: Arc<BiGraph>,
        right_adj: Arc<Vec<Vec<usize>>>,
        capacity: usize,
    ) -> Self {
        let n = graph.left_size();
        PolyMatcher {
            threshold: graph.degree().div_ceil(3),
            standard: vec![None; n],
            virtual_match: vec![None; n],
            owner: vec![None; graph.right_size()],
            matched_neighbors: vec![0; n],
            protected: 0,
            max_protected: 0,
            probes: 0,
            capacity,
            right_adj,
            graph,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// `⌈D/3⌉`.
    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn protected_count(&self) -> usize {
        self.protected
    }

    pub fn max_protected(&self) -> usize {
        self.max_protected
    }

    pub fn is_protected(&self, x: usize) -> bool {
        self.matched_neighbors[x] >= self.threshold
    }

    pub fn standard_match(&self, x: usize) -> Option<usize> {
        self.standard[x]
    }

    pub fn virtual_match(&self, x: usize) -> Option<usize> {
        self.virtual_match[x]
    }

    /// Standard matches currently held.
    pub fn active(&self) -> usize {
        self.standard.iter().flatten().count()
    }

    fn is_unmatched(&self, x: usize) -> bool {
        self.standard[x].is_none() && self.virtual_match[x].is_none()
    }

    /// Occupies `y` for `x`; newly protected unmatched nodes go to `pending`.
    fn occupy(&mut self, y: usize, x: usize, pending: &mut BTreeSet<usize>) {
        self.owner[y] = Some(x);
        let adj = Arc::clone(&self.right_adj);
        for &w in &adj[y] {
            self.probes += 1;
            self.matched_neighbors[w] += 1;
            if self.matched_neighbors[w] == self.threshold {
                self.protected += 1;
                if w != x && self.is_unmatched(w) {
                    pending.insert(w);
                }
            }
        }
        self.max_protected = self.max_protected.max(self.protected);
    }

    /// Frees `y`; nodes that lose protection while holding a virtual match
    /// go to `dropped`.
    fn vacate(&mut self, y: usize, dropped: &mut Vec<usize>) {
        self.owner[y] = None;
        let adj = Arc::clone(&self.right_adj);
        for &w in &adj[y] {
            self.probes += 1;
            if self.matched_neighbors[w] == self.threshold {
                self.protected -= 1;
                if self.virtual_match[w].is_some() {
                    dropped.push(w);
                }
            }
            self.matched_neighbors[w] -= 1;
        }
    }

    /// Gives every pending protected node a virtual match on a right node
    /// private to it within the pending set.
    fn drain(&mut self, mut pending: BTreeSet<usize>) -> Result<(), MatchError> {
        while !pending.is_empty() {
            if self.protected > self.capacity {
                return Err(MatchError::TooManyAtRisk {
                    at_risk: self.protected,
                    limit: self.capacity,
                });
            }
            let mut best: Option<(usize, usize)> = None;
            for &s in &pending {
                for &y in self.graph.neighbors(s) {
                    self.probes += 1;
                    if self.owner[y].is_some() || best.is_some_and(|(b, _)| b <= y) {
                        continue;
                    }
                    let in_pending = self.right_adj[y]
                        .iter()
                        .filter(|w| pending.contains(w))
                        .count();
                    self.probes += self.right_adj[y].len() as u64;
                    if in_pending == 1 {
                        best = Some((y, s));
                    }
                }
            }
            let (y, x) = best.ok_or(MatchError::NoPrivateNode {
                pending: pending.len(),
            })?;
            debug_assert_eq!(self.matched_neighbors[x], self.threshold);
            pending.remove(&x);
            self.virtual_match[x] = Some(y);
            self.occupy(y, x, &mut pending);
        }
        if self.protected > self.capacity {
            return Err(MatchError::TooManyAtRisk {
                at_risk: self.protected,
                limit: self.capacity,
            });
        }
        Ok(())
    }

    /// Audits the bookkeeping against a recount. Intended for tests and soaks.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.graph.left_size();
        let mut recount = vec![0usize; n];
        let mut owned = 0;
        for (y, owner) in self.owner.iter().enumerate() {
            let Some(x) = *owner else { continue };
            owned += 1;
            if self.standard[x] != Some(y) && self.virtual_match[x] != Some(y) {
                return Err(format!("right node {y} owned by {x} without a match"));
            }
            for &w in &self.right_adj[y] {
                recount[w] += 1;
            }
        }
        let held =
            self.standard.iter().flatten().count() + self.virtual_match.iter().flatten().count();
        if held != owned {
            return Err(format!("{held} matches but {owned} occupied right nodes"));
        }
        if recount != self.matched_neighbors {
            return Err("matched-neighbor counts out of sync".into());
        }
        let mut protected = 0;
        for x in 0..n {
            let p = self.is_protected(x);
            protected += usize::from(p);
            if self.standard[x].is_some() && self.virtual_match[x].is_some() {
                return Err(format!("node {x} holds both match kinds"));
            }
            if p && self.is_unmatched(x) {
                return Err(format!("protected node {x} has no match"));
            }
            if !p && self.virtual_match[x].is_some() {
                return Err(format!("unprotected node {x} keeps a virtual match"));
            }
        }
        if protected != self.protected {
            return Err("protected count out of sync".into());
        }
        if protected > self.capacity {
            return Err(format!(
                "{protected} protected nodes exceed capacity {}",
                self.capacity
            ));
        }
        Ok(())
    }
}

impl Matcher for PolyMatcher {
    fn name(&self) -> String {
        "poly".into()
    }

    fn requires_left_regular(&self) -> bool {
        true
    }

    fn request(&mut self, x: usize) -> Result<Vec<usize>, MatchError> {
        if self.standard[x].is_some() {
            return Err(MatchError::AlreadyActive { x });
        }
        if let Some(y) = self.virtual_match[x].take() {
            self.probes += 1;
            self.standard[x] = Some(y);
            return Ok(vec![y]);
        }
        let mut y = None;
        for &cand in self.graph.neighbors(x) {
            self.probes += 1;
            if self.owner[cand].is_none() {
                y = Some(cand);
                break;
            }
        }
        let y = y.ok_or(MatchError::NoFreeNeighbor { x })?;
        self.standard[x] = Some(y);
        let mut pending = BTreeSet::new();
        self.occupy(y, x, &mut pending);
        self.drain(pending)?;
        Ok(vec![y])
    }

    fn retract(&mut self, x: usize, assigned: &[usize]) -> Result<(), MatchError> {
        let y = match (assigned, self.standard[x]) {
            ([y], Some(s)) if *y == s => s,
            _ => return Err(MatchError::UnknownMatch { x }),
        };
        self.standard[x] = None;
        self.probes += 1;
        if self.is_protected(x) {
            self.virtual_match[x] = Some(y);
            return Ok(());
        }
        let mut dropped = Vec::new();
        self.vacate(y, &mut dropped);
        while let Some(w) = dropped.pop() {
            if self.is_protected(w) {
                continue;
            }
            if let Some(v) = self.virtual_match[w].take() {
                self.vacate(v, &mut dropped);
            }
        }
        Ok(())
    }

    fn probes(&self) -> u64 {
        self.probes
    }

    fn corrupt(&mut self) -> bool {
        self.owner.fill(None);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigraph::fixtures;

    #[test]
    fn lone_match_and_retract_restores_empty_state() {
        let g = fixtures::complete(8, 8);
        let mut m = PolyMatcher::new(g, 1).unwrap();
        assert_eq!(m.request(2).unwrap(), vec![0]);
        assert_eq!(m.protected_count(), 0);
        m.retract(2, &[0]).unwrap();
        assert_eq!(m.active(), 0);
        assert!(m.owner.iter().all(Option::is_none));
        m.check_invariants().unwrap();
    }

    #[test]
    fn demotion_keeps_right_node_occupied() {
        // D = 3, threshold 1: every neighbor of a match becomes protected
        let g = BiGraph::build(3, 5, vec![vec![0, 1, 2], vec![0, 3, 4], vec![1, 3, 4]]).unwrap();
        let mut m = PolyMatcher::new(g, 3).unwrap();
        assert_eq!(m.request(0).unwrap(), vec![0]);
        // node 1 shares right node 0 and gets a virtual match
        assert!(m.virtual_match(1).is_some());
        m.check_invariants().unwrap();
        let v = m.virtual_match(1).unwrap();
        assert_eq!(m.request(1).unwrap(), vec![v]);
        m.retract(0, &[0]).unwrap();
        // 0 is still protected through node 1's match, so right node 0 stays taken
        assert!(m.is_protected(0));
        assert_eq!(m.virtual_match(0), Some(0));
        m.check_invariants().unwrap();
    }

    #[test]
    fn rejects_bad_graphs_and_unknown_retractions() {
        assert!(PolyMatcher::new(fixtures::left_intro(), 1).is_err());
        assert!(PolyMatcher::new(fixtures::complete(2, 3), 1).is_err());
        let mut m = PolyMatcher::new(fixtures::complete(4, 4), 1).unwrap();
        assert_eq!(m.retract(0, &[0]), Err(MatchError::UnknownMatch { x: 0 }));
        m.request(0).unwrap();
        assert_eq!(m.request(0), Err(MatchError::AlreadyActive { x: 0 }));
    }
}
