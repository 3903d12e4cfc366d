//! Small-instance oracle matcher: keeps a working copy of the graph and only
//! takes edges whose deletion preserves 1-expansion up to `K`.

use std::sync::Arc;

use crate::bigraph::{expansion_check, subset_count, Adjacency, BiGraph, InducedView};
use crate::game::{MatchError, Matcher};

/// Largest left side the oracle accepts.
pub const FFP_MAX_LEFT: usize = 64;

#[derive(Debug, Clone)]
pub struct FfpMatcher {
    graph: Arc<BiGraph>,
    capacity: usize,
    deleted_left: Vec<bool>,
    deleted_right: Vec<bool>,
    matched: Vec<Option<usize>>,
    probes: u64,
}

impl FfpMatcher {
    pub fn new(graph: impl Into<Arc<BiGraph>>, capacity: usize) -> Result<Self, MatchError> {
        let graph = graph.into();
        if graph.left_size() > FFP_MAX_LEFT {
            return Err(MatchError::Unsupported(format!(
                "at most {FFP_MAX_LEFT} left nodes"
            )));
        }
        Ok(FfpMatcher {
            deleted_left: vec![false; graph.left_size()],
            deleted_right: vec![false; graph.right_size()],
            matched: vec![None; graph.left_size()],
            capacity,
            graph,
            probes: 0,
        })
    }

    /// Whether the working copy minus `x` and `y` keeps 1-expansion up to the capacity.
    fn good(&mut self, x: usize, y: usize) -> bool {
        let mut left = self.deleted_left.clone();
        let mut right = self.deleted_right.clone();
        left[x] = true;
        right[y] = true;
        let present = left.iter().filter(|d| !**d).count();
        self.probes += subset_count(present, self.capacity) as u64;
        let enabled = right.into_iter().map(|d| !d).collect();
        let view = InducedView::from_masks(&*self.graph, left, enabled);
        expansion_check(&view, 1.0f64, self.capacity).holds
    }
}

impl Matcher for FfpMatcher {
    fn name(&self) -> String {
        "ffp".into()
    }

    fn request(&mut self, x: usize) -> Result<Vec<usize>, MatchError> {
        if self.deleted_left[x] {
            return Err(MatchError::AlreadyActive { x });
        }
        let nbrs = self.graph.neighbors(x).to_vec();
        for y in nbrs {
            self.probes += 1;
            if !self.deleted_right[y] && self.good(x, y) {
                self.deleted_left[x] = true;
                self.deleted_right[y] = true;
                self.matched[x] = Some(y);
                return Ok(vec![y]);
            }
        }
        Err(MatchError::Premise(format!(
            "every free neighbor of {x} breaks 1-expansion"
        )))
    }

    fn retract(&mut self, x: usize, assigned: &[usize]) -> Result<(), MatchError> {
        match (assigned, self.matched[x]) {
            ([y], Some(m)) if *y == m => {
                self.deleted_left[x] = false;
                self.deleted_right[m] = false;
                self.matched[x] = None;
                self.probes += 1;
                Ok(())
            }
            _ => Err(MatchError::UnknownMatch { x }),
        }
    }

    fn probes(&self) -> u64 {
        self.probes
    }

    fn corrupt(&mut self) -> bool {
        self.deleted_right.fill(false);
        true
    }
}

/// Whether `g` meets the oracle's premise: 1-expansion up to `k`, and at
/// least `#S + k` neighbors for every left set with `k < #S <= 2k`.
pub fn ffp_premise<A: Adjacency + ?Sized>(g: &A, k: usize) -> bool {
    if !expansion_check(g, 1.0f64, k).holds {
        return false;
    }
    let masks = crate::bigraph::check::NeighborMasks::new(g);
    let mut ok = true;
    masks.for_each_subset(2 * k, |chosen, n| {
        if chosen.len() > k && n < chosen.len() + k {
            ok = false;
        }
        ok
    });
    ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigraph::{clone_graph, fixtures};
    use crate::game::search::find_losing_line;
    use crate::game::GameConfig;

    #[test]
    fn any_neighbor_works_on_complete_graph() {
        let mut m = FfpMatcher::new(fixtures::complete(2, 2), 1).unwrap();
        assert_eq!(m.request(0).unwrap(), vec![0]);
        m.retract(0, &[0]).unwrap();
        assert_eq!(m.request(1).unwrap(), vec![0]);
    }

    #[test]
    fn avoids_the_bad_neighbor() {
        // taking right node 0 for b would strand c
        let g = BiGraph::build(3, 2, vec![vec![0, 1], vec![0, 1], vec![0]]).unwrap();
        let mut m = FfpMatcher::new(g, 1).unwrap();
        assert_eq!(m.request(1).unwrap(), vec![1]);
        m.retract(1, &[1]).unwrap();
        assert_eq!(m.request(2).unwrap(), vec![0]);
    }

    #[test]
    fn premise_holds_for_three_clone_only() {
        let g = fixtures::right_intro();
        assert!(!ffp_premise(&g, 2));
        assert!(ffp_premise(&clone_graph(&g, 3).unwrap(), 2));
    }

    #[test]
    fn three_clone_of_right_intro_survives() {
        let g = clone_graph(&fixtures::right_intro(), 3).unwrap();
        let m = FfpMatcher::new(g.clone(), 2).unwrap();
        assert!(find_losing_line(&g, &GameConfig::dynamic(2), &m, 6).is_none());
    }
}
