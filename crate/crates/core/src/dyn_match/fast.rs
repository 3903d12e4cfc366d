//! Fast dynamic matching on the union of a fast expander `F` and a slowly
//! matched graph `G`, with periodic preparation.
//!
//! Requests of at-risk nodes (many loaded `F`-neighbors) are served by
//! matches precomputed in `G` during preparation; all others by the
//! round-limited ladder on `F` restricted to unloaded right nodes.
//! Retracted `G` matches wait in a queue until the next preparation.
//!
//! Replies live in the right side of the union of a `c`-clone of `F` (the
//! ladder) and a 3-clone of `G`: ladder copy `i` of `y` is `i·#R_F + y`, and
//! `G` copy `j` of `y` is `c·#R_F + j·#R_G + y`.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use bitvec::prelude::*;

use super::poly::PolyMatcher;
use crate::bigraph::{expansion_check, Adjacency, BiGraph, InducedView};
use crate::expire_match::{round_limited_copies, round_up_rounds, CopyLadder};
use crate::game::{MatchError, Matcher};

/// Number of independent slow matchers on the `G` side.
pub const SLOW_COPIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SlowState {
    /// Precomputed and not yet handed out.
    Unused,
    Active,
    /// Retracted by the Requester; released at the next preparation.
    Queued,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct SlowMatch {
    copy: usize,
    y: usize,
    state: SlowState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PrepJob {
    Release(usize),
    Precompute(usize),
}

/// Counters describing the preparations run so far.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrepStats {
    pub runs: u64,
    pub max_at_risk: usize,
    pub last_at_risk: usize,
    pub max_slow_matches: usize,
    pub induced_checks: u64,
    pub induced_failures: u64,
    pub probes: u64,
}

#[derive(Debug, Clone)]
pub struct FastMatcher {
    fast: Arc<BiGraph>,
    capacity: usize,
    rounds: u64,
    ladder: CopyLadder,
    slow: Vec<PolyMatcher>,
    slow_capacity: usize,
    slow_right: usize,
    slow_matches: HashMap<usize, SlowMatch>,
    queue: VecDeque<usize>,
    at_risk: BitVec,
    served_since_prep: u64,
    pending: VecDeque<PrepJob>,
    prep_open: bool,
    check_induced: bool,
    stats: PrepStats,
    fast_probes: u64,
}

impl FastMatcher {
    /// `fast` should have `(D/2 + 3)`-expansion up to `capacity`; `slow` should
    /// support poly matching up to `capacity - 1` per copy, which the three
    /// copies turn into the `2·capacity` simultaneous slow matches needed.
    /// `rounds` is the preparation period, rounded up to `capacity · 2^j`.
    pub fn new(
        fast: impl Into<Arc<BiGraph>>,
        slow: impl Into<Arc<BiGraph>>,
        capacity: usize,
        rounds: u64,
    ) -> Result<Self, MatchError> {
        let fast = fast.into();
        let slow = slow.into();
        if capacity < 3 {
            return Err(MatchError::Premise("capacity must be at least 3".into()));
        }
        if fast.left_size() != slow.left_size() {
            return Err(MatchError::Premise("graphs must share the left set".into()));
        }
        let rounds = round_up_rounds(rounds, capacity);
        let ladder = CopyLadder::new(fast.clone(), round_limited_copies(rounds));
        let first = PolyMatcher::new(slow.clone(), capacity - 1)?;
        let mut copies = vec![first];
        while copies.len() < SLOW_COPIES {
            copies.push(copies[0].clone());
        }
        Ok(FastMatcher {
            at_risk: bitvec![0; fast.left_size()],
            slow_right: slow.right_size(),
            fast,
            capacity,
            rounds,
            ladder,
            slow: copies,
            slow_capacity: capacity - 1,
            slow_matches: HashMap::new(),
            queue: VecDeque::new(),
            served_since_prep: 0,
            pending: VecDeque::new(),
            prep_open: false,
            check_induced: false,
            stats: PrepStats::default(),
            fast_probes: 0,
        })
    }

    /// Brute-force checks 3-expansion of the induced fast graph at every
    /// preparation. Desk scale only.
    pub fn with_induced_check(mut self, on: bool) -> Self {
        self.check_induced = on;
        self
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn ladder_copies(&self) -> usize {
        self.ladder.copies()
    }

    /// Number of clone copies in the reply space: ladder copies plus slow copies.
    pub fn clone_copies(&self) -> usize {
        self.ladder.copies() + SLOW_COPIES
    }

    /// Size of the reply space.
    pub fn reply_space(&self) -> usize {
        self.ladder.right_size() + SLOW_COPIES * self.slow_right
    }

    pub fn stats(&self) -> &PrepStats {
        &self.stats
    }

    pub fn at_risk(&self) -> &BitSlice {
        &self.at_risk
    }

    pub fn slow_matchers(&self) -> &[PolyMatcher] {
        &self.slow
    }

    /// Work on the request/retract path, excluding preparation.
    pub fn fast_probes(&self) -> u64 {
        self.fast_probes
    }

    /// Whether the next request must be preceded by a preparation.
    pub fn prep_due(&self) -> bool {
        self.served_since_prep >= self.rounds || self.stats.runs == 0
    }

    pub fn prep_in_progress(&self) -> bool {
        self.prep_open
    }

    /// Maps a reply index to the union of `F` and `G`, whose right side is
    /// `F`'s followed by `G`'s.
    pub fn to_union(&self, z: usize) -> usize {
        let f_span = self.ladder.right_size();
        let rf = self.fast.right_size();
        if z < f_span {
            z % rf
        } else {
            rf + (z - f_span) % self.slow_right
        }
    }

    fn slow_index(&self, copy: usize, y: usize) -> usize {
        self.ladder.right_size() + copy * self.slow_right + y
    }

    /// Starts a preparation: snapshots the loaded fast right nodes, fixes the
    /// at-risk set and schedules slow-side work.
    pub fn begin_prep(&mut self) -> Result<(), MatchError> {
        if self.prep_open {
            return Ok(());
        }
        let rf = self.fast.right_size();
        let mut disabled = bitvec![0; rf];
        for z in 0..self.ladder.right_size() {
            if self.ladder.is_taken(z) {
                disabled.set(z % rf, true);
            }
        }
        self.stats.probes += self.ladder.right_size() as u64;
        let mut at_risk = bitvec![0; self.fast.left_size()];
        let mut count = 0;
        for x in 0..self.fast.left_size() {
            let nbrs = self.fast.neighbors(x);
            let loaded = nbrs.iter().filter(|&&y| disabled[y]).count();
            self.stats.probes += nbrs.len() as u64;
            if 2 * loaded >= nbrs.len() {
                at_risk.set(x, true);
                count += 1;
            }
        }
        self.stats.runs += 1;
        self.stats.last_at_risk = count;
        self.stats.max_at_risk = self.stats.max_at_risk.max(count);
        if count > self.capacity {
            return Err(MatchError::TooManyAtRisk {
                at_risk: count,
                limit: self.capacity,
            });
        }
        if self.check_induced {
            self.stats.induced_checks += 1;
            let excluded: Vec<bool> = at_risk.iter().by_vals().collect();
            let enabled: Vec<bool> = disabled.iter().by_vals().map(|d| !d).collect();
            let view = InducedView::from_masks(&*self.fast, excluded, enabled);
            if !expansion_check(&view, 3.0f64, self.capacity).holds {
                self.stats.induced_failures += 1;
                return Err(MatchError::Premise(
                    "induced fast graph lost 3-expansion".into(),
                ));
            }
        }
        let mut jobs = VecDeque::new();
        for &x in &self.queue {
            jobs.push_back(PrepJob::Release(x));
        }
        let mut unused: Vec<usize> = self
            .slow_matches
            .iter()
            .filter(|(_, m)| m.state == SlowState::Unused)
            .map(|(&x, _)| x)
            .collect();
        unused.sort_unstable();
        jobs.extend(unused.into_iter().map(PrepJob::Release));
        for x in at_risk.iter_ones() {
            let keeps = self
                .slow_matches
                .get(&x)
                .is_some_and(|m| m.state == SlowState::Active);
            if !keeps {
                jobs.push_back(PrepJob::Precompute(x));
            }
        }
        self.at_risk = at_risk;
        self.ladder.set_disabled(Some(disabled));
        self.pending = jobs;
        self.prep_open = true;
        self.served_since_prep = 0;
        Ok(())
    }

    /// Runs scheduled slow-side work until about `budget` probes are spent.
    /// Returns true when the preparation is complete.
    pub fn run_prep(&mut self, budget: u64) -> Result<bool, MatchError> {
        let start = self.slow_probes();
        while let Some(job) = self.pending.front().copied() {
            if self.slow_probes() - start >= budget {
                self.stats.probes += self.slow_probes() - start;
                return Ok(false);
            }
            self.pending.pop_front();
            match job {
                PrepJob::Release(x) => self.release_slow(x)?,
                PrepJob::Precompute(x) => self.precompute(x)?,
            }
        }
        self.stats.probes += self.slow_probes() - start;
        self.prep_open = false;
        Ok(true)
    }

    /// Runs a whole preparation.
    pub fn prepare(&mut self) -> Result<(), MatchError> {
        self.begin_prep()?;
        self.run_prep(u64::MAX)?;
        Ok(())
    }

    fn slow_probes(&self) -> u64 {
        self.slow.iter().map(PolyMatcher::probes).sum()
    }

    fn release_slow(&mut self, x: usize) -> Result<(), MatchError> {
        let Some(m) = self.slow_matches.get(&x).copied() else {
            return Ok(());
        };
        match m.state {
            SlowState::Active => return Ok(()),
            SlowState::Queued => {
                if let Some(i) = self.queue.iter().position(|&q| q == x) {
                    self.queue.remove(i);
                }
            }
            SlowState::Unused => {}
        }
        self.slow[m.copy].retract(x, &[m.y])?;
        self.slow_matches.remove(&x);
        Ok(())
    }

    fn precompute(&mut self, x: usize) -> Result<(), MatchError> {
        if self.slow_matches.contains_key(&x) {
            // a queued match is reclaimed on request instead
            return Ok(());
        }
        let copy = (0..SLOW_COPIES)
            .find(|&c| self.slow[c].active() < self.slow_capacity)
            .ok_or(MatchError::CapacityExceeded {
                capacity: SLOW_COPIES * self.slow_capacity,
            })?;
        let y = self.slow[copy].request(x)?[0];
        self.slow_matches.insert(
            x,
            SlowMatch {
                copy,
                y,
                state: SlowState::Unused,
            },
        );
        self.stats.max_slow_matches = self.stats.max_slow_matches.max(self.slow_matches.len());
        Ok(())
    }

    /// Serves a request without triggering preparation.
    pub fn serve(&mut self, x: usize) -> Result<usize, MatchError> {
        self.served_since_prep += 1;
        self.fast_probes += 1;
        if self.at_risk[x] {
            let m = self
                .slow_matches
                .get_mut(&x)
                .ok_or(MatchError::MissingPrecomputed { x })?;
            match m.state {
                SlowState::Unused => {}
                SlowState::Queued => {
                    let i = self
                        .queue
                        .iter()
                        .position(|&q| q == x)
                        .expect("queued match is in the queue");
                    self.queue.remove(i);
                }
                SlowState::Active => return Err(MatchError::AlreadyActive { x }),
            }
            m.state = SlowState::Active;
            let (copy, y) = (m.copy, m.y);
            return Ok(self.slow_index(copy, y));
        }
        let before = self.ladder.probes();
        let z = self.ladder.assign(x);
        self.fast_probes += self.ladder.probes() - before;
        z
    }

    /// Handles a retraction of reply index `z`.
    pub fn release(&mut self, x: usize, z: usize) -> Result<(), MatchError> {
        self.fast_probes += 1;
        if z < self.ladder.right_size() {
            return self.ladder.release(x, z);
        }
        let m = self
            .slow_matches
            .get_mut(&x)
            .ok_or(MatchError::UnknownMatch { x })?;
        let expected = self.ladder.right_size() + m.copy * self.slow_right + m.y;
        if m.state != SlowState::Active || expected != z {
            return Err(MatchError::UnknownMatch { x });
        }
        m.state = SlowState::Queued;
        self.queue.push_back(x);
        Ok(())
    }

    /// Slow matches per state: (unused, active, queued).
    pub fn slow_match_counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for m in self.slow_matches.values() {
            match m.state {
                SlowState::Unused => c.0 += 1,
                SlowState::Active => c.1 += 1,
                SlowState::Queued => c.2 += 1,
            }
        }
        c
    }

    /// Audits the slow matchers and the at-risk bound.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.at_risk.count_ones() > self.capacity {
            return Err(format!(
                "{} at-risk nodes exceed capacity {}",
                self.at_risk.count_ones(),
                self.capacity
            ));
        }
        if self.slow_matches.len() > 2 * self.capacity {
            return Err(format!(
                "{} slow matches exceed {}",
                self.slow_matches.len(),
                2 * self.capacity
            ));
        }
        for (i, m) in self.slow.iter().enumerate() {
            m.check_invariants()
                .map_err(|e| format!("slow copy {i}: {e}"))?;
        }
        Ok(())
    }

    pub(crate) fn corrupt_ladder(&mut self) {
        self.ladder.forget_all();
    }
}

impl Matcher for FastMatcher {
    fn name(&self) -> String {
        "fast".into()
    }

    fn requires_left_regular(&self) -> bool {
        true
    }

    fn request(&mut self, x: usize) -> Result<Vec<usize>, MatchError> {
        if self.prep_due() {
            self.prepare()?;
        }
        Ok(vec![self.serve(x)?])
    }

    fn retract(&mut self, x: usize, assigned: &[usize]) -> Result<(), MatchError> {
        match assigned {
            [z] => self.release(x, *z),
            _ => Err(MatchError::UnknownMatch { x }),
        }
    }

    /// Request-path work only; preparation work is in [`FastMatcher::stats`].
    fn probes(&self) -> u64 {
        self.fast_probes
    }

    fn corrupt(&mut self) -> bool {
        self.corrupt_ladder();
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigraph::fixtures;

    /// Left node `x` owns right nodes `2x` and `2x + 1`.
    fn pairs(n: usize) -> BiGraph {
        BiGraph::build(n, 2 * n, (0..n).map(|x| vec![2 * x, 2 * x + 1]).collect()).unwrap()
    }

    #[test]
    fn first_preparation_is_empty() {
        let g = fixtures::complete(12, 12);
        let mut m = FastMatcher::new(g.clone(), g, 3, 6).unwrap();
        assert_eq!(m.rounds(), 6);
        m.prepare().unwrap();
        assert_eq!(m.stats().last_at_risk, 0);
        assert_eq!(m.slow_match_counts(), (0, 0, 0));
    }

    #[test]
    fn at_risk_nodes_use_precomputed_slow_matches() {
        let f = BiGraph::build(
            4,
            8,
            vec![
                vec![0, 1, 2, 3],
                vec![0, 1, 2, 3],
                vec![4, 5, 6, 7],
                vec![4, 5, 6, 7],
            ],
        )
        .unwrap();
        let mut m = FastMatcher::new(f, pairs(4), 3, 3).unwrap();
        let span = m.ladder.right_size();
        let z0 = m.request(0).unwrap()[0];
        assert_eq!(z0, 0);
        assert_eq!(m.request(1).unwrap(), vec![1]);
        m.retract(0, &[z0]).unwrap();
        assert_eq!(m.request(2).unwrap(), vec![4]);
        // the next request prepares: right nodes 1 and 4 are loaded, 0 was freed
        let r = m.request(0).unwrap()[0];
        assert_eq!(m.stats().last_at_risk, 0);
        assert!(r < span);
        m.retract(1, &[1]).unwrap();
        m.retract(0, &[r]).unwrap();
        m.retract(2, &[4]).unwrap();
        let z = m.request(1).unwrap()[0];
        let z2 = m.request(0).unwrap()[0];
        assert!(z < span && z2 < span);
        m.check_invariants().unwrap();
    }

    #[test]
    fn loaded_neighborhoods_trigger_slow_path() {
        let f = BiGraph::build(4, 6, vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![0, 2]]).unwrap();
        let mut m = FastMatcher::new(f, pairs(4), 3, 3).unwrap();
        let span = m.ladder.right_size();
        assert_eq!(m.request(0).unwrap(), vec![0]);
        assert_eq!(m.request(1).unwrap(), vec![2]);
        assert_eq!(m.request(2).unwrap(), vec![4]);
        m.retract(0, &[0]).unwrap();
        // preparation sees right nodes 2 and 4 loaded: nodes 1, 2 and 3 are at risk
        let r = m.request(3).unwrap()[0];
        assert_eq!(m.stats().last_at_risk, 3);
        assert!(r >= span);
        assert_eq!(m.to_union(r), 6 + (r - span) % 8);
        assert_eq!(m.slow_match_counts(), (2, 1, 0));
        m.retract(3, &[r]).unwrap();
        assert_eq!(m.slow_match_counts(), (2, 0, 1));
        // a re-request in the same window reclaims the queued match
        assert_eq!(m.request(3).unwrap(), vec![r]);
        m.check_invariants().unwrap();
    }

    #[test]
    fn capacity_below_three_is_rejected() {
        let g = fixtures::complete(4, 4);
        assert!(FastMatcher::new(g.clone(), g, 2, 4).is_err());
    }
}
