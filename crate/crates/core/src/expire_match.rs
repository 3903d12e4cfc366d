//! Fast matchers on clones: the copy ladder and its incremental,
//! round-limited and expiring games.
//!
//! A ladder over a `c`-clone of `G` scans copies in order and takes the
//! lowest free neighbor in the first copy that has one. Copy `i` of right
//! node `y` is the clone index `i * #R + y`.

use std::collections::HashMap;
use std::sync::Arc;

use bitvec::prelude::*;

use crate::bigraph::{Adjacency, BiGraph};
use crate::game::{MatchError, Matcher};

/// `⌈log₂ n⌉` for `n ≥ 1`.
pub fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        u64::BITS - (n - 1).leading_zeros()
    }
}

/// `⌊log₂ n⌋` for `n ≥ 1`.
pub fn floor_log2(n: u64) -> u32 {
    assert!(n >= 1, "log of zero");
    u64::BITS - 1 - n.leading_zeros()
}

/// Copies needed for incremental matching up to `k`.
pub fn incremental_copies(k: usize) -> usize {
    1 + ceil_log2(k as u64) as usize
}

/// Smallest `k * 2^j` that is at least `t`.
pub fn round_up_rounds(t: u64, k: usize) -> u64 {
    let mut r = (k as u64).max(1);
    while r < t {
        r *= 2;
    }
    r
}

/// Copies needed for `t` rounds with capacity `k`, where `t` is `k` times a
/// power of two.
pub fn round_limited_copies(t: u64) -> usize {
    1 + ceil_log2(t) as usize
}

/// First-free-copy assignment on a clone of a base graph.
#[derive(Debug, Clone)]
pub struct CopyLadder {
    graph: Arc<BiGraph>,
    copies: usize,
    taken: BitVec,
    disabled: Option<BitVec>,
    active: usize,
    highest_copy: Option<usize>,
    probes: u64,
}

impl CopyLadder {
    pub fn new(graph: Arc<BiGraph>, copies: usize) -> Self {
        assert!(copies >= 1, "a ladder needs a copy");
        let taken = bitvec![0; copies * graph.right_size()];
        CopyLadder {
            graph,
            copies,
            taken,
            disabled: None,
            active: 0,
            highest_copy: None,
            probes: 0,
        }
    }

    pub fn graph(&self) -> &Arc<BiGraph> {
        &self.graph
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    /// Size of the clone's right side.
    pub fn right_size(&self) -> usize {
        self.copies * self.graph.right_size()
    }

    pub fn active(&self) -> usize {
        self.active
    }

    pub fn is_empty(&self) -> bool {
        self.active == 0
    }

    /// Highest copy ever assigned, if any.
    pub fn highest_copy(&self) -> Option<usize> {
        self.highest_copy
    }

    pub fn probes(&self) -> u64 {
        self.probes
    }

    pub fn is_taken(&self, z: usize) -> bool {
        self.taken[z]
    }

    /// Base right nodes the ladder must not use, in every copy.
    pub fn set_disabled(&mut self, disabled: Option<BitVec>) {
        if let Some(d) = &disabled {
            assert_eq!(d.len(), self.graph.right_size(), "mask length");
        }
        self.disabled = disabled;
    }

    fn usable(&self, y: usize) -> bool {
        self.disabled.as_ref().is_none_or(|d| !d[y])
    }

    /// Assigns `x` to the lowest free usable neighbor of the first copy that has one.
    pub fn assign(&mut self, x: usize) -> Result<usize, MatchError> {
        let r = self.graph.right_size();
        for copy in 0..self.copies {
            for &y in self.graph.neighbors(x) {
                self.probes += 1;
                let z = copy * r + y;
                if !self.taken[z] && self.usable(y) {
                    self.taken.set(z, true);
                    self.active += 1;
                    self.highest_copy = self.highest_copy.max(Some(copy));
                    return Ok(z);
                }
            }
        }
        Err(MatchError::NoFreeNeighbor { x })
    }

    /// Frees clone node `z`.
    pub fn release(&mut self, x: usize, z: usize) -> Result<(), MatchError> {
        self.probes += 1;
        if z >= self.taken.len() || !self.taken[z] {
            return Err(MatchError::UnknownMatch { x });
        }
        self.taken.set(z, false);
        self.active -= 1;
        Ok(())
    }

    /// Marks every slot free without updating counters. Fault injection only.
    pub(crate) fn forget_all(&mut self) {
        self.taken.fill(false);
    }
}

fn single(x: usize, assigned: &[usize]) -> Result<usize, MatchError> {
    match assigned {
        [z] => Ok(*z),
        _ => Err(MatchError::UnknownMatch { x }),
    }
}

/// Incremental matching up to `K` on a `(1 + ⌈log₂ K⌉)`-clone of a 1-expander.
#[derive(Debug, Clone)]
pub struct IncrementalMatcher {
    ladder: CopyLadder,
}

impl IncrementalMatcher {
    pub fn new(graph: impl Into<Arc<BiGraph>>, k: usize) -> Self {
        IncrementalMatcher {
            ladder: CopyLadder::new(graph.into(), incremental_copies(k)),
        }
    }

    pub fn ladder(&self) -> &CopyLadder {
        &self.ladder
    }
}

impl Matcher for IncrementalMatcher {
    fn name(&self) -> String {
        "incremental".into()
    }

    fn request(&mut self, x: usize) -> Result<Vec<usize>, MatchError> {
        Ok(vec![self.ladder.assign(x)?])
    }

    fn retract(&mut self, _x: usize, _assigned: &[usize]) -> Result<(), MatchError> {
        Err(MatchError::IncrementalRetract)
    }

    fn probes(&self) -> u64 {
        self.ladder.probes()
    }

    fn corrupt(&mut self) -> bool {
        self.ladder.forget_all();
        true
    }
}

/// Matching for a game of `T` rounds on a `(1 + ⌈log₂ T⌉)`-clone of a
/// 3-expander, `T` rounded up to `K` times a power of two.
#[derive(Debug, Clone)]
pub struct RoundLimitedMatcher {
    ladder: CopyLadder,
    rounds: u64,
    served: u64,
}

impl RoundLimitedMatcher {
    pub fn new(graph: impl Into<Arc<BiGraph>>, k: usize, rounds: u64) -> Self {
        let rounds = round_up_rounds(rounds, k);
        RoundLimitedMatcher {
            ladder: CopyLadder::new(graph.into(), round_limited_copies(rounds)),
            rounds,
            served: 0,
        }
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn ladder(&self) -> &CopyLadder {
        &self.ladder
    }
}

impl Matcher for RoundLimitedMatcher {
    fn name(&self) -> String {
        "round-limited".into()
    }

    fn request(&mut self, x: usize) -> Result<Vec<usize>, MatchError> {
        if self.served >= self.rounds {
            return Err(MatchError::RoundLimit { limit: self.rounds });
        }
        self.served += 1;
        Ok(vec![self.ladder.assign(x)?])
    }

    fn retract(&mut self, x: usize, assigned: &[usize]) -> Result<(), MatchError> {
        self.ladder.release(x, single(x, assigned)?)
    }

    fn probes(&self) -> u64 {
        self.ladder.probes()
    }

    fn corrupt(&mut self) -> bool {
        self.ladder.forget_all();
        true
    }
}

/// `T`-expiring matching: two round-limited ladders, each serving `T`
/// consecutive requests in turn. Clone index space has `2c` copies, the
/// second ladder's copies following the first's.
#[derive(Debug, Clone)]
pub struct ExpiringMatcher {
    halves: [CopyLadder; 2],
    window: u64,
    served: u64,
}

impl ExpiringMatcher {
    /// `window` is the expiration `T`; each half is a ladder for `T` rounds
    /// with capacity `k`.
    pub fn new(graph: impl Into<Arc<BiGraph>>, k: usize, window: u64) -> Self {
        let graph = graph.into();
        let copies = round_limited_copies(round_up_rounds(window, k));
        ExpiringMatcher {
            halves: [
                CopyLadder::new(graph.clone(), copies),
                CopyLadder::new(graph, copies),
            ],
            window,
            served: 0,
        }
    }

    pub fn copies_per_half(&self) -> usize {
        self.halves[0].copies()
    }

    /// Total load bound when projected to the base graph.
    pub fn total_copies(&self) -> usize {
        2 * self.copies_per_half()
    }

    pub fn half(&self, h: usize) -> &CopyLadder {
        &self.halves[h]
    }

    /// Half serving the next request.
    pub fn current_half(&self) -> usize {
        ((self.served / self.window) % 2) as usize
    }

    fn half_span(&self) -> usize {
        self.halves[0].right_size()
    }
}

impl Matcher for ExpiringMatcher {
    fn name(&self) -> String {
        "expiring".into()
    }

    fn request(&mut self, x: usize) -> Result<Vec<usize>, MatchError> {
        let h = self.current_half();
        if self.served.is_multiple_of(self.window) && !self.halves[h].is_empty() {
            return Err(MatchError::StaleEdgeAtSwitch { half: h });
        }
        self.served += 1;
        let z = self.halves[h].assign(x)?;
        Ok(vec![h * self.half_span() + z])
    }

    fn retract(&mut self, x: usize, assigned: &[usize]) -> Result<(), MatchError> {
        let z = single(x, assigned)?;
        let span = self.half_span();
        let h = z / span;
        if h >= 2 {
            return Err(MatchError::UnknownMatch { x });
        }
        self.halves[h].release(x, z % span)
    }

    fn probes(&self) -> u64 {
        self.halves[0].probes() + self.halves[1].probes()
    }

    fn corrupt(&mut self) -> bool {
        self.halves[0].forget_all();
        self.halves[1].forget_all();
        true
    }
}

/// Plays a clone-space matcher on the base graph: replies are reduced
/// modulo the base right size, so the base load is at most the number of
/// copies.
#[derive(Debug, Clone)]
pub struct Projected<M> {
    inner: M,
    base_right: usize,
    original: HashMap<usize, Vec<usize>>,
}

impl<M: Matcher> Projected<M> {
    pub fn new(inner: M, base_right: usize) -> Self {
        Projected {
            inner,
            base_right,
            original: HashMap::new(),
        }
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: Matcher> Matcher for Projected<M> {
    fn name(&self) -> String {
        format!("projected-{}", self.inner.name())
    }

    fn requires_left_regular(&self) -> bool {
        self.inner.requires_left_regular()
    }

    fn request(&mut self, x: usize) -> Result<Vec<usize>, MatchError> {
        let reply = self.inner.request(x)?;
        let projected = reply.iter().map(|z| z % self.base_right).collect();
        self.original.insert(x, reply);
        Ok(projected)
    }

    fn retract(&mut self, x: usize, _assigned: &[usize]) -> Result<(), MatchError> {
        let original = self
            .original
            .remove(&x)
            .ok_or(MatchError::UnknownMatch { x })?;
        self.inner.retract(x, &original)
    }

    fn probes(&self) -> u64 {
        self.inner.probes()
    }

    fn corrupt(&mut self) -> bool {
        self.inner.corrupt()
    }
}
