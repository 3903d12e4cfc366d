//! Rich matching: each request receives most of its neighbors.
//!
//! [`RichLadder`] is the clone ladder that serves a request in the first
//! copy where enough neighbors are free, taking all of them.
//! [`ExpiringRichMatcher`] alternates two ladders for expiration, and
//! [`ProductRichMatcher`] composes it with greedy prime hashing, running one
//! independent greedy matcher per right node of the first factor.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use bitvec::prelude::*;
use thiserror::Error;

use crate::bigraph::{
    expansion_check, find_expander, sample_random, sampled_expansion_check, subset_count,
    Adjacency, BiGraph, GraphError, PrimeHash, ProductView,
};
use crate::expire_match::{ceil_log2, round_limited_copies};
use crate::game::{MatchError, Matcher};
use crate::rng::child_seed;
use crate::scalar::Scalar;

/// Clone ladder for rich assignments. A request is served in the first copy
/// where at least `threshold` of its neighbors are free, and receives all of
/// them.
#[derive(Debug, Clone)]
pub struct RichLadder {
    graph: Arc<BiGraph>,
    copies: usize,
    threshold: usize,
    taken: BitVec,
    active: usize,
    copy_use: Vec<u64>,
    probes: u64,
}

impl RichLadder {
    /// Ladder for slack `eps`: a copy qualifies with `⌈(1 - 2 eps) D⌉` free neighbors.
    pub fn new<T: Scalar>(graph: Arc<BiGraph>, copies: usize, eps: T) -> Self {
        let threshold = (eps + eps).rich_threshold(graph.degree());
        Self::with_threshold(graph, copies, threshold)
    }

    pub fn with_threshold(graph: Arc<BiGraph>, copies: usize, threshold: usize) -> Self {
        assert!(copies >= 1, "a ladder needs a copy");
        let taken = bitvec![0; copies * graph.right_size()];
        RichLadder {
            graph,
            copies,
            threshold: threshold.max(1),
            taken,
            active: 0,
            copy_use: vec![0; copies],
            probes: 0,
        }
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn right_size(&self) -> usize {
        self.copies * self.graph.right_size()
    }

    pub fn is_empty(&self) -> bool {
        self.active == 0
    }

    pub fn probes(&self) -> u64 {
        self.probes
    }

    /// Number of requests served in each copy so far.
    pub fn copy_use(&self) -> &[u64] {
        &self.copy_use
    }

    /// Clone indices that a request for `x` would receive now.
    pub fn plan(&mut self, x: usize) -> Result<Vec<usize>, MatchError> {
        let r = self.graph.right_size();
        let mut free = Vec::with_capacity(self.graph.degree());
        for copy in 0..self.copies {
            free.clear();
            for &y in self.graph.neighbors(x) {
                self.probes += 1;
                let z = copy * r + y;
                if !self.taken[z] {
                    free.push(z);
                }
            }
            if free.len() >= self.threshold {
                return Ok(free);
            }
        }
        Err(MatchError::NoRichCopy { x })
    }

    /// Marks a planned assignment taken.
    pub fn commit(&mut self, zs: &[usize]) {
        for &z in zs {
            debug_assert!(!self.taken[z], "committing a taken slot");
            self.taken.set(z, true);
        }
        if let Some(&z) = zs.first() {
            self.copy_use[z / self.graph.right_size()] += 1;
        }
        self.active += 1;
    }

    pub fn assign(&mut self, x: usize) -> Result<Vec<usize>, MatchError> {
        let zs = self.plan(x)?;
        self.commit(&zs);
        Ok(zs)
    }

    pub fn release(&mut self, x: usize, zs: &[usize]) -> Result<(), MatchError> {
        if zs.is_empty() || zs.iter().any(|&z| z >= self.taken.len() || !self.taken[z]) {
            return Err(MatchError::UnknownMatch { x });
        }
        for &z in zs {
            self.probes += 1;
            self.taken.set(z, false);
        }
        self.active -= 1;
        Ok(())
    }

    fn forget_all(&mut self) {
        self.taken.fill(false);
    }
}

/// Two rich ladders, each serving `window` consecutive requests in turn;
/// rich matching with `window`-expiration on a `2c`-clone.
#[derive(Debug, Clone)]
pub struct ExpiringRichMatcher {
    halves: [RichLadder; 2],
    window: u64,
    served: u64,
}

impl ExpiringRichMatcher {
    /// Each half has `1 + ⌈log₂ window⌉` copies and slack `eps`, which needs
    /// `((1 - eps) D)`-expansion up to `window` in the base graph.
    pub fn new<T: Scalar>(graph: impl Into<Arc<BiGraph>>, window: u64, eps: T) -> Self {
        let graph = graph.into();
        let copies = round_limited_copies(window);
        let half = RichLadder::new(graph, copies, eps);
        ExpiringRichMatcher {
            halves: [half.clone(), half],
            window,
            served: 0,
        }
    }

    pub fn with_threshold(graph: impl Into<Arc<BiGraph>>, window: u64, threshold: usize) -> Self {
        let graph = graph.into();
        let half = RichLadder::with_threshold(graph, round_limited_copies(window), threshold);
        ExpiringRichMatcher {
            halves: [half.clone(), half],
            window,
            served: 0,
        }
    }

    pub fn half(&self, h: usize) -> &RichLadder {
        &self.halves[h]
    }

    /// Load of the projection onto the base graph.
    pub fn total_copies(&self) -> usize {
        2 * self.halves[0].copies()
    }

    pub fn threshold(&self) -> usize {
        self.halves[0].threshold()
    }

    fn span(&self) -> usize {
        self.halves[0].right_size()
    }

    fn current_half(&self) -> usize {
        ((self.served / self.window) % 2) as usize
    }

    /// Clone indices the next request for `x` would receive.
    pub fn plan(&mut self, x: usize) -> Result<Vec<usize>, MatchError> {
        let h = self.current_half();
        if self.served.is_multiple_of(self.window) && !self.halves[h].is_empty() {
            return Err(MatchError::StaleEdgeAtSwitch { half: h });
        }
        let offset = h * self.span();
        Ok(self.halves[h]
            .plan(x)?
            .into_iter()
            .map(|z| offset + z)
            .collect())
    }

    pub fn commit(&mut self, zs: &[usize]) {
        let h = self.current_half();
        let offset = h * self.span();
        let local: Vec<usize> = zs.iter().map(|z| z - offset).collect();
        self.halves[h].commit(&local);
        self.served += 1;
    }
}

impl Matcher for ExpiringRichMatcher {
    fn name(&self) -> String {
        "expiring-rich".into()
    }

    fn requires_left_regular(&self) -> bool {
        true
    }

    fn request(&mut self, x: usize) -> Result<Vec<usize>, MatchError> {
        let zs = self.plan(x)?;
        self.commit(&zs);
        Ok(zs)
    }

    fn retract(&mut self, x: usize, assigned: &[usize]) -> Result<(), MatchError> {
        let span = self.span();
        let h = assigned.first().ok_or(MatchError::UnknownMatch { x })? / span;
        if h >= 2 || assigned.iter().any(|z| z / span != h) {
            return Err(MatchError::UnknownMatch { x });
        }
        let local: Vec<usize> = assigned.iter().map(|z| z % span).collect();
        self.halves[h].release(x, &local)
    }

    fn probes(&self) -> u64 {
        self.halves[0].probes() + self.halves[1].probes()
    }

    fn corrupt(&mut self) -> bool {
        self.halves.iter_mut().for_each(RichLadder::forget_all);
        true
    }
}

/// Product of the expiring rich ladder on the first factor with greedy
/// load-1 prime hashing on the second. Replies are product indices
/// `y1 * #R2 + y2` with `y1` a base right node of the first factor.
#[derive(Debug, Clone)]
pub struct ProductRichMatcher {
    first: ExpiringRichMatcher,
    first_right: usize,
    second: PrimeHash,
    second_threshold: usize,
    taken: HashSet<usize>,
    first_replies: HashMap<usize, Vec<usize>>,
    probes: u64,
}

/// A planned product assignment, not yet committed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RichPlan {
    pub x: usize,
    first: Vec<usize>,
    pub rights: Vec<usize>,
}

impl ProductRichMatcher {
    pub fn new(
        first: ExpiringRichMatcher,
        first_right: usize,
        second: PrimeHash,
        second_threshold: usize,
    ) -> Self {
        ProductRichMatcher {
            first,
            first_right,
            second,
            second_threshold,
            taken: HashSet::new(),
            first_replies: HashMap::new(),
            probes: 0,
        }
    }

    pub fn first(&self) -> &ExpiringRichMatcher {
        &self.first
    }

    /// Computes the assignment a request for `x` would receive without
    /// changing the matching.
    pub fn plan(&mut self, x: usize) -> Result<RichPlan, MatchError> {
        let first = self.first.plan(x)?;
        let r2 = self.second.right_size();
        let mut rights = Vec::with_capacity(first.len() * self.second.block_count());
        for &z in &first {
            let y1 = z % self.first_right;
            let before = rights.len();
            for b in 0..self.second.block_count() {
                self.probes += 1;
                let p = y1 * r2 + self.second.node(x, b);
                if !self.taken.contains(&p) {
                    rights.push(p);
                }
            }
            if rights.len() - before < self.second_threshold {
                return Err(MatchError::NoRichCopy { x });
            }
        }
        rights.sort_unstable();
        Ok(RichPlan { x, first, rights })
    }

    pub fn commit(&mut self, plan: RichPlan) -> Vec<usize> {
        self.first.commit(&plan.first);
        for &p in &plan.rights {
            self.probes += 1;
            self.taken.insert(p);
        }
        self.first_replies.insert(plan.x, plan.first);
        plan.rights
    }

    /// Whether product node `p` belongs to an active assignment.
    pub fn is_taken(&self, p: usize) -> bool {
        self.taken.contains(&p)
    }
}

impl Matcher for ProductRichMatcher {
    fn name(&self) -> String {
        "product-rich".into()
    }

    fn requires_left_regular(&self) -> bool {
        true
    }

    fn request(&mut self, x: usize) -> Result<Vec<usize>, MatchError> {
        if self.first_replies.contains_key(&x) {
            return Err(MatchError::AlreadyActive { x });
        }
        let plan = self.plan(x)?;
        Ok(self.commit(plan))
    }

    fn retract(&mut self, x: usize, assigned: &[usize]) -> Result<(), MatchError> {
        let first = self
            .first_replies
            .remove(&x)
            .ok_or(MatchError::UnknownMatch { x })?;
        for p in assigned {
            self.probes += 1;
            self.taken.remove(p);
        }
        self.first.retract(x, &first)
    }

    fn probes(&self) -> u64 {
        self.probes + self.first.probes()
    }

    fn corrupt(&mut self) -> bool {
        self.taken.clear();
        self.first.corrupt()
    }
}

#[derive(Debug, Error)]
pub enum RichBuildError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("no sampled first factor passed the expansion check in {0} attempts")]
    NoExpander(usize),
    #[error("invalid parameters: {0}")]
    Params(String),
}

/// How the first factor's expansion premise was checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verification {
    Exhaustive,
    /// Random sets of every size; evidence, not proof.
    Sampled {
        per_size: usize,
    },
}

impl fmt::Display for Verification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verification::Exhaustive => f.write_str("exhaustive"),
            Verification::Sampled { per_size } => write!(f, "sampled-{per_size}"),
        }
    }
}

/// Parameters of a rich product graph.
#[derive(Debug, Clone)]
pub struct RichParams<T> {
    pub left_size: usize,
    /// Expiration `T` of the rich game.
    pub window: u64,
    /// Total richness slack of the product.
    pub eps: T,
    pub first_degree: usize,
    pub first_right: usize,
    pub prime_floor: usize,
    pub seed: u64,
    pub max_attempts: usize,
    /// After `max_attempts` failures at one right size the size doubles, at
    /// most this many times.
    pub max_doublings: usize,
    /// Exhaustive verification is used when the number of sets is at most this.
    pub exhaustive_limit: u128,
    pub sampled_per_size: usize,
}

impl<T: Scalar> RichParams<T> {
    pub fn new(left_size: usize, window: u64, eps: T) -> Self {
        let first_degree = 8;
        RichParams {
            left_size,
            window,
            eps,
            first_degree,
            first_right: Self::suggested_first_right(left_size, window, eps, first_degree),
            prime_floor: 17,
            seed: 0,
            max_attempts: 200,
            max_doublings: 4,
            exhaustive_limit: 2_000_000,
            sampled_per_size: 2000,
        }
    }

    /// `16 k D₁ / ε` rounded up to a power of two, with `k = min(window, N)`.
    /// Large enough for random sets of size `k` to pass the sampled check;
    /// exhaustive checks on tiny universes may need more.
    pub fn suggested_first_right(
        left_size: usize,
        window: u64,
        eps: T,
        first_degree: usize,
    ) -> usize {
        let k = (window as usize).min(left_size).max(1);
        (T::of(16 * k * first_degree) / eps)
            .ceil_usize()
            .next_power_of_two()
    }

    /// Load of the first factor's strategy on its base graph.
    pub fn first_load(&self) -> usize {
        2 * round_limited_copies(self.window)
    }

    /// Prime-hash block count: `⌈(2/ε) · ℓ · c⌉` where `ℓ` is the first
    /// factor's load and `c` bounds the blocks two left nodes share.
    pub fn block_count(&self) -> usize {
        let c = PrimeHash::collision_bound(self.left_size, self.prime_floor);
        let two = T::one() + T::one();
        (two / self.eps).ceil_mul(self.first_load() * c).max(1)
    }
}

/// A rich product graph: a verified first factor and a prime-hash second
/// factor, with the thresholds its strategy guarantees.
#[derive(Debug, Clone)]
pub struct RichGraph {
    pub first: Arc<BiGraph>,
    pub second: PrimeHash,
    pub window: u64,
    pub first_seed: u64,
    pub verification: Verification,
    /// Minimum free neighbors per copy of the first factor's ladder.
    pub first_threshold: usize,
    /// Minimum free blocks per copy of the second factor.
    pub second_threshold: usize,
    /// Minimum assignment size in the product, `⌈(1 - ε) D⌉`.
    pub rich_min_edges: usize,
}

impl RichGraph {
    /// Samples the first factor until it has `((1 - ε/4) D₁)`-expansion up
    /// to the window, then sizes the prime hashing for the first factor's load.
    pub fn build<T: Scalar>(params: &RichParams<T>) -> Result<Self, RichBuildError> {
        if !(params.eps > T::zero() && params.eps < T::one()) {
            return Err(RichBuildError::Params("eps must lie in (0, 1)".into()));
        }
        if params.window == 0 || params.left_size == 0 {
            return Err(RichBuildError::Params(
                "window and left size must be positive".into(),
            ));
        }
        let four = T::of(4);
        let two = T::of(2);
        let first_slack = params.eps / four;
        let e = (T::one() - first_slack) * T::of(params.first_degree);
        let k = (params.window as usize).min(params.left_size);
        let exhaustive = subset_count(params.left_size, k) <= params.exhaustive_limit;
        let mut found = None;
        'sizes: for d in 0..=params.max_doublings {
            let right = params.first_right << d;
            let size_seed = if d == 0 {
                params.seed
            } else {
                child_seed(params.seed, (d as u64) << 32)
            };
            if exhaustive {
                let hit = find_expander(
                    params.left_size,
                    right,
                    params.first_degree,
                    e,
                    k,
                    size_seed,
                    params.max_attempts,
                )?;
                if let Some(v) = hit {
                    found = Some((v.graph, v.seed, Verification::Exhaustive));
                    break 'sizes;
                }
            } else {
                for attempt in 0..params.max_attempts as u64 {
                    let s = child_seed(size_seed, attempt);
                    let g = sample_random(params.left_size, right, params.first_degree, s)?;
                    if sampled_expansion_check(&g, e, k, params.sampled_per_size, s).holds {
                        found = Some((
                            g,
                            s,
                            Verification::Sampled {
                                per_size: params.sampled_per_size,
                            },
                        ));
                        break 'sizes;
                    }
                }
            }
        }
        let (first, first_seed, verification) = found.ok_or(RichBuildError::NoExpander(
            params.max_attempts * (params.max_doublings + 1),
        ))?;
        let second = PrimeHash::new(params.left_size, params.block_count(), params.prime_floor)?;
        let half = params.eps / two;
        let first_threshold = half.rich_threshold(params.first_degree);
        let second_threshold = half.rich_threshold(second.block_count());
        let rich_min_edges = params
            .eps
            .rich_threshold(params.first_degree * second.block_count());
        Ok(RichGraph {
            first: Arc::new(first),
            second,
            window: params.window,
            first_seed,
            verification,
            first_threshold,
            second_threshold,
            rich_min_edges,
        })
    }

    /// Rebuilds from a stored first factor; the caller vouches for its expansion.
    pub fn from_parts<T: Scalar>(
        first: BiGraph,
        first_seed: u64,
        verification: Verification,
        params: &RichParams<T>,
    ) -> Result<Self, RichBuildError> {
        let second = PrimeHash::new(params.left_size, params.block_count(), params.prime_floor)?;
        let half = params.eps / T::of(2);
        Ok(RichGraph {
            first_threshold: half.rich_threshold(first.degree()),
            second_threshold: half.rich_threshold(second.block_count()),
            rich_min_edges: params
                .eps
                .rich_threshold(first.degree() * second.block_count()),
            first: Arc::new(first),
            second,
            window: params.window,
            first_seed,
            verification,
        })
    }

    pub fn view(&self) -> ProductView<&BiGraph, &PrimeHash> {
        ProductView::new(&*self.first, &self.second).expect("factors share the left set")
    }

    pub fn degree(&self) -> usize {
        self.first.degree() * self.second.block_count()
    }

    pub fn right_size(&self) -> usize {
        self.first.right_size() * self.second.right_size()
    }

    pub fn matcher(&self) -> ProductRichMatcher {
        let first = ExpiringRichMatcher::with_threshold(
            self.first.clone(),
            self.window,
            self.first_threshold,
        );
        ProductRichMatcher::new(
            first,
            self.first.right_size(),
            self.second.clone(),
            self.second_threshold,
        )
    }

    /// Checks the first factor exhaustively when feasible, else by sampling.
    pub fn recheck_first<T: Scalar>(
        &self,
        eps: T,
        exhaustive_limit: u128,
        per_size: usize,
    ) -> bool {
        let e = (T::one() - eps / T::of(4)) * T::of(self.first.degree());
        let k = (self.window as usize).min(self.first.left_size());
        if subset_count(self.first.left_size(), k) <= exhaustive_limit {
            expansion_check(&*self.first, e, k).holds
        } else {
            sampled_expansion_check(&*self.first, e, k, per_size, self.first_seed).holds
        }
    }

    /// Flat `key=value` description.
    pub fn metadata(&self) -> Vec<(String, String)> {
        vec![
            ("left_size".into(), self.first.left_size().to_string()),
            ("window".into(), self.window.to_string()),
            ("first_degree".into(), self.first.degree().to_string()),
            ("first_right".into(), self.first.right_size().to_string()),
            ("first_seed".into(), self.first_seed.to_string()),
            ("first_verification".into(), self.verification.to_string()),
            ("first_threshold".into(), self.first_threshold.to_string()),
            (
                "second_blocks".into(),
                self.second.block_count().to_string(),
            ),
            (
                "second_prime_floor".into(),
                self.second.primes()[0].to_string(),
            ),
            ("second_right".into(), self.second.right_size().to_string()),
            ("second_threshold".into(), self.second_threshold.to_string()),
            ("degree".into(), self.degree().to_string()),
            ("right_size".into(), self.right_size().to_string()),
            ("rich_min_edges".into(), self.rich_min_edges.to_string()),
            (
                "first_load".into(),
                (2 * (1 + ceil_log2(self.window) as usize)).to_string(),
            ),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigraph::fixtures;
    use crate::game::{GameConfig, Referee, Turn};
    use crate::scalar::Rational;

    #[test]
    fn zero_slack_on_complete_graph_takes_everything() {
        let g = Arc::new(fixtures::complete(3, 4));
        let mut l = RichLadder::new(g, 2, 0.0);
        assert_eq!(l.threshold(), 4);
        assert_eq!(l.assign(0).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(l.assign(1).unwrap(), vec![4, 5, 6, 7]);
        assert_eq!(l.assign(2), Err(MatchError::NoRichCopy { x: 2 }));
    }

    #[test]
    fn half_slack_threshold() {
        let g = Arc::new(fixtures::complete(3, 5));
        let l = RichLadder::new(g, 1, Rational::new(1, 4));
        assert_eq!(l.threshold(), 3);
        let g = Arc::new(fixtures::complete(3, 6));
        assert_eq!(RichLadder::new(g, 1, 0.25f64).threshold(), 3);
    }

    #[test]
    fn release_checks_ownership() {
        let g = Arc::new(fixtures::complete(2, 2));
        let mut l = RichLadder::new(g, 1, 0.25);
        let zs = l.assign(0).unwrap();
        assert_eq!(l.release(1, &[5]), Err(MatchError::UnknownMatch { x: 1 }));
        l.release(0, &zs).unwrap();
        assert!(l.is_empty());
    }

    #[test]
    fn product_on_complete_factors_is_full() {
        let params = RichParams {
            first_degree: 3,
            first_right: 3,
            ..RichParams::new(4, 1, 0.5)
        };
        let g = RichGraph::build(&params).unwrap();
        let view = g.view();
        let mut m = g.matcher();
        let cfg = GameConfig::dynamic(2).with_expiration(1);
        let cfg = GameConfig {
            rich_min_edges: Some(g.rich_min_edges),
            ..cfg
        };
        let mut referee = Referee::new(&view, cfg).unwrap();
        let mut prev = None;
        for x in [0, 1, 2, 3, 0] {
            let out = referee
                .step(&Turn::retract_then(prev.into_iter().collect(), x), &mut m)
                .unwrap();
            assert!(out.loss.is_none(), "{:?}", out.loss);
            assert_eq!(out.reply.unwrap().len(), g.degree());
            prev = Some(x);
        }
    }

    #[test]
    fn plan_does_not_mutate() {
        let params = RichParams {
            first_degree: 3,
            first_right: 3,
            ..RichParams::new(4, 1, 0.5)
        };
        let g = RichGraph::build(&params).unwrap();
        let mut m = g.matcher();
        let a = m.plan(1).unwrap();
        let b = m.plan(1).unwrap();
        assert_eq!(a, b);
        let got = m.request(1).unwrap();
        assert_eq!(got, a.rights);
        let c = m.plan(2).unwrap();
        assert!(c.rights.iter().all(|p| !got.contains(p)));
    }

    #[test]
    fn block_count_formula() {
        let p = RichParams::new(1 << 16, 16, Rational::new(1, 4));
        assert_eq!(p.first_load(), 10);
        // (2/ε) · 10 · ⌊log 2^16 / log 17⌋ = 8 · 10 · 3
        assert_eq!(p.block_count(), 240);
    }
}
