//! Matchers selectable by name, with the game configuration each one is
//! played under.

use std::sync::Arc;

use anyhow::{bail, Result};
use dynmatch::bigraph::Adjacency;
use dynmatch::dyn_match::{FastMatcher, FfpMatcher, PolyMatcher, PrepMode, TheoremMatcher};
use dynmatch::expire_match::{ExpiringMatcher, IncrementalMatcher, Projected, RoundLimitedMatcher};
use dynmatch::game::basic::{FirstFreeMatcher, TrivialMatcher};
use dynmatch::{BiGraph, GameConfig, MatchError, Matcher};

pub const MATCHERS: &[&str] = &[
    "first-free",
    "trivial",
    "incremental",
    "roundT",
    "expiring",
    "poly",
    "fast",
    "theorem",
    "ffp",
];

/// A matcher with an optional self-audit run after every turn.
pub trait Audited: Matcher {
    fn audit(&self) -> Result<(), String> {
        Ok(())
    }
}

impl<M: Audited + ?Sized> Audited for Box<M> {
    fn audit(&self) -> Result<(), String> {
        (**self).audit()
    }
}

impl Audited for FirstFreeMatcher {}
impl Audited for TrivialMatcher {}
impl Audited for FfpMatcher {}
impl Audited for Projected<IncrementalMatcher> {}
impl Audited for Projected<RoundLimitedMatcher> {}
impl Audited for Projected<ExpiringMatcher> {}

impl Audited for PolyMatcher {
    fn audit(&self) -> Result<(), String> {
        self.check_invariants()
    }
}

impl Audited for Projected<FastMatcher> {
    fn audit(&self) -> Result<(), String> {
        self.inner().check_invariants()
    }
}

impl Audited for TheoremMatcher {
    fn audit(&self) -> Result<(), String> {
        self.check_invariants()
    }
}

/// Corrupts the wrapped matcher's occupancy state just before request `at`.
pub struct Faulty {
    pub inner: Box<dyn Audited>,
    pub at: u64,
    pub seen: u64,
    pub fired: bool,
}

impl Matcher for Faulty {
    fn name(&self) -> String {
        format!("faulty-{}", self.inner.name())
    }

    fn requires_left_regular(&self) -> bool {
        self.inner.requires_left_regular()
    }

    fn request(&mut self, x: usize) -> Result<Vec<usize>, MatchError> {
        self.seen += 1;
        if self.seen == self.at {
            self.fired = self.inner.corrupt();
        }
        self.inner.request(x)
    }

    fn retract(&mut self, x: usize, assigned: &[usize]) -> Result<(), MatchError> {
        self.inner.retract(x, assigned)
    }

    fn probes(&self) -> u64 {
        self.inner.probes()
    }

    fn corrupt(&mut self) -> bool {
        self.inner.corrupt()
    }
}

impl Audited for Faulty {
    fn audit(&self) -> Result<(), String> {
        self.inner.audit()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MatcherOptions {
    pub capacity: usize,
    /// Preparation period or window; defaults to `4K`.
    pub rounds: Option<u64>,
    /// Load limit for `first-free`.
    pub load: usize,
    /// Chunked preparation budget for `theorem`; blocking when absent.
    pub prep_budget: Option<u64>,
    pub induced_check: bool,
}

/// Builds the named matcher on `g` with the configuration it plays under.
pub fn build(
    name: &str,
    g: &Arc<BiGraph>,
    opts: MatcherOptions,
) -> Result<(Box<dyn Audited>, GameConfig)> {
    let k = opts.capacity;
    let r = g.right_size();
    let rounds = opts.rounds.unwrap_or(4 * k as u64);
    let dynamic = GameConfig::dynamic(k);
    Ok(match name {
        "first-free" => (
            Box::new(FirstFreeMatcher::new(g.clone(), opts.load)),
            dynamic.with_load(opts.load),
        ),
        "trivial" => (
            Box::new(TrivialMatcher::new(g.clone())),
            dynamic.with_load(2),
        ),
        "incremental" => {
            let m = IncrementalMatcher::new(g.clone(), k);
            let load = m.ladder().copies();
            (
                Box::new(Projected::new(m, r)),
                GameConfig::incremental(k).with_load(load),
            )
        }
        "roundT" => {
            let m = RoundLimitedMatcher::new(g.clone(), k, rounds);
            let load = m.ladder().copies();
            (
                Box::new(Projected::new(m, r)),
                dynamic.with_load(load).with_round_limit(rounds),
            )
        }
        "expiring" => {
            let m = ExpiringMatcher::new(g.clone(), k, rounds);
            let load = m.total_copies();
            (
                Box::new(Projected::new(m, r)),
                dynamic.with_load(load).with_expiration(rounds),
            )
        }
        "poly" => (Box::new(PolyMatcher::new(g.clone(), k)?), dynamic),
        "fast" => {
            let m = FastMatcher::new(g.clone(), g.clone(), k, rounds)?
                .with_induced_check(opts.induced_check);
            let load = m.clone_copies();
            (Box::new(Projected::new(m, r)), dynamic.with_load(load))
        }
        "theorem" => {
            let mode = opts
                .prep_budget
                .map_or(PrepMode::Blocking, |budget| PrepMode::Chunked { budget });
            let m = TheoremMatcher::new(g.clone(), k, rounds, mode)?
                .with_induced_check(opts.induced_check);
            let load = m.load_bound();
            (Box::new(m), dynamic.with_load(load))
        }
        "ffp" => (Box::new(FfpMatcher::new(g.clone(), k)?), dynamic),
        other => bail!(
            "unknown matcher {other:?}; expected one of {}",
            MATCHERS.join(", ")
        ),
    })
}
