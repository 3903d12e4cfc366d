//! The composed dynamic matcher: two fast matchers alternate every `T`
//! requests, so one half can prepare while the other serves.
//!
//! Both halves use the same graph `g` as fast and slow graph; replies are
//! projected back onto `g`, whose load is then at most twice the number of
//! clone copies of one half. Capacities up to 2 are served by the trivial
//! load-2 matcher.

use std::collections::HashMap;
use std::sync::Arc;

use super::fast::FastMatcher;
use crate::bigraph::{Adjacency, BiGraph};
use crate::game::basic::TrivialMatcher;
use crate::game::{MatchError, Matcher};

/// When the idle half runs its preparation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrepMode {
    /// All at once when its window starts.
    Blocking,
    /// Spread over the other half's requests, about `budget` probes each.
    Chunked { budget: u64 },
}

#[derive(Debug, Clone)]
struct Halves {
    halves: [FastMatcher; 2],
    window: u64,
    served: u64,
    mode: PrepMode,
    overruns: u64,
}

#[derive(Debug, Clone)]
enum Inner {
    Trivial(TrivialMatcher),
    Halves(Box<Halves>),
}

#[derive(Debug, Clone)]
pub struct TheoremMatcher {
    inner: Inner,
    right_size: usize,
    original: HashMap<usize, usize>,
}

impl TheoremMatcher {
    /// `g` should be left-regular with `(2D/3 + 2)`-expansion up to `capacity`.
    pub fn new(
        g: impl Into<Arc<BiGraph>>,
        capacity: usize,
        rounds: u64,
        mode: PrepMode,
    ) -> Result<Self, MatchError> {
        let g = g.into();
        let right_size = g.right_size();
        let inner = if capacity <= 2 {
            Inner::Trivial(TrivialMatcher::new(g))
        } else {
            let half = FastMatcher::new(g.clone(), g, capacity, rounds)?;
            let window = half.rounds();
            Inner::Halves(Box::new(Halves {
                halves: [half.clone(), half],
                window,
                served: 0,
                mode,
                overruns: 0,
            }))
        };
        Ok(TheoremMatcher {
            inner,
            right_size,
            original: HashMap::new(),
        })
    }

    pub fn with_induced_check(mut self, on: bool) -> Self {
        if let Inner::Halves(h) = &mut self.inner {
            for half in &mut h.halves {
                *half = half.clone().with_induced_check(on);
            }
        }
        self
    }

    /// Load bound on `g`.
    pub fn load_bound(&self) -> usize {
        match &self.inner {
            Inner::Trivial(_) => 2,
            Inner::Halves(h) => 2 * h.halves[0].clone_copies(),
        }
    }

    /// The two fast halves, if the capacity is at least 3.
    pub fn halves(&self) -> Option<&[FastMatcher; 2]> {
        match &self.inner {
            Inner::Trivial(_) => None,
            Inner::Halves(h) => Some(&h.halves),
        }
    }

    /// Preparation period `T`, if any.
    pub fn window(&self) -> Option<u64> {
        match &self.inner {
            Inner::Trivial(_) => None,
            Inner::Halves(h) => Some(h.window),
        }
    }

    /// Windows whose chunked preparation had to be finished at switch time.
    pub fn prep_overruns(&self) -> u64 {
        match &self.inner {
            Inner::Trivial(_) => 0,
            Inner::Halves(h) => h.overruns,
        }
    }

    /// Total preparation work so far.
    pub fn prep_probes(&self) -> u64 {
        self.halves()
            .map_or(0, |h| h[0].stats().probes + h[1].stats().probes)
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        match &self.inner {
            Inner::Trivial(_) => Ok(()),
            Inner::Halves(h) => {
                for (i, half) in h.halves.iter().enumerate() {
                    half.check_invariants()
                        .map_err(|e| format!("half {i}: {e}"))?;
                }
                Ok(())
            }
        }
    }
}

impl Halves {
    fn span(&self) -> usize {
        self.halves[0].reply_space()
    }

    fn request(&mut self, x: usize) -> Result<usize, MatchError> {
        let h = ((self.served / self.window) % 2) as usize;
        if self.served.is_multiple_of(self.window) {
            match self.mode {
                PrepMode::Blocking => self.halves[h].prepare()?,
                PrepMode::Chunked { .. } => {
                    if self.halves[h].prep_in_progress() {
                        if !self.halves[h].run_prep(0)? {
                            self.overruns += 1;
                            self.halves[h].run_prep(u64::MAX)?;
                        }
                    } else {
                        self.halves[h].prepare()?;
                    }
                    self.halves[1 - h].begin_prep()?;
                }
            }
        }
        self.served += 1;
        let z = self.halves[h].serve(x)?;
        if let PrepMode::Chunked { budget } = self.mode {
            self.halves[1 - h].run_prep(budget)?;
        }
        Ok(h * self.span() + z)
    }

    fn retract(&mut self, x: usize, z: usize) -> Result<(), MatchError> {
        let span = self.span();
        let h = z / span;
        if h >= 2 {
            return Err(MatchError::UnknownMatch { x });
        }
        self.halves[h].release(x, z % span)
    }
}

impl Matcher for TheoremMatcher {
    fn name(&self) -> String {
        "theorem".into()
    }

    fn requires_left_regular(&self) -> bool {
        matches!(self.inner, Inner::Halves(_))
    }

    fn request(&mut self, x: usize) -> Result<Vec<usize>, MatchError> {
        match &mut self.inner {
            Inner::Trivial(t) => t.request(x),
            Inner::Halves(h) => {
                let z = h.request(x)?;
                self.original.insert(x, z);
                Ok(vec![z % self.right_size])
            }
        }
    }

    fn retract(&mut self, x: usize, assigned: &[usize]) -> Result<(), MatchError> {
        match &mut self.inner {
            Inner::Trivial(t) => t.retract(x, assigned),
            Inner::Halves(h) => {
                let z = self
                    .original
                    .remove(&x)
                    .ok_or(MatchError::UnknownMatch { x })?;
                h.retract(x, z)
            }
        }
    }

    /// Request-path work; preparation work is reported by [`TheoremMatcher::prep_probes`].
    fn probes(&self) -> u64 {
        match &self.inner {
            Inner::Trivial(t) => t.probes(),
            Inner::Halves(h) => h.halves[0].probes() + h.halves[1].probes(),
        }
    }

    fn corrupt(&mut self) -> bool {
        match &mut self.inner {
            Inner::Trivial(t) => t.corrupt(),
            Inner::Halves(h) => {
                h.halves.iter_mut().for_each(|f| f.corrupt_ladder());
                true
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigraph::fixtures;
    use crate::game::adversary::RandomAdversary;
    use crate::game::soak::run_game;
    use crate::game::GameConfig;

    #[test]
    fn small_capacity_uses_trivial_matcher() {
        let g = fixtures::right_intro();
        let m = TheoremMatcher::new(g, 2, 4, PrepMode::Blocking).unwrap();
        assert_eq!(m.load_bound(), 2);
        assert!(m.halves().is_none());
    }

    #[test]
    fn complete_graph_soak_in_both_modes() {
        let g = fixtures::complete(12, 12);
        for mode in [PrepMode::Blocking, PrepMode::Chunked { budget: 50 }] {
            let mut m = TheoremMatcher::new(g.clone(), 3, 6, mode).unwrap();
            let cfg = GameConfig::dynamic(3).with_load(m.load_bound());
            let stats = run_game(
                &g,
                cfg,
                &mut m,
                &mut RandomAdversary::new(4),
                2000,
                |_, m| m.check_invariants(),
            )
            .unwrap();
            assert!(stats.loss.is_none(), "{mode:?}: {:?}", stats.loss);
        }
    }
}
