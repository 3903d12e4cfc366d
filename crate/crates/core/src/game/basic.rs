//! Simple matchers: greedy baselines and a scripted replayer.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use super::{LossRule, MatchError, Matcher, Transcript};
use crate::bigraph::BiGraph;

/// Assigns the lowest-indexed neighbor whose load is below `load`.
#[derive(Debug, Clone)]
pub struct FirstFreeMatcher {
    graph: Arc<BiGraph>,
    load_limit: usize,
    load: HashMap<usize, usize>,
    probes: u64,
}

impl FirstFreeMatcher {
    pub fn new(graph: impl Into<Arc<BiGraph>>, load_limit: usize) -> Self {
        FirstFreeMatcher {
            graph: graph.into(),
            load_limit,
            load: HashMap::new(),
            probes: 0,
        }
    }
}

impl Matcher for FirstFreeMatcher {
    fn name(&self) -> String {
        "first-free".into()
    }

    fn request(&mut self, x: usize) -> Result<Vec<usize>, MatchError> {
        for &y in self.graph.neighbors(x) {
            self.probes += 1;
            let l = self.load.entry(y).or_default();
            if *l < self.load_limit {
                *l += 1;
                return Ok(vec![y]);
            }
        }
        Err(MatchError::NoFreeNeighbor { x })
    }

    fn retract(&mut self, _x: usize, assigned: &[usize]) -> Result<(), MatchError> {
        for y in assigned {
            self.probes += 1;
            if let Some(l) = self.load.get_mut(y) {
                *l = l.saturating_sub(1);
            }
        }
        Ok(())
    }

    fn probes(&self) -> u64 {
        self.probes
    }

    fn corrupt(&mut self) -> bool {
        self.load.clear();
        true
    }
}

/// Always replies with the first neighbor. Wins every game with capacity
/// at most 2 and load 2, since at most two edges ever coexist.
#[derive(Debug, Clone)]
pub struct TrivialMatcher {
    graph: Arc<BiGraph>,
    probes: u64,
    corrupted: bool,
}

impl TrivialMatcher {
    pub fn new(graph: impl Into<Arc<BiGraph>>) -> Self {
        TrivialMatcher {
            graph: graph.into(),
            probes: 0,
            corrupted: false,
        }
    }
}

impl Matcher for TrivialMatcher {
    fn name(&self) -> String {
        "trivial".into()
    }

    fn request(&mut self, x: usize) -> Result<Vec<usize>, MatchError> {
        self.probes += 1;
        let nbrs = self.graph.neighbors(x);
        let y = *nbrs.first().ok_or(MatchError::NoFreeNeighbor { x })?;
        if self.corrupted {
            return Ok(vec![y, y]);
        }
        Ok(vec![y])
    }

    fn retract(&mut self, _x: usize, _assigned: &[usize]) -> Result<(), MatchError> {
        self.probes += 1;
        Ok(())
    }

    fn probes(&self) -> u64 {
        self.probes
    }

    fn corrupt(&mut self) -> bool {
        self.corrupted = true;
        true
    }
}

/// Replays a fixed list of answers, one per request.
#[derive(Debug, Clone, Default)]
pub struct ScriptedMatcher {
    replies: VecDeque<Result<Vec<usize>, LossRule>>,
    probes: u64,
}

impl ScriptedMatcher {
    pub fn new(replies: Vec<Result<Vec<usize>, LossRule>>) -> Self {
        ScriptedMatcher {
            replies: replies.into(),
            probes: 0,
        }
    }

    pub fn from_transcript(t: &Transcript) -> Self {
        Self::new(t.recorded_replies())
    }
}

impl Matcher for ScriptedMatcher {
    fn name(&self) -> String {
        "scripted".into()
    }

    fn request(&mut self, _x: usize) -> Result<Vec<usize>, MatchError> {
        self.probes += 1;
        match self.replies.pop_front() {
            Some(Ok(r)) => Ok(r),
            Some(Err(rule)) => Err(MatchError::Premise(format!("recorded failure: {rule}"))),
            None => Err(MatchError::Unsupported("script exhausted".into())),
        }
    }

    fn retract(&mut self, _x: usize, _assigned: &[usize]) -> Result<(), MatchError> {
        Ok(())
    }

    fn probes(&self) -> u64 {
        self.probes
    }
}
