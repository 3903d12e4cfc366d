//! Matching games: configuration, state, the [`Matcher`] interface every
//! strategy implements, and the [`Referee`] that validates both players.
//!
//! Rounds are counted as requests: the `r`-th request of a game happens in
//! round `r` and the edges it creates are born in round `r`. Under
//! `T`-expiration an edge born in round `b` must be retracted before the
//! request of round `b + T`.

pub mod adversary;
pub mod basic;
pub mod search;
pub mod soak;
pub mod transcript;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::bigraph::Adjacency;
use crate::scalar::Scalar;
pub use transcript::{Move, Transcript};

/// Errors a matcher reports when it cannot serve a request or retraction.
/// Under the matcher's stated premises these are invariant violations.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatchError {
    #[error("left node {x} has no free neighbor")]
    NoFreeNeighbor { x: usize },
    #[error("left node {x} has no copy with enough free neighbors")]
    NoRichCopy { x: usize },
    #[error("no unmatched right node is private for the {pending} pending protected nodes")]
    NoPrivateNode { pending: usize },
    #[error("left node {x} has no active match")]
    UnknownMatch { x: usize },
    #[error("left node {x} is already matched")]
    AlreadyActive { x: usize },
    #[error("round limit {limit} exceeded")]
    RoundLimit { limit: u64 },
    #[error("half {half} still holds edges when it becomes active again")]
    StaleEdgeAtSwitch { half: usize },
    #[error("retraction in an incremental game")]
    IncrementalRetract,
    #[error("at-risk node {x} has no precomputed match")]
    MissingPrecomputed { x: usize },
    #[error("{at_risk} at-risk nodes exceed the limit {limit}")]
    TooManyAtRisk { at_risk: usize, limit: usize },
    #[error("capacity {capacity} exceeded")]
    CapacityExceeded { capacity: usize },
    #[error("premise violated: {0}")]
    Premise(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// A matching strategy. Replies are right nodes of the graph the referee
/// plays on; several right nodes form one rich assignment.
pub trait Matcher {
    fn name(&self) -> String;

    fn requires_left_regular(&self) -> bool {
        false
    }

    fn request(&mut self, x: usize) -> Result<Vec<usize>, MatchError>;

    /// Releases the assignment `assigned` previously returned for `x`.
    fn retract(&mut self, x: usize, assigned: &[usize]) -> Result<(), MatchError>;

    /// Elementary work performed so far.
    fn probes(&self) -> u64;

    /// Fault injection for tests: corrupts internal bookkeeping so that a
    /// later reply violates the game rules. Returns false if unsupported.
    fn corrupt(&mut self) -> bool {
        false
    }
}

impl<M: Matcher + ?Sized> Matcher for Box<M> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn requires_left_regular(&self) -> bool {
        (**self).requires_left_regular()
    }
    fn request(&mut self, x: usize) -> Result<Vec<usize>, MatchError> {
        (**self).request(x)
    }
    fn retract(&mut self, x: usize, assigned: &[usize]) -> Result<(), MatchError> {
        (**self).retract(x, assigned)
    }
    fn probes(&self) -> u64 {
        (**self).probes()
    }
    fn corrupt(&mut self) -> bool {
        (**self).corrupt()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("capacity must be at least 1")]
    ZeroCapacity,
    #[error("load must be at least 1")]
    ZeroLoad,
    #[error("incremental games cannot have expiration")]
    IncrementalWithExpiration,
    #[error("expiration must be at least 1")]
    ZeroExpiration,
    #[error("rich games need a left-regular graph")]
    RichNeedsRegular,
    #[error("matcher {0} requires a left-regular graph")]
    MatcherNeedsRegular(String),
}

/// Game parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameConfig {
    /// `K`: at most `K - 1` left nodes may be matched when a request is made.
    pub capacity: usize,
    /// `ℓ`: maximum number of edges on one right node.
    pub load: usize,
    pub expiration: Option<u64>,
    pub round_limit: Option<u64>,
    pub incremental: bool,
    /// Minimum assignment size for rich games, `⌈(1 - ε) D⌉`.
    pub rich_min_edges: Option<usize>,
}

impl GameConfig {
    pub fn dynamic(capacity: usize) -> Self {
        GameConfig {
            capacity,
            load: 1,
            expiration: None,
            round_limit: None,
            incremental: false,
            rich_min_edges: None,
        }
    }

    pub fn incremental(capacity: usize) -> Self {
        GameConfig {
            incremental: true,
            ..Self::dynamic(capacity)
        }
    }

    pub fn with_load(mut self, load: usize) -> Self {
        self.load = load;
        self
    }

    pub fn with_expiration(mut self, t: u64) -> Self {
        self.expiration = Some(t);
        self
    }

    pub fn with_round_limit(mut self, t: u64) -> Self {
        self.round_limit = Some(t);
        self
    }

    /// Rich game with slack `eps` on a left-regular graph of degree `degree`.
    pub fn with_richness<T: Scalar>(mut self, eps: T, degree: usize) -> Self {
        self.rich_min_edges = Some(eps.rich_threshold(degree));
        self
    }

    pub fn validate(&self, g: &dyn Adjacency) -> Result<(), ConfigError> {
        if self.capacity == 0 {
            return Err(ConfigError::ZeroCapacity);
        }
        if self.load == 0 {
            return Err(ConfigError::ZeroLoad);
        }
        if self.incremental && self.expiration.is_some() {
            return Err(ConfigError::IncrementalWithExpiration);
        }
        if self.expiration == Some(0) {
            return Err(ConfigError::ZeroExpiration);
        }
        if self.rich_min_edges.is_some() && !g.is_left_regular() {
            return Err(ConfigError::RichNeedsRegular);
        }
        Ok(())
    }
}

/// One active request: its right nodes and the round it was served in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub rights: Vec<usize>,
    pub birth: u64,
}

/// The evolving matching: active assignments per left node and right loads.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchState {
    assignments: BTreeMap<usize, Assignment>,
    load: HashMap<usize, usize>,
    round: u64,
    max_load: usize,
}

impl MatchState {
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn active_count(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_active(&self, x: usize) -> bool {
        self.assignments.contains_key(&x)
    }

    pub fn assignment(&self, x: usize) -> Option<&Assignment> {
        self.assignments.get(&x)
    }

    pub fn assignments(&self) -> impl Iterator<Item = (usize, &Assignment)> {
        self.assignments.iter().map(|(&x, a)| (x, a))
    }

    pub fn load_of(&self, y: usize) -> usize {
        self.load.get(&y).copied().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.assignments.values().map(|a| a.rights.len()).sum()
    }

    /// Largest load any right node has carried so far.
    pub fn max_load_seen(&self) -> usize {
        self.max_load
    }

    pub fn current_max_load(&self) -> usize {
        self.load.values().copied().max().unwrap_or(0)
    }

    fn insert(&mut self, x: usize, rights: Vec<usize>) {
        for &y in &rights {
            let l = self.load.entry(y).or_default();
            *l += 1;
            self.max_load = self.max_load.max(*l);
        }
        self.assignments.insert(
            x,
            Assignment {
                rights,
                birth: self.round,
            },
        );
    }

    fn remove(&mut self, x: usize) -> Option<Assignment> {
        let a = self.assignments.remove(&x)?;
        for y in &a.rights {
            let l = self.load.get_mut(y).expect("load tracked");
            *l -= 1;
            if *l == 0 {
                self.load.remove(y);
            }
        }
        Some(a)
    }

    /// Recomputes loads from the assignments and compares.
    pub fn check_consistency(&self, cfg: &GameConfig) -> Result<(), String> {
        let mut recount: HashMap<usize, usize> = HashMap::new();
        for a in self.assignments.values() {
            for &y in &a.rights {
                *recount.entry(y).or_default() += 1;
            }
            if let Some(t) = cfg.expiration {
                if self.round >= a.birth + t {
                    return Err(format!(
                        "edge born in round {} outlived expiration {t}",
                        a.birth
                    ));
                }
            }
        }
        if recount != self.load {
            return Err("load map out of sync with assignments".into());
        }
        if let Some((&y, &l)) = self.load.iter().find(|&(_, &l)| l > cfg.load) {
            return Err(format!("right node {y} carries load {l} > {}", cfg.load));
        }
        if self.assignments.len() > cfg.capacity {
            return Err(format!(
                "{} active requests exceed capacity {}",
                self.assignments.len(),
                cfg.capacity
            ));
        }
        Ok(())
    }
}

/// One Requester turn: retract the assignments of some left nodes, then
/// optionally request a left node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Turn {
    pub retract: Vec<usize>,
    pub request: Option<usize>,
}

impl Turn {
    pub fn request(x: usize) -> Self {
        Turn {
            retract: Vec::new(),
            request: Some(x),
        }
    }

    pub fn retract_then(retract: Vec<usize>, x: usize) -> Self {
        Turn {
            retract,
            request: Some(x),
        }
    }
}

/// A Requester move that breaks the game rules. Never counted as a Matcher loss.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IllegalMove {
    #[error("the game already ended with a loss")]
    AfterLoss,
    #[error("retraction in an incremental game")]
    RetractInIncremental,
    #[error("left node {x} is not matched")]
    RetractInactive { x: usize },
    #[error("left node {x} retracted twice in one turn")]
    DuplicateRetract { x: usize },
    #[error("request {x} out of range (left size {left_size})")]
    RequestOutOfRange { x: usize, left_size: usize },
    #[error("left node {x} is already matched")]
    RequestActive { x: usize },
    #[error("{active} matched nodes at request time, capacity allows {max}")]
    OverCapacity { active: usize, max: usize },
    #[error("edge of {x} born in round {birth} must be retracted before round {round}")]
    Expired { x: usize, birth: u64, round: u64 },
    #[error("round limit {limit} reached")]
    RoundLimit { limit: u64 },
}

/// Why the Matcher lost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossRule {
    MatcherError,
    RetractError,
    EmptyReply,
    ForeignEdge,
    DuplicateEdge,
    Overload,
    NotRich,
}

impl LossRule {
    pub fn as_str(self) -> &'static str {
        match self {
            LossRule::MatcherError => "matcher-error",
            LossRule::RetractError => "retract-error",
            LossRule::EmptyReply => "empty-reply",
            LossRule::ForeignEdge => "foreign-edge",
            LossRule::DuplicateEdge => "duplicate-edge",
            LossRule::Overload => "overload",
            LossRule::NotRich => "not-rich",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "matcher-error" => LossRule::MatcherError,
            "retract-error" => LossRule::RetractError,
            "empty-reply" => LossRule::EmptyReply,
            "foreign-edge" => LossRule::ForeignEdge,
            "duplicate-edge" => LossRule::DuplicateEdge,
            "overload" => LossRule::Overload,
            "not-rich" => LossRule::NotRich,
            _ => return None,
        })
    }
}

impl fmt::Display for LossRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LossReport {
    pub round: u64,
    pub request: Option<usize>,
    pub rule: LossRule,
    pub detail: String,
}

impl fmt::Display for LossReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "round {}: {} ({})", self.round, self.rule, self.detail)
    }
}

/// Result of an accepted turn.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepOutcome {
    pub reply: Option<Vec<usize>>,
    pub loss: Option<LossReport>,
    /// Matcher work spent on each retraction of the turn.
    pub retract_probes: Vec<u64>,
    /// Matcher work spent on the request, if any.
    pub request_probes: Option<u64>,
}

/// Validates every move of both players and keeps the game state.
#[derive(Clone)]
pub struct Referee<'g> {
    graph: &'g dyn Adjacency,
    cfg: GameConfig,
    state: MatchState,
    transcript: Transcript,
    loss: Option<LossReport>,
}

impl<'g> Referee<'g> {
    pub fn new(graph: &'g dyn Adjacency, cfg: GameConfig) -> Result<Self, ConfigError> {
        cfg.validate(graph)?;
        Ok(Referee {
            graph,
            cfg,
            state: MatchState::default(),
            transcript: Transcript::default(),
            loss: None,
        })
    }

    /// Like [`Referee::new`], also rejecting matchers that need a regular graph.
    pub fn for_matcher(
        graph: &'g dyn Adjacency,
        cfg: GameConfig,
        matcher: &dyn Matcher,
    ) -> Result<Self, ConfigError> {
        if matcher.requires_left_regular() && !graph.is_left_regular() {
            return Err(ConfigError::MatcherNeedsRegular(matcher.name()));
        }
        Self::new(graph, cfg)
    }

    pub fn graph(&self) -> &'g dyn Adjacency {
        self.graph
    }

    pub fn config(&self) -> &GameConfig {
        &self.cfg
    }

    pub fn state(&self) -> &MatchState {
        &self.state
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }

    pub fn loss(&self) -> Option<&LossReport> {
        self.loss.as_ref()
    }

    /// Checks a turn against the rules without changing anything.
    pub fn check_turn(&self, turn: &Turn) -> Result<(), IllegalMove> {
        if self.loss.is_some() {
            return Err(IllegalMove::AfterLoss);
        }
        if self.cfg.incremental && !turn.retract.is_empty() {
            return Err(IllegalMove::RetractInIncremental);
        }
        for (i, &x) in turn.retract.iter().enumerate() {
            if !self.state.is_active(x) {
                return Err(IllegalMove::RetractInactive { x });
            }
            if turn.retract[..i].contains(&x) {
                return Err(IllegalMove::DuplicateRetract { x });
            }
        }
        let Some(x) = turn.request else {
            return Ok(());
        };
        let left_size = self.graph.left_size();
        if x >= left_size {
            return Err(IllegalMove::RequestOutOfRange { x, left_size });
        }
        if self.state.is_active(x) && !turn.retract.contains(&x) {
            return Err(IllegalMove::RequestActive { x });
        }
        let active = self.state.active_count() - turn.retract.len();
        if active + 1 > self.cfg.capacity {
            return Err(IllegalMove::OverCapacity {
                active,
                max: self.cfg.capacity - 1,
            });
        }
        let round = self.state.round + 1;
        if let Some(limit) = self.cfg.round_limit {
            if round > limit {
                return Err(IllegalMove::RoundLimit { limit });
            }
        }
        if let Some(t) = self.cfg.expiration {
            for (y, a) in self.state.assignments() {
                if !turn.retract.contains(&y) && round >= a.birth + t {
                    return Err(IllegalMove::Expired {
                        x: y,
                        birth: a.birth,
                        round,
                    });
                }
            }
        }
        Ok(())
    }

    /// Plays one Requester turn and the Matcher's reply.
    pub fn step(
        &mut self,
        turn: &Turn,
        matcher: &mut dyn Matcher,
    ) -> Result<StepOutcome, IllegalMove> {
        self.check_turn(turn)?;
        let mut outcome = StepOutcome::default();
        for &x in &turn.retract {
            let a = self.state.remove(x).expect("checked active");
            self.transcript.push(Move::Retract { x, y: a.rights[0] });
            let before = matcher.probes();
            let res = matcher.retract(x, &a.rights);
            outcome
                .retract_probes
                .push(matcher.probes().saturating_sub(before));
            if let Err(e) = res {
                return Ok(self.lose(outcome, None, LossRule::RetractError, e.to_string()));
            }
        }
        let Some(x) = turn.request else {
            self.debug_check();
            return Ok(outcome);
        };
        self.state.round += 1;
        self.transcript.push(Move::Request { x });
        let before = matcher.probes();
        let reply = matcher.request(x);
        outcome.request_probes = Some(matcher.probes().saturating_sub(before));
        let reply = match reply {
            Ok(r) => r,
            Err(e) => {
                return Ok(self.lose(outcome, Some(x), LossRule::MatcherError, e.to_string()))
            }
        };
        if let Some((rule, detail)) = self.validate_reply(x, &reply) {
            self.transcript.push(Move::Reply {
                x,
                rights: reply.clone(),
            });
            return Ok(self.lose(outcome, Some(x), rule, detail));
        }
        self.transcript.push(Move::Reply {
            x,
            rights: reply.clone(),
        });
        self.state.insert(x, reply.clone());
        outcome.reply = Some(reply);
        self.debug_check();
        Ok(outcome)
    }

    fn validate_reply(&self, x: usize, reply: &[usize]) -> Option<(LossRule, String)> {
        if reply.is_empty() {
            return Some((LossRule::EmptyReply, format!("no edge for {x}")));
        }
        for (i, &y) in reply.iter().enumerate() {
            if y >= self.graph.right_size() || !self.graph.has_edge(x, y) {
                return Some((LossRule::ForeignEdge, format!("({x},{y}) is not an edge")));
            }
            if reply[..i].contains(&y) {
                return Some((LossRule::DuplicateEdge, format!("({x},{y}) listed twice")));
            }
            if self.state.load_of(y) + 1 > self.cfg.load {
                return Some((
                    LossRule::Overload,
                    format!(
                        "right node {y} would carry {} > {}",
                        self.state.load_of(y) + 1,
                        self.cfg.load
                    ),
                ));
            }
        }
        if let Some(min) = self.cfg.rich_min_edges {
            if reply.len() < min {
                return Some((
                    LossRule::NotRich,
                    format!("{} edges for {x}, need {min}", reply.len()),
                ));
            }
        }
        None
    }

    fn lose(
        &mut self,
        mut outcome: StepOutcome,
        x: Option<usize>,
        rule: LossRule,
        detail: String,
    ) -> StepOutcome {
        let report = LossReport {
            round: self.state.round,
            request: x,
            rule,
            detail,
        };
        self.transcript.push(Move::Fail { rule });
        self.loss = Some(report.clone());
        outcome.loss = Some(report);
        outcome
    }

    fn debug_check(&self) {
        #[cfg(debug_assertions)]
        if let Err(e) = self.state.check_consistency(&self.cfg) {
            panic!("referee invariant broken: {e}");
        }
    }
}
