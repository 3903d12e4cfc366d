//! Dynamic bipartite matching on expander graphs.
//!
//! - [`bigraph`]: graphs, graph algebra, generators and brute-force checks.
//! - [`game`]: the matching game referee, adversaries and transcripts.
//! - [`expire_match`]: clone-ladder matchers for incremental, round-limited
//!   and expiring games.
//! - [`rich_match`]: matchers that hand each request most of its neighbors.
//! - [`dyn_match`]: dynamic matchers for the unrestricted game.
//! - [`bitprobe`]: one-probe storage of dynamic sets.
//! - [`connector`]: constant-depth connectors with fast path finding.
//!
//! Thresholds and slack parameters are generic over [`Scalar`]; the aliases
//! below fix them to exact rationals.

pub mod bigraph;
pub mod bitprobe;
pub mod connector;
pub mod dyn_match;
pub mod expire_match;
pub mod game;
pub mod rich_match;
pub mod rng;
pub mod scalar;

pub use bigraph::{Adjacency, BiGraph, GraphError};
pub use game::{GameConfig, MatchError, Matcher, Referee};
pub use scalar::{Rational, Scalar};

/// Scalar used by the command-line tools and the aliases below.
pub type DefaultScalar = Rational;

pub type BitProbe = bitprobe::BitProbe<DefaultScalar>;

pub type RichParams = rich_match::RichParams<DefaultScalar>;
