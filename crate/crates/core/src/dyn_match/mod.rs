//! Dynamic matchers for the unrestricted game.
//!
//! - [`PolyMatcher`]: load 1, polynomial work per operation.
//! - [`FastMatcher`]: fast path on an expander plus slow precomputed matches.
//! - [`TheoremMatcher`]: two alternating fast matchers, projected to load.
//! - [`FfpMatcher`]: exhaustive oracle for tiny graphs.

pub mod fast;
pub mod ffp;
pub mod poly;
pub mod theorem;

pub use fast::{FastMatcher, PrepStats};
pub use ffp::{ffp_premise, FfpMatcher, FFP_MAX_LEFT};
pub use poly::PolyMatcher;
pub use theorem::{PrepMode, TheoremMatcher};
