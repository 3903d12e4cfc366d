//! Long-running games with per-operation statistics.

use std::time::Instant;

use thiserror::Error;

use super::adversary::Requester;
use super::{GameConfig, IllegalMove, LossReport, Matcher, Referee, Transcript};
use crate::bigraph::Adjacency;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SoakError {
    #[error("requester made an illegal move: {0}")]
    Illegal(#[from] IllegalMove),
    #[error("invariant violated after request {request}: {msg}")]
    Invariant { request: u64, msg: String },
    #[error(transparent)]
    Config(#[from] super::ConfigError),
}

/// Statistics of one game.
#[derive(Debug, Clone, Default)]
pub struct SoakStats {
    pub turns: u64,
    pub requests: u64,
    pub retractions: u64,
    pub loss: Option<LossReport>,
    pub max_load: usize,
    pub request_probes: Vec<u64>,
    pub retract_probes: Vec<u64>,
    /// Wall time of each turn in nanoseconds.
    pub turn_nanos: Vec<u64>,
    pub transcript: Transcript,
}

/// Nearest-rank percentile of an unsorted sample; 0 for an empty one.
pub fn percentile(values: &[u64], p: f64) -> u64 {
    if values.is_empty() {
        return 0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

impl SoakStats {
    /// Flat `key=value` report lines.
    pub fn report_lines(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("turns".to_string(), self.turns.to_string()),
            ("requests".to_string(), self.requests.to_string()),
            ("retractions".to_string(), self.retractions.to_string()),
            (
                "losses".to_string(),
                u64::from(self.loss.is_some()).to_string(),
            ),
            ("max_load".to_string(), self.max_load.to_string()),
        ];
        if let Some(loss) = &self.loss {
            out.push(("loss".to_string(), loss.to_string()));
        }
        for (name, sample) in [
            ("request_probes", &self.request_probes),
            ("retract_probes", &self.retract_probes),
            ("turn_nanos", &self.turn_nanos),
        ] {
            for p in [50.0, 99.0, 100.0] {
                out.push((format!("{name}_p{p}"), percentile(sample, p).to_string()));
            }
        }
        out
    }
}

/// Plays up to `max_turns` turns. After each accepted turn `check` sees the
/// referee and the matcher; an error from it aborts the game.
pub fn run_game<M, C>(
    graph: &dyn Adjacency,
    cfg: GameConfig,
    matcher: &mut M,
    requester: &mut dyn Requester,
    max_turns: u64,
    mut check: C,
) -> Result<SoakStats, SoakError>
where
    M: Matcher,
    C: FnMut(&Referee<'_>, &M) -> Result<(), String>,
{
    let mut referee = Referee::for_matcher(graph, cfg, matcher)?;
    let mut stats = SoakStats::default();
    while stats.turns < max_turns {
        let Some(turn) = requester.next_turn(graph, referee.config(), referee.state()) else {
            break;
        };
        let start = Instant::now();
        let outcome = referee.step(&turn, matcher)?;
        stats.turn_nanos.push(start.elapsed().as_nanos() as u64);
        stats.turns += 1;
        stats.retractions += turn.retract.len() as u64;
        stats.retract_probes.extend(&outcome.retract_probes);
        if let Some(p) = outcome.request_probes {
            stats.requests += 1;
            stats.request_probes.push(p);
        }
        if let Some(loss) = outcome.loss {
            stats.loss = Some(loss);
            break;
        }
        check(&referee, matcher).map_err(|msg| SoakError::Invariant {
            request: referee.state().round(),
            msg,
        })?;
    }
    stats.max_load = referee.state().max_load_seen();
    stats.transcript = referee.into_transcript();
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigraph::sample_random;
    use crate::game::adversary::RandomAdversary;
    use crate::game::basic::FirstFreeMatcher;

    #[test]
    fn percentiles_use_nearest_rank() {
        let v: Vec<u64> = (1..=100).rev().collect();
        assert_eq!(percentile(&v, 50.0), 50);
        assert_eq!(percentile(&v, 99.0), 99);
        assert_eq!(percentile(&v, 100.0), 100);
        assert_eq!(percentile(&[], 50.0), 0);
        assert_eq!(percentile(&[7], 1.0), 7);
    }

    #[test]
    fn stats_and_check_hook() {
        let g = sample_random(20, 60, 5, 3).unwrap();
        let mut m = FirstFreeMatcher::new(g.clone(), 1);
        let stats = run_game(
            &g,
            GameConfig::dynamic(3),
            &mut m,
            &mut RandomAdversary::new(2),
            200,
            |_, _| Ok(()),
        )
        .unwrap();
        assert_eq!(stats.turns, 200);
        assert_eq!(stats.request_probes.len() as u64, stats.requests);
        assert!(stats.loss.is_none());
        assert_eq!(stats.max_load, 1);
        let err = run_game(
            &g,
            GameConfig::dynamic(3),
            &mut m,
            &mut RandomAdversary::new(2),
            200,
            |r, _| {
                if r.state().round() >= 5 {
                    Err("stop".into())
                } else {
                    Ok(())
                }
            },
        )
        .unwrap_err();
        assert_eq!(
            err,
            SoakError::Invariant {
                request: 5,
                msg: "stop".into()
            }
        );
    }
}
