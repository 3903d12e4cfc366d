//! Line-oriented game transcripts and deterministic replay.
//!
//! ```text
//! REQ <x>
//! RET <x> <y>
//! REP <x> <y1> <y2> ...
//! FAIL <rule>
//! ```
//!
//! `RET x y` retracts the assignment of `x`, whose first right node is `y`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::{GameConfig, IllegalMove, LossReport, LossRule, MatchState, Matcher, Referee, Turn};
use crate::bigraph::Adjacency;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Move {
    Request { x: usize },
    Retract { x: usize, y: usize },
    Reply { x: usize, rights: Vec<usize> },
    Fail { rule: LossRule },
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Move::Request { x } => write!(f, "REQ {x}"),
            Move::Retract { x, y } => write!(f, "RET {x} {y}"),
            Move::Reply { x, rights } => {
                write!(f, "REP {x}")?;
                for y in rights {
                    write!(f, " {y}")?;
                }
                Ok(())
            }
            Move::Fail { rule } => write!(f, "FAIL {rule}"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("transcript line {line}: {msg}")]
pub struct TranscriptParseError {
    pub line: usize,
    pub msg: String,
}

impl FromStr for Move {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut parts = s.split_whitespace();
        let tag = parts.next().ok_or("empty line")?;
        if tag == "FAIL" {
            let rule = parts.next().ok_or("missing rule")?;
            let rule = LossRule::parse(rule).ok_or_else(|| format!("unknown rule {rule:?}"))?;
            return Ok(Move::Fail { rule });
        }
        let nums = parts
            .map(|p| p.parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        match (tag, nums.as_slice()) {
            ("REQ", [x]) => Ok(Move::Request { x: *x }),
            ("RET", [x, y]) => Ok(Move::Retract { x: *x, y: *y }),
            ("REP", [x, rights @ ..]) => Ok(Move::Reply {
                x: *x,
                rights: rights.to_vec(),
            }),
            _ => Err(format!("malformed {tag} line")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    moves: Vec<Move>,
}

impl Transcript {
    pub fn push(&mut self, m: Move) {
        self.moves.push(m);
    }

    pub fn moves(&self) -> &[Move] {
        &self.moves
    }

    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn moves_mut(&mut self) -> &mut Vec<Move> {
        &mut self.moves
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for m in &self.moves {
            out.push_str(&m.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TranscriptParseError> {
        let mut moves = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            moves.push(
                line.parse()
                    .map_err(|msg| TranscriptParseError { line: i + 1, msg })?,
            );
        }
        Ok(Transcript { moves })
    }

    /// Requester turns in order. Replies and failures are not part of turns.
    pub fn turns(&self) -> Vec<Turn> {
        let mut turns = Vec::new();
        let mut pending = Vec::new();
        for m in &self.moves {
            match m {
                Move::Retract { x, .. } => pending.push(*x),
                Move::Request { x } => {
                    turns.push(Turn::retract_then(std::mem::take(&mut pending), *x))
                }
                Move::Reply { .. } | Move::Fail { .. } => {}
            }
        }
        if !pending.is_empty() {
            turns.push(Turn {
                retract: pending,
                request: None,
            });
        }
        turns
    }

    /// What the matcher answered to each request: a reply (possibly one the
    /// referee rejected) or the failure it reported instead.
    pub fn recorded_replies(&self) -> Vec<Result<Vec<usize>, LossRule>> {
        let mut out = Vec::new();
        let mut prev_reply = false;
        for m in &self.moves {
            match m {
                Move::Reply { rights, .. } => {
                    out.push(Ok(rights.clone()));
                    prev_reply = true;
                    continue;
                }
                Move::Fail { rule } if !prev_reply => out.push(Err(*rule)),
                _ => {}
            }
            prev_reply = false;
        }
        out
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("illegal requester move in turn {turn}: {source}")]
    Illegal { turn: usize, source: IllegalMove },
    #[error("invalid configuration: {0}")]
    Config(#[from] super::ConfigError),
}

/// Outcome of replaying a transcript's Requester moves against a matcher.
#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub state: MatchState,
    pub loss: Option<LossReport>,
    pub transcript: Transcript,
    /// Index of the first move where the new transcript differs from the
    /// recorded one.
    pub divergence: Option<usize>,
}

/// Replays the Requester moves of `recorded` against `matcher` under a fresh referee.
pub fn replay(
    recorded: &Transcript,
    graph: &dyn Adjacency,
    cfg: GameConfig,
    matcher: &mut dyn Matcher,
) -> Result<ReplayOutcome, ReplayError> {
    let mut referee = Referee::new(graph, cfg)?;
    for (i, turn) in recorded.turns().iter().enumerate() {
        if referee.loss().is_some() {
            break;
        }
        referee
            .step(turn, matcher)
            .map_err(|source| ReplayError::Illegal { turn: i, source })?;
    }
    let state = referee.state().clone();
    let loss = referee.loss().cloned();
    let transcript = referee.into_transcript();
    let divergence = first_difference(recorded.moves(), transcript.moves());
    Ok(ReplayOutcome {
        state,
        loss,
        transcript,
        divergence,
    })
}

fn first_difference(a: &[Move], b: &[Move]) -> Option<usize> {
    let common = a.iter().zip(b).position(|(p, q)| p != q);
    match common {
        Some(i) => Some(i),
        None if a.len() != b.len() => Some(a.len().min(b.len())),
        None => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print_round_trip() {
        let text = "REQ 3\nREP 3 7 8\nRET 3 7\nREQ 1\nFAIL overload\n";
        let t = Transcript::from_text(text).unwrap();
        assert_eq!(t.to_text(), text);
        assert_eq!(
            t.turns(),
            vec![Turn::request(3), Turn::retract_then(vec![3], 1)]
        );
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = Transcript::from_text("REQ 1\nREP\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(Transcript::from_text("REQ x").is_err());
        assert!(Transcript::from_text("FAIL nonsense").is_err());
        assert!(Transcript::from_text("HELLO 1").is_err());
    }

    #[test]
    fn recorded_replies_keep_rejected_replies() {
        let t = Transcript::from_text("REQ 0\nREP 0 1\nREQ 1\nREP 1 1\nFAIL overload\n").unwrap();
        assert_eq!(t.recorded_replies(), vec![Ok(vec![1]), Ok(vec![1])]);
        let t = Transcript::from_text("REQ 0\nFAIL matcher-error\n").unwrap();
        assert_eq!(t.recorded_replies(), vec![Err(LossRule::MatcherError)]);
    }
}
