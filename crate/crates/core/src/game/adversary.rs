//! Requester strategies.

use std::collections::{HashMap, VecDeque};

use rand::Rng as _;
use rand::SeedableRng;

use super::{GameConfig, MatchState, Turn};
use crate::bigraph::Adjacency;
use crate::rng::{stream, Rng};

/// Chooses the next Requester turn. Returning `None` ends the game.
pub trait Requester {
    fn name(&self) -> String;

    fn next_turn(
        &mut self,
        graph: &dyn Adjacency,
        cfg: &GameConfig,
        state: &MatchState,
    ) -> Option<Turn>;
}

/// Retractions forced by expiration before the next request.
fn expired(cfg: &GameConfig, state: &MatchState) -> Vec<usize> {
    let Some(t) = cfg.expiration else {
        return Vec::new();
    };
    let round = state.round() + 1;
    state
        .assignments()
        .filter(|(_, a)| round >= a.birth + t)
        .map(|(x, _)| x)
        .collect()
}

fn round_limit_reached(cfg: &GameConfig, state: &MatchState) -> bool {
    cfg.round_limit.is_some_and(|limit| state.round() >= limit)
}

/// Active nodes not already scheduled for retraction, oldest first.
fn remaining_by_age(state: &MatchState, retract: &[usize]) -> Vec<usize> {
    let mut v: Vec<(u64, usize)> = state
        .assignments()
        .filter(|(x, _)| !retract.contains(x))
        .map(|(x, a)| (a.birth, x))
        .collect();
    v.sort_unstable();
    v.into_iter().map(|(_, x)| x).collect()
}

/// Uniformly random requests with random, oldest-biased retractions.
#[derive(Debug, Clone)]
pub struct RandomAdversary {
    rng: Rng,
    retract_prob: f64,
    pool: Option<Vec<usize>>,
}

impl RandomAdversary {
    pub fn new(seed: u64) -> Self {
        let mut rng = Rng::seed_from_u64(seed);
        rng.set_stream(stream::ADVERSARY);
        RandomAdversary {
            rng,
            retract_prob: 0.5,
            pool: None,
        }
    }

    /// Probability of a voluntary retraction each turn.
    pub fn with_retract_prob(mut self, p: f64) -> Self {
        self.retract_prob = p.clamp(0.0, 1.0);
        self
    }

    /// Restricts requests to the given left nodes.
    pub fn with_pool(mut self, pool: Vec<usize>) -> Self {
        self.pool = Some(pool);
        self
    }
}

impl Requester for RandomAdversary {
    fn name(&self) -> String {
        "random".into()
    }

    fn next_turn(
        &mut self,
        graph: &dyn Adjacency,
        cfg: &GameConfig,
        state: &MatchState,
    ) -> Option<Turn> {
        if round_limit_reached(cfg, state) {
            return None;
        }
        let mut retract = Vec::new();
        if cfg.incremental {
            if state.active_count() + 1 > cfg.capacity {
                return None;
            }
        } else {
            retract = expired(cfg, state);
            let mut remaining = remaining_by_age(state, &retract);
            if !remaining.is_empty() && self.rng.gen_bool(self.retract_prob) {
                let n = remaining.len();
                let i = self.rng.gen_range(0..n).min(self.rng.gen_range(0..n));
                retract.push(remaining.remove(i));
            }
            while remaining.len() + 1 > cfg.capacity {
                retract.push(remaining.remove(0));
            }
        }
        let free = |x: &usize| !state.is_active(*x) || retract.contains(x);
        let x = match &self.pool {
            Some(pool) => {
                let candidates: Vec<usize> = pool.iter().copied().filter(free).collect();
                if candidates.is_empty() {
                    return None;
                }
                candidates[self.rng.gen_range(0..candidates.len())]
            }
            None => {
                let n = graph.left_size();
                if n == 0 {
                    return None;
                }
                // rejection sampling; the active set is small relative to n
                let mut tries = 0;
                loop {
                    let x = self.rng.gen_range(0..n);
                    if graph.is_left_present(x) && free(&x) {
                        break x;
                    }
                    tries += 1;
                    if tries > 64 * n {
                        return None;
                    }
                }
            }
        };
        Some(Turn {
            retract,
            request: Some(x),
        })
    }
}

/// Greedy adversary that requests nodes whose neighbors are most loaded and,
/// when it must retract, keeps the edges that block the most.
#[derive(Debug, Clone, Default)]
pub struct PressureAdversary;

impl PressureAdversary {
    pub fn new() -> Self {
        PressureAdversary
    }

    /// (all neighbors full, number of full neighbors, degree) of the best
    /// inactive node, with the node itself.
    fn best_request(
        graph: &dyn Adjacency,
        cfg: &GameConfig,
        state: &MatchState,
        freed: &HashMap<usize, usize>,
        retract: &[usize],
    ) -> Option<((bool, usize, usize), usize)> {
        let mut nbrs = Vec::new();
        let mut best: Option<((bool, usize, usize), usize)> = None;
        for x in 0..graph.left_size() {
            if !graph.is_left_present(x) || (state.is_active(x) && !retract.contains(&x)) {
                continue;
            }
            graph.neighbors_into(x, &mut nbrs);
            let full = nbrs
                .iter()
                .filter(|&&y| state.load_of(y) - freed.get(&y).copied().unwrap_or(0) >= cfg.load)
                .count();
            let score = (full == nbrs.len(), full, nbrs.len());
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, x));
            }
        }
        best
    }
}

impl Requester for PressureAdversary {
    fn name(&self) -> String {
        "pressure".into()
    }

    fn next_turn(
        &mut self,
        graph: &dyn Adjacency,
        cfg: &GameConfig,
        state: &MatchState,
    ) -> Option<Turn> {
        if round_limit_reached(cfg, state) {
            return None;
        }
        if cfg.incremental && state.active_count() + 1 > cfg.capacity {
            return None;
        }
        let mut retract = expired(cfg, state);
        let mut freed: HashMap<usize, usize> = HashMap::new();
        let free_rights = |x: usize, freed: &mut HashMap<usize, usize>| {
            for &y in &state.assignment(x).expect("active").rights {
                *freed.entry(y).or_default() += 1;
            }
        };
        for &x in &retract {
            free_rights(x, &mut freed);
        }
        let mut remaining: VecDeque<usize> = remaining_by_age(state, &retract).into();
        while remaining.len() + 1 > cfg.capacity {
            // one-step lookahead; ties go to the newest edge
            let mut choice: Option<((bool, usize, usize), usize)> = None;
            for (i, &x) in remaining.iter().enumerate().rev() {
                let mut trial = freed.clone();
                free_rights(x, &mut trial);
                let mut trial_retract = retract.clone();
                trial_retract.push(x);
                if let Some((score, _)) =
                    Self::best_request(graph, cfg, state, &trial, &trial_retract)
                {
                    if choice.is_none_or(|(s, _)| score > s) {
                        choice = Some((score, i));
                    }
                }
            }
            let i = choice.map_or(remaining.len() - 1, |(_, i)| i);
            let x = remaining.remove(i).expect("index in range");
            free_rights(x, &mut freed);
            retract.push(x);
        }
        let (_, x) = Self::best_request(graph, cfg, state, &freed, &retract)?;
        Some(Turn {
            retract,
            request: Some(x),
        })
    }
}

/// Plays a fixed list of turns.
#[derive(Debug, Clone, Default)]
pub struct ScriptedRequester {
    turns: VecDeque<Turn>,
}

impl ScriptedRequester {
    pub fn new(turns: Vec<Turn>) -> Self {
        ScriptedRequester {
            turns: turns.into(),
        }
    }
}

impl Requester for ScriptedRequester {
    fn name(&self) -> String {
        "scripted".into()
    }

    fn next_turn(&mut self, _: &dyn Adjacency, _: &GameConfig, _: &MatchState) -> Option<Turn> {
        self.turns.pop_front()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigraph::{fixtures, sample_random};
    use crate::game::basic::FirstFreeMatcher;
    use crate::game::Referee;

    fn play(req: &mut dyn Requester, cfg: GameConfig, steps: usize) -> Referee<'static> {
        let g: &'static _ = Box::leak(Box::new(sample_random(30, 30, 4, 7).unwrap()));
        let mut referee = Referee::new(g, cfg).unwrap();
        let mut m = FirstFreeMatcher::new(g.clone(), 3);
        for _ in 0..steps {
            let Some(turn) = req.next_turn(g, referee.config(), referee.state()) else {
                break;
            };
            referee
                .step(&turn, &mut m)
                .expect("adversary moves are legal");
            if referee.loss().is_some() {
                break;
            }
        }
        referee
    }

    #[test]
    fn random_adversary_respects_rules() {
        for seed in 0..5 {
            let cfg = GameConfig::dynamic(4).with_load(3).with_expiration(5);
            let r = play(&mut RandomAdversary::new(seed), cfg, 300);
            assert!(r.state().active_count() <= 4);
        }
        let r = play(
            &mut RandomAdversary::new(1),
            GameConfig::incremental(5).with_load(3),
            100,
        );
        assert_eq!(r.state().round(), 5);
        let r = play(
            &mut RandomAdversary::new(1),
            GameConfig::dynamic(3).with_load(3).with_round_limit(9),
            100,
        );
        assert_eq!(r.state().round(), 9);
    }

    #[test]
    fn random_adversary_is_seed_deterministic() {
        let cfg = GameConfig::dynamic(4).with_load(3);
        let a = play(&mut RandomAdversary::new(3), cfg.clone(), 50);
        let b = play(&mut RandomAdversary::new(3), cfg, 50);
        assert_eq!(a.transcript(), b.transcript());
    }

    #[test]
    fn pressure_adversary_respects_rules() {
        let cfg = GameConfig::dynamic(4).with_load(3).with_expiration(6);
        let r = play(&mut PressureAdversary::new(), cfg, 200);
        assert!(r.state().active_count() <= 4);
    }

    #[test]
    fn pressure_adversary_beats_first_free_on_left_intro() {
        let g = fixtures::left_intro();
        let mut referee = Referee::new(&g, GameConfig::incremental(2)).unwrap();
        let mut m = FirstFreeMatcher::new(g.clone(), 1);
        let mut adv = PressureAdversary::new();
        while let Some(turn) = adv.next_turn(&g, referee.config(), referee.state()) {
            referee.step(&turn, &mut m).unwrap();
            if referee.loss().is_some() {
                break;
            }
        }
        assert!(referee.loss().is_some());
    }
}
