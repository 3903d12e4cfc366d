//! Exhaustive game-tree search on tiny graphs.
//!
//! [`requester_forces_win`] quantifies over every Matcher strategy that
//! replies with single edges; [`find_losing_line`] plays every Requester line
//! against one deterministic matcher.

use std::cell::RefCell;
use std::collections::HashSet;

use super::{GameConfig, Matcher, Referee, Turn};
use crate::bigraph::Adjacency;

/// Largest left side and horizon the search accepts.
pub const MAX_SEARCH_LEFT: usize = 6;
pub const MAX_SEARCH_PLIES: usize = 10;

#[derive(Clone)]
struct Position {
    /// (right node, birth round) per left node.
    matched: Vec<Option<(usize, u64)>>,
    load: Vec<usize>,
    round: u64,
}

struct Search<'a> {
    graph: &'a dyn Adjacency,
    cfg: &'a GameConfig,
    nbrs: Vec<Vec<usize>>,
    /// Matchings from which the Matcher survives the given horizon; only
    /// used when rounds do not matter.
    survives: RefCell<HashSet<(Vec<Option<usize>>, usize)>>,
}

impl Search<'_> {
    fn turns(&self, pos: &Position) -> Vec<Turn> {
        let active: Vec<usize> = (0..pos.matched.len())
            .filter(|&x| pos.matched[x].is_some())
            .collect();
        let round = pos.round + 1;
        if self.cfg.round_limit.is_some_and(|l| round > l) {
            return Vec::new();
        }
        let subsets: Vec<Vec<usize>> = if self.cfg.incremental {
            vec![Vec::new()]
        } else {
            (0u32..1 << active.len())
                .map(|mask| {
                    active
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask >> i & 1 == 1)
                        .map(|(_, &x)| x)
                        .collect()
                })
                .collect()
        };
        let mut turns = Vec::new();
        for retract in subsets {
            if active.len() - retract.len() + 1 > self.cfg.capacity {
                continue;
            }
            let stale = self.cfg.expiration.is_some_and(|t| {
                active
                    .iter()
                    .any(|x| !retract.contains(x) && round >= pos.matched[*x].unwrap().1 + t)
            });
            if stale {
                continue;
            }
            for x in 0..pos.matched.len() {
                if self.graph.is_left_present(x)
                    && (pos.matched[x].is_none() || retract.contains(&x))
                {
                    turns.push(Turn {
                        retract: retract.clone(),
                        request: Some(x),
                    });
                }
            }
        }
        turns
    }

    fn requester_wins(&self, pos: &Position, plies: usize) -> bool {
        if plies == 0 {
            return false;
        }
        let timeless = self.cfg.expiration.is_none() && self.cfg.round_limit.is_none();
        let key = timeless.then(|| {
            (
                pos.matched
                    .iter()
                    .map(|m| m.map(|(y, _)| y))
                    .collect::<Vec<_>>(),
                plies,
            )
        });
        if key
            .as_ref()
            .is_some_and(|k| self.survives.borrow().contains(k))
        {
            return false;
        }
        for turn in self.turns(pos) {
            let mut next = pos.clone();
            for &x in &turn.retract {
                let (y, _) = next.matched[x].take().expect("active");
                next.load[y] -= 1;
            }
            next.round += 1;
            let x = turn.request.expect("search turns request");
            let options: Vec<usize> = self.nbrs[x]
                .iter()
                .copied()
                .filter(|&y| next.load[y] < self.cfg.load)
                .collect();
            let all_lose = options.iter().all(|&y| {
                let mut after = next.clone();
                after.load[y] += 1;
                after.matched[x] = Some((y, after.round));
                self.requester_wins(&after, plies - 1)
            });
            if all_lose {
                return true;
            }
        }
        if let Some(k) = key {
            self.survives.borrow_mut().insert(k);
        }
        false
    }
}

/// True iff the Requester can force a Matcher loss within `plies` requests,
/// whatever single-edge replies the Matcher chooses.
///
/// # Panics
/// If the graph or horizon exceeds the search limits, or the game is rich.
pub fn requester_forces_win(graph: &dyn Adjacency, cfg: &GameConfig, plies: usize) -> bool {
    assert!(
        graph.left_size() <= MAX_SEARCH_LEFT,
        "search limited to {MAX_SEARCH_LEFT} left nodes"
    );
    assert!(
        plies <= MAX_SEARCH_PLIES,
        "search limited to {MAX_SEARCH_PLIES} plies"
    );
    assert!(
        cfg.rich_min_edges.is_none(),
        "search covers single-edge replies only"
    );
    let search = Search {
        graph,
        cfg,
        nbrs: (0..graph.left_size())
            .map(|x| graph.neighbors_vec(x))
            .collect(),
        survives: RefCell::default(),
    };
    let start = Position {
        matched: vec![None; graph.left_size()],
        load: vec![0; graph.right_size()],
        round: 0,
    };
    search.requester_wins(&start, plies)
}

/// Plays every legal Requester line of up to `plies` requests against
/// clones of `matcher` and returns a shortest line that makes it lose.
pub fn find_losing_line<M: Matcher + Clone>(
    graph: &dyn Adjacency,
    cfg: &GameConfig,
    matcher: &M,
    plies: usize,
) -> Option<Vec<Turn>> {
    assert!(
        graph.left_size() <= MAX_SEARCH_LEFT,
        "search limited to {MAX_SEARCH_LEFT} left nodes"
    );
    assert!(
        plies <= MAX_SEARCH_PLIES,
        "search limited to {MAX_SEARCH_PLIES} plies"
    );
    let referee = Referee::new(graph, cfg.clone()).expect("valid config");
    let search = Search {
        graph,
        cfg,
        nbrs: Vec::new(),
        survives: RefCell::default(),
    };
    (1..=plies).find_map(|depth| {
        let mut line = Vec::new();
        losing_line(&search, &referee, matcher, depth, &mut line).then_some(line)
    })
}

fn losing_line<M: Matcher + Clone>(
    search: &Search<'_>,
    referee: &Referee<'_>,
    matcher: &M,
    plies: usize,
    line: &mut Vec<Turn>,
) -> bool {
    if plies == 0 {
        return false;
    }
    let state = referee.state();
    let pos = Position {
        matched: (0..search.graph.left_size())
            .map(|x| state.assignment(x).map(|a| (a.rights[0], a.birth)))
            .collect(),
        load: Vec::new(),
        round: state.round(),
    };
    for turn in search.turns(&pos) {
        let mut r = referee.clone();
        let mut m = matcher.clone();
        r.step(&turn, &mut m).expect("enumerated turns are legal");
        line.push(turn);
        if r.loss().is_some() || losing_line(search, &r, &m, plies - 1, line) {
            return true;
        }
        line.pop();
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigraph::{clone_graph, fixtures};
    use crate::game::basic::{FirstFreeMatcher, TrivialMatcher};

    #[test]
    fn left_intro_offline_yes_incremental_no() {
        let g = fixtures::left_intro();
        assert!(crate::bigraph::offline_matching_check(&g, 2));
        assert!(requester_forces_win(&g, &GameConfig::incremental(2), 2));
        assert!(!requester_forces_win(&g, &GameConfig::incremental(2), 1));
    }

    #[test]
    fn right_intro_incremental_yes_dynamic_no() {
        let g = fixtures::right_intro();
        assert!(!requester_forces_win(&g, &GameConfig::incremental(2), 3));
        assert!(requester_forces_win(&g, &GameConfig::dynamic(2), 3));
        assert!(!requester_forces_win(&g, &GameConfig::dynamic(2), 2));
    }

    #[test]
    fn load_two_rescues_right_intro() {
        let g = fixtures::right_intro();
        assert!(!requester_forces_win(
            &g,
            &GameConfig::dynamic(2).with_load(2),
            8
        ));
        let m = TrivialMatcher::new(g.clone());
        assert!(find_losing_line(&g, &GameConfig::dynamic(2).with_load(2), &m, 8).is_none());
    }

    #[test]
    fn first_free_loses_on_right_intro() {
        let g = fixtures::right_intro();
        let m = FirstFreeMatcher::new(g.clone(), 1);
        let line =
            find_losing_line(&g, &GameConfig::dynamic(2), &m, 6).expect("greedy is beatable");
        assert_eq!(line.len(), 3);
    }

    #[test]
    fn clones_of_right_intro_survive_short_games() {
        let g = clone_graph(&fixtures::right_intro(), 3).unwrap();
        assert!(!requester_forces_win(&g, &GameConfig::dynamic(2), 6));
    }
}
