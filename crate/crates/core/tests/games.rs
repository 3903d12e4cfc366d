use std::collections::HashSet;
use std::sync::Arc;

use dynmatch::bigraph::{clone_graph, find_expander, fixtures, sample_random};
use dynmatch::connector::{CompleteLevels, Connector};
use dynmatch::expire_match::{incremental_copies, IncrementalMatcher};
use dynmatch::game::adversary::RandomAdversary;
use dynmatch::game::basic::FirstFreeMatcher;
use dynmatch::game::soak::run_game;
use dynmatch::game::transcript::{replay, Move, Transcript};
use dynmatch::rng::{stream, stream_rng};
use dynmatch::{Adjacency, BitProbe, GameConfig, Rational};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transcripts_replay_without_divergence(seed in any::<u64>(), retract in 0.0f64..0.9) {
        let g = Arc::new(sample_random(12, 30, 3, seed).unwrap());
        let cfg = GameConfig::dynamic(4).with_load(2);
        let mut m = FirstFreeMatcher::new(g.clone(), 2);
        let mut req = RandomAdversary::new(seed).with_retract_prob(retract);
        let stats = run_game(&*g, cfg.clone(), &mut m, &mut req, 200, |_, _| Ok(())).unwrap();
        let text = stats.transcript.to_text();
        let parsed = Transcript::from_text(&text).unwrap();
        prop_assert_eq!(parsed.to_text(), text);
        let out = replay(&parsed, &*g, cfg, &mut FirstFreeMatcher::new(g.clone(), 2)).unwrap();
        prop_assert_eq!(out.divergence, None);
        prop_assert_eq!(out.loss.is_some(), stats.loss.is_some());
    }
}

#[test]
fn altered_reply_is_reported_as_divergence() {
    let g = Arc::new(sample_random(12, 30, 3, 5).unwrap());
    let cfg = GameConfig::dynamic(4);
    let mut m = FirstFreeMatcher::new(g.clone(), 1);
    let stats = run_game(
        &*g,
        cfg.clone(),
        &mut m,
        &mut RandomAdversary::new(5),
        50,
        |_, _| Ok(()),
    )
    .unwrap();
    let mut t = stats.transcript;
    let i = t
        .moves()
        .iter()
        .position(|mv| matches!(mv, Move::Reply { .. }))
        .unwrap();
    if let Move::Reply { rights, .. } = &mut t.moves_mut()[i] {
        rights[0] = g.right_size() + 1;
    }
    let out = replay(&t, &*g, cfg, &mut FirstFreeMatcher::new(g.clone(), 1)).unwrap();
    assert_eq!(out.divergence, Some(i));
}

#[test]
fn sparse_incremental_games_climb_the_ladder_within_bound() {
    let (n, d, k) = (16, 2, 8);
    let g = Arc::new(
        find_expander(n, 16, d, Rational::from_integer(1), k, 1, 1000)
            .unwrap()
            .unwrap()
            .graph,
    );
    let copies = incremental_copies(k);
    assert_eq!(copies, 4);
    let clone = clone_graph(&g, copies).unwrap();
    let mut highest = 0;
    for seed in 0..2000 {
        let mut m = IncrementalMatcher::new(g.clone(), k);
        let stats = run_game(
            &clone,
            GameConfig::incremental(k),
            &mut m,
            &mut RandomAdversary::new(seed),
            100,
            |_, _| Ok(()),
        )
        .unwrap();
        assert!(stats.loss.is_none(), "seed {seed}: {:?}", stats.loss);
        let h = m.ladder().highest_copy().unwrap_or(0);
        assert!(h < copies);
        highest = highest.max(h);
    }
    assert!(highest > 0, "sparse games should need a second copy");
}

#[test]
fn storage_tracks_a_set_model() {
    let (n, k) = (64, 3);
    let mut bp = BitProbe::new(n, k, Rational::new(1, 4), 11).unwrap();
    let mut model = HashSet::new();
    let mut rng = stream_rng(11, stream::HISTORY);
    for op in 0..2000 {
        let x = rng.gen_range(0..n);
        if model.len() < k && rng.gen_bool(0.5) {
            bp.insert(x).unwrap();
            model.insert(x);
        } else {
            bp.delete(x).unwrap();
            model.remove(&x);
        }
        bp.check_invariants().unwrap();
        assert_eq!(bp.len(), model.len(), "op {op}");
        assert!(model.iter().all(|&m| bp.contains(m)));
        let mut owned = HashSet::new();
        for &m in &model {
            assert!(bp
                .positions(m)
                .unwrap()
                .iter()
                .all(|&p| owned.insert(p) && bp.bit(p)));
        }
    }
    bp.check_table().unwrap();
    let full: Vec<usize> = (0..n).filter(|x| !model.contains(x)).take(k + 1).collect();
    for &x in &full[..k - model.len()] {
        bp.insert(x).unwrap();
    }
    assert!(bp.insert(full[k - model.len()]).is_err());
}

#[test]
fn connector_trees_stay_disjoint_on_complete_levels() {
    let mut net = Connector::build(2, 3, &mut CompleteLevels::default()).unwrap();
    let mut rng = stream_rng(3, stream::CONNECTOR);
    for _ in 0..2000 {
        let free: Vec<usize> = (0..net.outputs())
            .filter(|&y| net.tree_of_output(y).is_none())
            .collect();
        let roots = net.roots();
        match rng.gen_range(0..3) {
            0 | 1 if !free.is_empty() => {
                let y = free[rng.gen_range(0..free.len())];
                let requests = net.connect(rng.gen_range(0..net.inputs()), y).unwrap();
                assert!(requests <= net.depth());
            }
            2 if !roots.is_empty() => {
                let x = roots[rng.gen_range(0..roots.len())];
                let leaves = net.leaves(x);
                net.prune(x, leaves[0]).unwrap();
            }
            _ if !roots.is_empty() => net.disconnect(roots[0]).unwrap(),
            _ => {}
        }
        net.check_invariants().unwrap();
    }
    assert!(net.edge_count() <= net.edge_bound());
}

#[test]
fn fixtures_parse_by_name() {
    assert_eq!(
        fixtures::by_name("left").unwrap().to_text(),
        fixtures::left_intro().to_text()
    );
    assert_eq!(
        fixtures::by_name("right-intro").unwrap().to_text(),
        fixtures::right_intro().to_text()
    );
    assert!(fixtures::by_name("nonsense").is_none());
}
