use dynmatch::bigraph::{
    clone_graph, expansion_check, neighborhood, offline_matching_check, private_neighbors, product,
    BiGraph,
};
use dynmatch::{Adjacency, Rational};
use proptest::prelude::*;

/// Any left-degree-bounded graph with up to `max_left` left and `max_right`
/// right nodes; neighbor lists may be empty.
fn graph(max_left: usize, max_right: usize) -> impl Strategy<Value = BiGraph> {
    (1..=max_left, 1..=max_right).prop_flat_map(|(l, r)| {
        proptest::collection::vec(proptest::collection::btree_set(0..r, 0..=r.min(4)), l).prop_map(
            move |adj| {
                BiGraph::build(
                    l,
                    r,
                    adj.into_iter().map(|s| s.into_iter().collect()).collect(),
                )
                .unwrap()
            },
        )
    })
}

/// Whether the left nodes in `set` can be assigned right neighbors with no
/// right node used more than `load` times. Plain backtracking.
fn assignable(g: &BiGraph, set: &[usize], load: usize, used: &mut Vec<usize>) -> bool {
    let Some((&x, rest)) = set.split_first() else {
        return true;
    };
    for &y in g.neighbors(x) {
        if used[y] < load {
            used[y] += 1;
            let ok = assignable(g, rest, load, used);
            used[y] -= 1;
            if ok {
                return true;
            }
        }
    }
    false
}

/// Every left set of size at most `k` is assignable with the given load.
fn every_small_set_assignable(g: &BiGraph, k: usize, load: usize) -> bool {
    let n = g.left_size();
    (1u32..1 << n)
        .filter(|m| m.count_ones() as usize <= k)
        .all(|m| {
            let set: Vec<usize> = (0..n).filter(|x| m >> x & 1 == 1).collect();
            assignable(g, &set, load, &mut vec![0; g.right_size()])
        })
}

fn subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (1u32..1 << n).map(move |m| (0..n).filter(|x| m >> x & 1 == 1).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn offline_check_agrees_with_backtracking(g in graph(6, 6), k in 1usize..=6) {
        let k = k.min(g.left_size());
        prop_assert_eq!(offline_matching_check(&g, k), every_small_set_assignable(&g, k, 1));
    }

    #[test]
    fn hall_equivalence(g in graph(6, 6), k in 1usize..=6) {
        let k = k.min(g.left_size());
        prop_assert_eq!(offline_matching_check(&g, k), expansion_check(&g, Rational::from_integer(1), k).holds);
    }

    #[test]
    fn clone_turns_load_into_copies(g in graph(5, 3), k in 1usize..=5, load in 1usize..=3) {
        let k = k.min(g.left_size());
        let c = clone_graph(&g, load).unwrap();
        prop_assert_eq!(offline_matching_check(&c, k), every_small_set_assignable(&g, k, load));
        for s in subsets(g.left_size()) {
            prop_assert_eq!(neighborhood(&c, &s).len(), load * neighborhood(&g, &s).len());
        }
    }

    #[test]
    fn expansion_witness_is_a_real_violation(g in graph(6, 8), k in 1usize..=6, num in 1i64..=8) {
        let k = k.min(g.left_size());
        let e = Rational::new(num, 4);
        let w = expansion_check(&g, e, k);
        let brute = subsets(g.left_size())
            .filter(|s| s.len() <= k)
            .all(|s| Rational::from_integer(neighborhood(&g, &s).len() as i64) >= e * Rational::from_integer(s.len() as i64));
        prop_assert_eq!(w.holds, brute);
        if let Some(s) = w.violating_set {
            prop_assert!(s.len() <= k);
            prop_assert!(Rational::from_integer(neighborhood(&g, &s).len() as i64) < e * Rational::from_integer(s.len() as i64));
        }
    }

    #[test]
    fn product_neighbors_are_pairs(g1 in graph(5, 5), seed in any::<u64>()) {
        let r2 = 1 + (seed % 5) as usize;
        let adj: Vec<Vec<usize>> = (0..g1.left_size()).map(|x| vec![(x + seed as usize) % r2]).collect();
        let g2 = BiGraph::build(g1.left_size(), r2, adj).unwrap();
        let p = product(&g1, &g2).unwrap();
        for x in 0..g1.left_size() {
            let expect: Vec<usize> = g1.neighbors(x).iter().flat_map(|&y1| g2.neighbors(x).iter().map(move |&y2| y1 * r2 + y2)).collect();
            prop_assert_eq!(p.neighbors(x), &expect[..]);
        }
    }

    #[test]
    fn private_neighbor_bound(g in graph(6, 10), mask in 1u32..64) {
        let d = (0..g.left_size()).map(|x| g.neighbors(x).len()).max().unwrap_or(0);
        let s: Vec<usize> = (0..g.left_size()).filter(|x| mask >> x & 1 == 1).collect();
        prop_assume!(!s.is_empty());
        let bound = 2 * neighborhood(&g, &s).len() as i64 - (d * s.len()) as i64;
        prop_assert!(private_neighbors(&g, &s).len() as i64 >= bound);
        for y in private_neighbors(&g, &s) {
            prop_assert_eq!(s.iter().filter(|&&x| g.neighbors(x).contains(&y)).count(), 1);
        }
    }

    #[test]
    fn critical_sets_are_closed_under_union(g in graph(6, 8), a in 1u32..64, b in 1u32..64) {
        let n = g.left_size();
        let set = |m: u32| (0..n).filter(|x| m >> x & 1 == 1).collect::<Vec<_>>();
        let size = |m: u32| neighborhood(&g, &set(m)).len();
        let count = |m: u32| set(m).len();
        prop_assume!(count(a) > 0 && count(b) > 0);
        if size(a) <= count(a) && size(b) <= count(b) && size(a & b) >= count(a & b) {
            prop_assert!(size(a | b) <= count(a | b));
        }
    }

    #[test]
    fn graph_text_round_trips(g in graph(8, 8)) {
        let text = g.to_text();
        let back = BiGraph::from_text(&text).unwrap();
        prop_assert_eq!(back.to_text(), text);
        for x in 0..g.left_size() {
            prop_assert_eq!(back.neighbors(x), g.neighbors(x));
        }
    }
}
