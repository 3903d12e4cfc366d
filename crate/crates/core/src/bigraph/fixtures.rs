//! Small named graphs.

use super::graph::BiGraph;

/// Left nodes a, b, c; right nodes u, v; edges a–u, b–u, b–v, c–v.
/// Has offline matching up to 2 but not incremental matching up to 2.
pub fn left_intro() -> BiGraph {
    BiGraph::build(3, 2, vec![vec![0], vec![0, 1], vec![1]]).expect("valid fixture")
}

/// Left nodes a, b, c; right nodes u, v; edges a–u, a–v, b–u, b–v, c–v.
/// Has incremental matching up to 2 but not dynamic matching up to 2.
pub fn right_intro() -> BiGraph {
    BiGraph::build(3, 2, vec![vec![0, 1], vec![0, 1], vec![1]]).expect("valid fixture")
}

pub fn complete(left_size: usize, right_size: usize) -> BiGraph {
    BiGraph::build(
        left_size,
        right_size,
        vec![(0..right_size).collect(); left_size],
    )
    .expect("valid")
}

pub fn by_name(name: &str) -> Option<BiGraph> {
    match name {
        "left" | "left-intro" => Some(left_intro()),
        "right" | "right-intro" => Some(right_intro()),
        _ => None,
    }
}
