//! Graph algebra: clones, products, unions (materialized) and induced
//! subgraph views (read-through).

use super::graph::{Adjacency, BiGraph, GraphError};

/// `copies` copies of `g` sharing the left set. Copy `i` of right node `y`
/// gets index `i * g.right_size() + y`.
pub fn clone_graph(g: &BiGraph, copies: usize) -> Result<BiGraph, GraphError> {
    if copies == 0 {
        return Err(GraphError::ZeroCopies);
    }
    let r = g.right_size();
    let mut offsets = Vec::with_capacity(g.left_size() + 1);
    let mut targets = Vec::with_capacity(g.edge_count() * copies);
    offsets.push(0);
    for x in 0..g.left_size() {
        for i in 0..copies {
            targets.extend(g.neighbors(x).iter().map(|&y| i * r + y));
        }
        offsets.push(targets.len());
    }
    Ok(BiGraph::from_csr(
        g.left_size(),
        r * copies,
        offsets,
        targets,
    ))
}

/// Product graph: `x` is adjacent to `(y1, y2)`, encoded `y1 * g2.right_size() + y2`,
/// iff `x ~ y1` in `g1` and `x ~ y2` in `g2`.
pub fn product(g1: &BiGraph, g2: &BiGraph) -> Result<BiGraph, GraphError> {
    if g1.left_size() != g2.left_size() {
        return Err(GraphError::LeftSizeMismatch(g1.left_size(), g2.left_size()));
    }
    let r2 = g2.right_size();
    let mut offsets = Vec::with_capacity(g1.left_size() + 1);
    let mut targets = Vec::new();
    offsets.push(0);
    for x in 0..g1.left_size() {
        for &y1 in g1.neighbors(x) {
            targets.extend(g2.neighbors(x).iter().map(|&y2| y1 * r2 + y2));
        }
        offsets.push(targets.len());
    }
    Ok(BiGraph::from_csr(
        g1.left_size(),
        g1.right_size() * r2,
        offsets,
        targets,
    ))
}

/// Implicit product of two graphs on the same left set, with the same right
/// encoding as [`product`].
#[derive(Debug, Clone)]
pub struct ProductView<A, B> {
    first: A,
    second: B,
}

impl<A: Adjacency, B: Adjacency> ProductView<A, B> {
    pub fn new(first: A, second: B) -> Result<Self, GraphError> {
        if first.left_size() != second.left_size() {
            return Err(GraphError::LeftSizeMismatch(
                first.left_size(),
                second.left_size(),
            ));
        }
        Ok(ProductView { first, second })
    }

    pub fn first(&self) -> &A {
        &self.first
    }

    pub fn second(&self) -> &B {
        &self.second
    }

    /// Product index of `(y1, y2)`.
    pub fn encode(&self, y1: usize, y2: usize) -> usize {
        y1 * self.second.right_size() + y2
    }

    pub fn decode(&self, y: usize) -> (usize, usize) {
        let r2 = self.second.right_size();
        (y / r2, y % r2)
    }
}

impl<A: Adjacency, B: Adjacency> Adjacency for ProductView<A, B> {
    fn left_size(&self) -> usize {
        self.first.left_size()
    }
    fn right_size(&self) -> usize {
        self.first.right_size() * self.second.right_size()
    }
    fn degree(&self) -> usize {
        self.first.degree() * self.second.degree()
    }
    fn left_degree(&self, x: usize) -> usize {
        self.first.left_degree(x) * self.second.left_degree(x)
    }
    fn neighbors_into(&self, x: usize, out: &mut Vec<usize>) {
        let n1 = self.first.neighbors_vec(x);
        let n2 = self.second.neighbors_vec(x);
        out.clear();
        for y1 in n1 {
            out.extend(n2.iter().map(|&y2| self.encode(y1, y2)));
        }
    }
    fn has_edge(&self, x: usize, y: usize) -> bool {
        let (y1, y2) = self.decode(y);
        y1 < self.first.right_size() && self.first.has_edge(x, y1) && self.second.has_edge(x, y2)
    }
    fn is_left_regular(&self) -> bool {
        self.first.is_left_regular() && self.second.is_left_regular()
    }
}

/// Edge union over a shared left set; the right sets are kept disjoint by
/// offsetting `g2`'s right indices by `g1.right_size()`.
pub fn union(g1: &BiGraph, g2: &BiGraph) -> Result<BiGraph, GraphError> {
    if g1.left_size() != g2.left_size() {
        return Err(GraphError::LeftSizeMismatch(g1.left_size(), g2.left_size()));
    }
    let r1 = g1.right_size();
    let mut offsets = Vec::with_capacity(g1.left_size() + 1);
    let mut targets = Vec::with_capacity(g1.edge_count() + g2.edge_count());
    offsets.push(0);
    for x in 0..g1.left_size() {
        targets.extend_from_slice(g1.neighbors(x));
        targets.extend(g2.neighbors(x).iter().map(|&y| r1 + y));
        offsets.push(targets.len());
    }
    Ok(BiGraph::from_csr(
        g1.left_size(),
        r1 + g2.right_size(),
        offsets,
        targets,
    ))
}

/// Which operand of a [`union`] a right node came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnionSide {
    First(usize),
    Second(usize),
}

pub fn union_source(first_right_size: usize, y: usize) -> UnionSide {
    if y < first_right_size {
        UnionSide::First(y)
    } else {
        UnionSide::Second(y - first_right_size)
    }
}

/// Read-through view of a graph with some left nodes excluded and only
/// the enabled right nodes visible.
#[derive(Debug, Clone)]
pub struct InducedView<'g, G: Adjacency + ?Sized = BiGraph> {
    base: &'g G,
    excluded_left: Vec<bool>,
    enabled_right: Vec<bool>,
    degree: usize,
}

impl<'g, G: Adjacency + ?Sized> InducedView<'g, G> {
    /// Builds a view from membership masks. Panics if a mask length does not
    /// match the base graph.
    pub fn from_masks(base: &'g G, excluded_left: Vec<bool>, enabled_right: Vec<bool>) -> Self {
        assert_eq!(excluded_left.len(), base.left_size(), "left mask length");
        assert_eq!(enabled_right.len(), base.right_size(), "right mask length");
        let mut view = InducedView {
            base,
            excluded_left,
            enabled_right,
            degree: 0,
        };
        view.degree = (0..base.left_size())
            .map(|x| view.left_degree(x))
            .max()
            .unwrap_or(0);
        view
    }

    pub fn base(&self) -> &'g G {
        self.base
    }

    pub fn is_excluded(&self, x: usize) -> bool {
        self.excluded_left[x]
    }

    pub fn is_enabled(&self, y: usize) -> bool {
        self.enabled_right[y]
    }
}

/// View of `g` without the `excluded_left` nodes and restricted to
/// `enabled_right`. Indices must be in range.
pub fn induced<'g, G: Adjacency + ?Sized>(
    g: &'g G,
    excluded_left: &[usize],
    enabled_right: &[usize],
) -> InducedView<'g, G> {
    let mut ex = vec![false; g.left_size()];
    for &x in excluded_left {
        assert!(x < g.left_size(), "excluded left node {x} out of range");
        ex[x] = true;
    }
    let mut en = vec![false; g.right_size()];
    for &y in enabled_right {
        assert!(y < g.right_size(), "enabled right node {y} out of range");
        en[y] = true;
    }
    InducedView::from_masks(g, ex, en)
}

impl<G: Adjacency + ?Sized> Adjacency for InducedView<'_, G> {
    fn left_size(&self) -> usize {
        self.base.left_size()
    }
    fn right_size(&self) -> usize {
        self.base.right_size()
    }
    fn degree(&self) -> usize {
        self.degree
    }
    fn left_degree(&self, x: usize) -> usize {
        if self.excluded_left[x] {
            return 0;
        }
        let mut buf = Vec::new();
        self.base.neighbors_into(x, &mut buf);
        buf.iter().filter(|&&y| self.enabled_right[y]).count()
    }
    fn neighbors_into(&self, x: usize, out: &mut Vec<usize>) {
        if self.excluded_left[x] {
            out.clear();
            return;
        }
        self.base.neighbors_into(x, out);
        out.retain(|&y| self.enabled_right[y]);
    }
    fn is_left_present(&self, x: usize) -> bool {
        !self.excluded_left[x] && self.base.is_left_present(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigraph::{check::expansion_check, fixtures, generate::sample_random};

    #[test]
    fn one_clone_is_identity() {
        let g = fixtures::right_intro();
        assert_eq!(clone_graph(&g, 1).unwrap(), g);
        assert_eq!(clone_graph(&g, 0), Err(GraphError::ZeroCopies));
    }

    #[test]
    fn two_clone_of_left_intro() {
        let g = fixtures::left_intro();
        let c = clone_graph(&g, 2).unwrap();
        // b ~ {u0, v0, u1, v1}
        assert_eq!(c.neighbors(1), &[0, 1, 2, 3]);
        assert_eq!(c.degree(), 4);
        assert_eq!(c.right_size(), 4);
    }

    #[test]
    fn product_with_star_is_identity() {
        let g = sample_random(6, 5, 3, 11).unwrap();
        let star = BiGraph::build(6, 1, vec![vec![0]; 6]).unwrap();
        assert_eq!(product(&g, &star).unwrap(), g);
    }

    #[test]
    fn product_of_left_intro_with_itself() {
        let g = fixtures::left_intro();
        let p = product(&g, &g).unwrap();
        // (u,u)=0, (u,v)=1, (v,u)=2, (v,v)=3
        assert_eq!(p.neighbors(1), &[0, 1, 2, 3]);
        assert_eq!(p.neighbors(0), &[0]);
        assert_eq!(p.neighbors(2), &[3]);
        assert!(product(&g, &sample_random(4, 3, 1, 0).unwrap()).is_err());
    }

    #[test]
    fn product_degree_multiplies() {
        for seed in 0..20 {
            let g1 = sample_random(7, 6, 1 + seed as usize % 4, seed).unwrap();
            let g2 = sample_random(7, 9, 1 + seed as usize % 3, seed + 100).unwrap();
            let p = product(&g1, &g2).unwrap();
            for x in 0..7 {
                assert_eq!(p.left_degree(x), g1.left_degree(x) * g2.left_degree(x));
            }
        }
    }

    #[test]
    fn union_offsets_and_traces_edges() {
        let g = fixtures::left_intro();
        let empty = BiGraph::build(3, 0, vec![vec![]; 3]).unwrap();
        assert_eq!(union(&g, &empty).unwrap(), g);
        let gg = union(&g, &g).unwrap();
        assert_eq!(gg, clone_graph(&g, 2).unwrap());
        assert_eq!(union_source(2, 3), UnionSide::Second(1));
        assert_eq!(union_source(2, 1), UnionSide::First(1));
        for seed in 0..10 {
            let a = sample_random(5, 6, 2, seed).unwrap();
            let b = sample_random(5, 4, 3, seed + 50).unwrap();
            let u = union(&a, &b).unwrap();
            assert_eq!(u.edge_count(), a.edge_count() + b.edge_count());
            assert_eq!(u.degree(), a.degree() + b.degree());
        }
    }

    #[test]
    fn induced_view_hides_without_mutating() {
        let g = fixtures::left_intro();
        let all = induced(&g, &[], &[0, 1]);
        for x in 0..3 {
            assert_eq!(all.neighbors_vec(x), g.neighbors(x));
        }
        let v = induced(&g, &[1], &[0, 1]);
        assert!(v.neighbors_vec(1).is_empty());
        assert!(!v.is_left_present(1));
        let w = induced(&g, &[], &[1]);
        assert_eq!(w.neighbors_vec(1), vec![1]);
        assert_eq!(g.neighbors(1), &[0, 1]);
        // expansion of a view only considers present nodes
        assert!(expansion_check(&v, 1.0, 2).holds);
    }

    #[test]
    fn product_view_matches_materialized_product() {
        let g1 = crate::bigraph::sample_random(6, 5, 2, 1).unwrap();
        let g2 = crate::bigraph::sample_random(6, 4, 3, 2).unwrap();
        let p = product(&g1, &g2).unwrap();
        let v = ProductView::new(&g1, &g2).unwrap();
        assert_eq!(BiGraph::materialize(&v), p);
        for x in 0..6 {
            for y in 0..v.right_size() {
                assert_eq!(v.has_edge(x, y), p.has_edge(x, y));
            }
        }
        assert!(ProductView::new(&g1, &crate::bigraph::fixtures::complete(2, 2)).is_err());
    }
}
