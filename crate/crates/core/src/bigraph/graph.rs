use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("left node {left}: neighbor {right} out of range (right size {right_size})")]
    NeighborOutOfRange {
        left: usize,
        right: usize,
        right_size: usize,
    },
    #[error("left node {left}: duplicate neighbor {right}")]
    DuplicateNeighbor { left: usize, right: usize },
    #[error("expected {expected} adjacency lists, got {got}")]
    AdjacencyLength { expected: usize, got: usize },
    #[error("clone needs at least one copy")]
    ZeroCopies,
    #[error("left sizes differ: {0} vs {1}")]
    LeftSizeMismatch(usize, usize),
    #[error("degree {degree} exceeds right size {right_size}")]
    DegreeTooLarge { degree: usize, right_size: usize },
    #[error("no {needed} primes >= {floor} below the search limit {limit}")]
    PrimesExhausted {
        needed: usize,
        floor: usize,
        limit: usize,
    },
    #[error("graph parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Read access to a bipartite graph with left nodes `0..left_size` and right
/// nodes `0..right_size`.
///
/// Implemented by the materialized [`BiGraph`] and by implicit graphs
/// (induced views, prime hashing, products of implicit factors) that are too
/// large or too short-lived to materialize.
pub trait Adjacency {
    fn left_size(&self) -> usize;
    fn right_size(&self) -> usize;
    /// Maximum left degree.
    fn degree(&self) -> usize;
    fn left_degree(&self, x: usize) -> usize;
    /// Writes the neighbors of `x` into `out` (cleared first), in the graph's
    /// canonical order.
    fn neighbors_into(&self, x: usize, out: &mut Vec<usize>);

    /// Whether left node `x` is part of the graph. Views hide nodes by
    /// reporting `false`; hidden nodes are skipped by the structural checks.
    fn is_left_present(&self, _x: usize) -> bool {
        true
    }

    fn has_edge(&self, x: usize, y: usize) -> bool {
        let mut buf = Vec::new();
        self.neighbors_into(x, &mut buf);
        buf.contains(&y)
    }

    fn is_left_regular(&self) -> bool {
        let d = self.degree();
        (0..self.left_size())
            .filter(|&x| self.is_left_present(x))
            .all(|x| self.left_degree(x) == d)
    }

    fn neighbors_vec(&self, x: usize) -> Vec<usize> {
        let mut buf = Vec::new();
        self.neighbors_into(x, &mut buf);
        buf
    }
}

impl<A: Adjacency + ?Sized> Adjacency for &A {
    fn left_size(&self) -> usize {
        (**self).left_size()
    }
    fn right_size(&self) -> usize {
        (**self).right_size()
    }
    fn degree(&self) -> usize {
        (**self).degree()
    }
    fn left_degree(&self, x: usize) -> usize {
        (**self).left_degree(x)
    }
    fn neighbors_into(&self, x: usize, out: &mut Vec<usize>) {
        (**self).neighbors_into(x, out)
    }
    fn is_left_present(&self, x: usize) -> bool {
        (**self).is_left_present(x)
    }
    fn has_edge(&self, x: usize, y: usize) -> bool {
        (**self).has_edge(x, y)
    }
    fn is_left_regular(&self) -> bool {
        (**self).is_left_regular()
    }
}

/// Finite bipartite graph stored as left-indexed adjacency (CSR layout).
///
/// Immutable once built.
#[derive(Clone, PartialEq, Eq)]
pub struct BiGraph {
    left_size: usize,
    right_size: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    degree: usize,
    left_regular: bool,
}

impl BiGraph {
    /// Validates and builds a graph. Neighbor order is preserved as given.
    pub fn build(
        left_size: usize,
        right_size: usize,
        adjacency: Vec<Vec<usize>>,
    ) -> Result<Self, GraphError> {
        if adjacency.len() != left_size {
            return Err(GraphError::AdjacencyLength {
                expected: left_size,
                got: adjacency.len(),
            });
        }
        let mut seen = vec![usize::MAX; right_size];
        let mut offsets = Vec::with_capacity(left_size + 1);
        let mut targets = Vec::with_capacity(adjacency.iter().map(Vec::len).sum());
        offsets.push(0);
        for (x, list) in adjacency.iter().enumerate() {
            for &y in list {
                if y >= right_size {
                    return Err(GraphError::NeighborOutOfRange {
                        left: x,
                        right: y,
                        right_size,
                    });
                }
                if seen[y] == x {
                    return Err(GraphError::DuplicateNeighbor { left: x, right: y });
                }
                seen[y] = x;
                targets.push(y);
            }
            offsets.push(targets.len());
        }
        Ok(Self::from_csr(left_size, right_size, offsets, targets))
    }

    pub(crate) fn from_csr(
        left_size: usize,
        right_size: usize,
        offsets: Vec<usize>,
        targets: Vec<usize>,
    ) -> Self {
        let degree = offsets.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0);
        let left_regular = offsets.windows(2).all(|w| w[1] - w[0] == degree);
        BiGraph {
            left_size,
            right_size,
            offsets,
            targets,
            degree,
            left_regular,
        }
    }

    /// Copies any adjacency into a materialized graph.
    pub fn materialize<A: Adjacency + ?Sized>(g: &A) -> Self {
        let mut offsets = Vec::with_capacity(g.left_size() + 1);
        let mut targets = Vec::new();
        let mut buf = Vec::new();
        offsets.push(0);
        for x in 0..g.left_size() {
            if g.is_left_present(x) {
                g.neighbors_into(x, &mut buf);
                targets.extend_from_slice(&buf);
            }
            offsets.push(targets.len());
        }
        Self::from_csr(g.left_size(), g.right_size(), offsets, targets)
    }

    pub fn neighbors(&self, x: usize) -> &[usize] {
        &self.targets[self.offsets[x]..self.offsets[x + 1]]
    }

    pub fn left_regular(&self) -> bool {
        self.left_regular
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.left_size).flat_map(move |x| self.neighbors(x).iter().map(move |&y| (x, y)))
    }

    /// Right-indexed adjacency: for every right node, its left neighbors in
    /// increasing order.
    pub fn right_adjacency(&self) -> Vec<Vec<usize>> {
        let mut rev = vec![Vec::new(); self.right_size];
        for (x, y) in self.edges() {
            rev[y].push(x);
        }
        rev
    }

    /// Line-based text form: `bigraph <left> <right>` then one line of
    /// space-separated right indices per left node.
    pub fn to_text(&self) -> String {
        let mut out = format!("bigraph {} {}\n", self.left_size, self.right_size);
        for x in 0..self.left_size {
            let line: Vec<String> = self.neighbors(x).iter().map(usize::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, GraphError> {
        let mut lines = text.split('\n');
        let header = lines.next().ok_or(GraphError::Parse {
            line: 1,
            msg: "empty input".into(),
        })?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "bigraph" {
            return Err(GraphError::Parse {
                line: 1,
                msg: "expected `bigraph <left_size> <right_size>`".into(),
            });
        }
        let parse_num = |s: &str, line: usize| {
            s.parse::<usize>().map_err(|e| GraphError::Parse {
                line,
                msg: format!("bad number {s:?}: {e}"),
            })
        };
        let left_size = parse_num(parts[1], 1)?;
        let right_size = parse_num(parts[2], 1)?;
        let mut adjacency = Vec::with_capacity(left_size);
        for i in 0..left_size {
            let line = lines.next().ok_or(GraphError::Parse {
                line: i + 2,
                msg: format!("expected {left_size} adjacency lines"),
            })?;
            let list = line
                .split_whitespace()
                .map(|tok| parse_num(tok, i + 2))
                .collect::<Result<Vec<_>, _>>()?;
            adjacency.push(list);
        }
        match lines.next() {
            None | Some("") => {}
            Some(_) => {
                return Err(GraphError::Parse {
                    line: left_size + 2,
                    msg: "trailing content".into(),
                })
            }
        }
        if lines.any(|l| !l.is_empty()) {
            return Err(GraphError::Parse {
                line: left_size + 3,
                msg: "trailing content".into(),
            });
        }
        Self::build(left_size, right_size, adjacency)
    }
}

impl Adjacency for BiGraph {
    fn left_size(&self) -> usize {
        self.left_size
    }
    fn right_size(&self) -> usize {
        self.right_size
    }
    fn degree(&self) -> usize {
        self.degree
    }
    fn left_degree(&self, x: usize) -> usize {
        self.offsets[x + 1] - self.offsets[x]
    }
    fn neighbors_into(&self, x: usize, out: &mut Vec<usize>) {
        out.clear();
        out.extend_from_slice(self.neighbors(x));
    }
    fn has_edge(&self, x: usize, y: usize) -> bool {
        self.neighbors(x).contains(&y)
    }
    fn is_left_regular(&self) -> bool {
        self.left_regular
    }
}

impl fmt::Debug for BiGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BiGraph")
            .field("left_size", &self.left_size)
            .field("right_size", &self.right_size)
            .field("degree", &self.degree)
            .field("left_regular", &self.left_regular)
            .field("edges", &self.targets.len())
            .finish()
    }
}

impl fmt::Display for BiGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
