//! Constant-depth connectors built from graphs with dynamic matching.
//!
//! A network of depth 1 is the complete bipartite graph `(C·B) × B`. A
//! network of depth `c + 1` consists of `B` copies sharing `C·B^{c+1}`
//! inputs; copy `j` feeds the inputs through a matching graph into its own
//! network of depth `c`, whose outputs are the `j`-th block of `B^c`
//! outputs. To connect input `x` to output `y`, each level picks the copy
//! owning `y`, matches `x` there (or reuses the match `x`'s tree already has
//! in that copy) and continues from the matched node.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::bigraph::{fixtures, sample_random, Adjacency, BiGraph, GraphError};
use crate::dyn_match::{ffp_premise, FfpMatcher, FFP_MAX_LEFT};
use crate::game::basic::FirstFreeMatcher;
use crate::game::{MatchError, Matcher};
use crate::rng::child_seed;

pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum ConnectorError {
    #[error("need B >= 1 and t >= 1, got B = {b}, t = {t}")]
    Params { b: usize, t: usize },
    #[error("{n} is not a perfect {t}-th power")]
    NotPower { n: usize, t: usize },
    #[error("level {level} graph: {msg}")]
    Shape { level: usize, msg: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("input {x} out of range")]
    BadInput { x: usize },
    #[error("output {y} out of range")]
    BadOutput { y: usize },
    #[error("output {y} already lies on the tree of input {owner}")]
    OutputBusy { y: usize, owner: usize },
    #[error("input {x} has no tree")]
    UnknownTree { x: usize },
    #[error("output {y} is not a leaf of the tree of input {x}")]
    UnknownLeaf { x: usize, y: usize },
    #[error("matcher at depth {depth} failed: {source}")]
    Match { depth: usize, source: MatchError },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// Supplies the matching graphs of each level and their matchers.
pub trait LevelFactory {
    /// The constant `C`: a depth-`t` network has `C · B^t` inputs.
    fn multiplier(&self) -> usize;

    /// Graph for level `c` (`1 <= c < t`): `C · B^{c+1}` left nodes, at most
    /// `C · B^c` right nodes, dynamic matching up to `B^c`.
    fn graph(&mut self, level: usize, b: usize) -> Result<BiGraph, ConnectorError>;

    /// A fresh matcher for one copy of the level-`c` graph.
    fn matcher(
        &self,
        level: usize,
        graph: Arc<BiGraph>,
        capacity: usize,
    ) -> Result<Box<dyn Matcher>, ConnectorError>;
}

/// Complete bipartite graphs `(C · B^{c+1}) × B^c` with greedy matching.
#[derive(Debug, Clone)]
pub struct CompleteLevels {
    pub multiplier: usize,
}

impl Default for CompleteLevels {
    fn default() -> Self {
        CompleteLevels { multiplier: 1 }
    }
}

impl LevelFactory for CompleteLevels {
    fn multiplier(&self) -> usize {
        self.multiplier
    }

    fn graph(&mut self, level: usize, b: usize) -> Result<BiGraph, ConnectorError> {
        Ok(fixtures::complete(
            self.multiplier * b.pow(level as u32 + 1),
            b.pow(level as u32),
        ))
    }

    fn matcher(
        &self,
        _: usize,
        graph: Arc<BiGraph>,
        _: usize,
    ) -> Result<Box<dyn Matcher>, ConnectorError> {
        Ok(Box::new(FirstFreeMatcher::new(graph, 1)))
    }
}

/// Sampled graphs that pass the exhaustive premise of [`FfpMatcher`] for
/// levels with `B^c <= max_capacity`; complete graphs elsewhere.
#[derive(Debug, Clone)]
pub struct VerifiedLevels {
    pub multiplier: usize,
    pub max_capacity: usize,
    pub seed: u64,
    pub max_attempts: usize,
    verified: BTreeSet<usize>,
}

impl VerifiedLevels {
    pub fn new(seed: u64) -> Self {
        VerifiedLevels {
            multiplier: 4,
            max_capacity: 4,
            seed,
            max_attempts: 100,
            verified: BTreeSet::new(),
        }
    }

    /// Levels whose graph was sampled and verified.
    pub fn verified_levels(&self) -> &BTreeSet<usize> {
        &self.verified
    }
}

impl LevelFactory for VerifiedLevels {
    fn multiplier(&self) -> usize {
        self.multiplier
    }

    fn graph(&mut self, level: usize, b: usize) -> Result<BiGraph, ConnectorError> {
        let k = b.pow(level as u32);
        let left = self.multiplier * k * b;
        let right = self.multiplier * k;
        if k > self.max_capacity || left > FFP_MAX_LEFT {
            return CompleteLevels {
                multiplier: self.multiplier,
            }
            .graph(level, b);
        }
        let degree = right.min(2 * k + 2);
        for attempt in 0..self.max_attempts as u64 {
            let g = sample_random(
                left,
                right,
                degree,
                child_seed(self.seed, (level as u64) << 32 | attempt),
            )?;
            if ffp_premise(&g, k) {
                self.verified.insert(level);
                return Ok(g);
            }
        }
        Err(ConnectorError::Shape {
            level,
            msg: format!(
                "no sampled graph met the premise in {} tries",
                self.max_attempts
            ),
        })
    }

    fn matcher(
        &self,
        level: usize,
        graph: Arc<BiGraph>,
        capacity: usize,
    ) -> Result<Box<dyn Matcher>, ConnectorError> {
        if self.verified.contains(&level) {
            let m = FfpMatcher::new(graph, capacity).map_err(|source| ConnectorError::Match {
                depth: level + 1,
                source,
            })?;
            Ok(Box::new(m))
        } else {
            Ok(Box::new(FirstFreeMatcher::new(graph, 1)))
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Link {
    right: usize,
    uses: usize,
}

struct Copy {
    graph: Arc<BiGraph>,
    matcher: Box<dyn Matcher>,
    sub: Net,
    links: HashMap<usize, Link>,
    capacity: usize,
    max_links: usize,
}

struct Net {
    depth: usize,
    inputs: Vec<NodeId>,
    outputs: Vec<NodeId>,
    copies: Vec<Copy>,
}

impl Net {
    fn edge_count(&self) -> usize {
        if self.copies.is_empty() {
            return self.inputs.len() * self.outputs.len();
        }
        self.copies
            .iter()
            .map(|c| c.graph.edge_count() + c.sub.edge_count())
            .sum()
    }

    fn edges(&self, layer: usize, out: &mut Vec<(usize, NodeId, NodeId)>) {
        if self.copies.is_empty() {
            for &u in &self.inputs {
                out.extend(self.outputs.iter().map(|&v| (layer, u, v)));
            }
            return;
        }
        for c in &self.copies {
            for (x, y) in c.graph.edges() {
                out.push((layer, self.inputs[x], c.sub.inputs[y]));
            }
            c.sub.edges(layer + 1, out);
        }
    }

    fn visit_copies(&self, f: &mut impl FnMut(&Copy)) {
        for c in &self.copies {
            f(c);
            c.sub.visit_copies(f);
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Tree {
    /// Leaf output index to its path of node ids, input first.
    leaves: BTreeMap<usize, Vec<NodeId>>,
    /// Node to the number of leaf paths through it.
    uses: BTreeMap<NodeId, usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConnectorStats {
    pub connects: u64,
    pub disconnects: u64,
    pub matcher_requests: u64,
    pub max_requests_per_connect: usize,
}

/// A connector network together with the current set of trees.
pub struct Connector {
    b: usize,
    t: usize,
    multiplier: usize,
    degree: usize,
    node_count: usize,
    root: Net,
    trees: BTreeMap<usize, Tree>,
    owner: HashMap<NodeId, usize>,
    leaf_owner: HashMap<usize, usize>,
    stats: ConnectorStats,
}

/// Integer `r` with `r^t = n`, if any.
pub fn integer_root(n: usize, t: usize) -> Option<usize> {
    if t == 0 {
        return None;
    }
    let guess = (n as f64).powf(1.0 / t as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1).find(|r| r.checked_pow(t as u32) == Some(n))
}

impl Connector {
    /// Connector for `N = B^t` outputs.
    pub fn build(
        b: usize,
        t: usize,
        factory: &mut dyn LevelFactory,
    ) -> Result<Self, ConnectorError> {
        if b == 0 || t == 0 {
            return Err(ConnectorError::Params { b, t });
        }
        let c = factory.multiplier();
        let mut graphs = Vec::with_capacity(t);
        let mut degree = b;
        for level in 1..t {
            let g = factory.graph(level, b)?;
            let k = b.pow(level as u32);
            if g.left_size() != c * k * b || g.right_size() > c * k {
                return Err(ConnectorError::Shape {
                    level,
                    msg: format!(
                        "expected {} left and at most {} right nodes, got {} and {}",
                        c * k * b,
                        c * k,
                        g.left_size(),
                        g.right_size()
                    ),
                });
            }
            degree = degree.max(g.degree());
            graphs.push(Arc::new(g));
        }
        let inputs: Vec<NodeId> = (0..c * b.pow(t as u32)).collect();
        let mut next = inputs.len();
        let outputs: Vec<NodeId> = (next..next + b.pow(t as u32)).collect();
        next += outputs.len();
        let root = Self::build_net(t, b, inputs, outputs, &graphs, factory, &mut next)?;
        Ok(Connector {
            b,
            t,
            multiplier: c,
            degree,
            node_count: next,
            root,
            trees: BTreeMap::new(),
            owner: HashMap::new(),
            leaf_owner: HashMap::new(),
            stats: ConnectorStats::default(),
        })
    }

    /// Connector for `n` outputs and depth `t`; `n` must be a `t`-th power.
    pub fn for_outputs(
        n: usize,
        t: usize,
        factory: &mut dyn LevelFactory,
    ) -> Result<Self, ConnectorError> {
        let b = integer_root(n, t).ok_or(ConnectorError::NotPower { n, t })?;
        Self::build(b, t, factory)
    }

    fn build_net(
        depth: usize,
        b: usize,
        inputs: Vec<NodeId>,
        outputs: Vec<NodeId>,
        graphs: &[Arc<BiGraph>],
        factory: &dyn LevelFactory,
        next: &mut NodeId,
    ) -> Result<Net, ConnectorError> {
        if depth == 1 {
            return Ok(Net {
                depth,
                inputs,
                outputs,
                copies: Vec::new(),
            });
        }
        let level = depth - 1;
        let graph = &graphs[level - 1];
        let block = b.pow(level as u32);
        let sub_inputs = factory.multiplier() * block;
        let mut copies = Vec::with_capacity(b);
        for j in 0..b {
            let ins: Vec<NodeId> = (*next..*next + sub_inputs).collect();
            *next += sub_inputs;
            let outs = outputs[j * block..(j + 1) * block].to_vec();
            let sub = Self::build_net(depth - 1, b, ins, outs, graphs, factory, next)?;
            copies.push(Copy {
                graph: graph.clone(),
                matcher: factory.matcher(level, graph.clone(), block)?,
                sub,
                links: HashMap::new(),
                capacity: block,
                max_links: 0,
            });
        }
        Ok(Net {
            depth,
            inputs,
            outputs,
            copies,
        })
    }

    pub fn branching(&self) -> usize {
        self.b
    }

    pub fn depth(&self) -> usize {
        self.t
    }

    /// The constant `C`.
    pub fn multiplier(&self) -> usize {
        self.multiplier
    }

    /// Largest left degree among the level graphs and the depth-1 networks.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn inputs(&self) -> usize {
        self.root.inputs.len()
    }

    pub fn outputs(&self) -> usize {
        self.root.outputs.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.root.edge_count()
    }

    /// `t · C · D · B^{t+1}`.
    pub fn edge_bound(&self) -> usize {
        self.t * self.multiplier * self.degree * self.b.pow(self.t as u32 + 1)
    }

    /// All edges as `(layer, from, to)`, layer 0 leaving the inputs.
    pub fn edges(&self) -> Vec<(usize, NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.edge_count());
        self.root.edges(0, &mut out);
        out
    }

    pub fn stats(&self) -> ConnectorStats {
        self.stats
    }

    /// Input whose tree holds output `y`, if any.
    pub fn tree_of_output(&self, y: usize) -> Option<usize> {
        self.leaf_owner.get(&y).copied()
    }

    /// Outputs of the tree rooted at `x`.
    pub fn leaves(&self, x: usize) -> Vec<usize> {
        self.trees
            .get(&x)
            .map_or_else(Vec::new, |t| t.leaves.keys().copied().collect())
    }

    /// Node path from input `x` to output `y`.
    pub fn path(&self, x: usize, y: usize) -> Option<&[NodeId]> {
        self.trees.get(&x)?.leaves.get(&y).map(Vec::as_slice)
    }

    /// Inputs that currently have a tree.
    pub fn roots(&self) -> Vec<usize> {
        self.trees.keys().copied().collect()
    }

    /// Adds output `y` to the tree of input `x`. Returns the number of
    /// matcher requests made.
    pub fn connect(&mut self, x: usize, y: usize) -> Result<usize, ConnectorError> {
        if x >= self.inputs() {
            return Err(ConnectorError::BadInput { x });
        }
        if y >= self.outputs() {
            return Err(ConnectorError::BadOutput { y });
        }
        if let Some(&owner) = self.leaf_owner.get(&y) {
            return Err(ConnectorError::OutputBusy { y, owner });
        }
        let mut path = vec![self.root.inputs[x]];
        let mut requests = 0;
        route(&mut self.root, x, y, &mut path, &mut requests)?;
        for &node in &path {
            if let Some(&o) = self.owner.get(&node) {
                if o != x {
                    return Err(ConnectorError::Invariant(format!(
                        "node {node} on trees of {o} and {x}"
                    )));
                }
            }
        }
        let tree = self.trees.entry(x).or_default();
        for &node in &path {
            *tree.uses.entry(node).or_default() += 1;
            self.owner.insert(node, x);
        }
        tree.leaves.insert(y, path);
        self.leaf_owner.insert(y, x);
        self.stats.connects += 1;
        self.stats.matcher_requests += requests as u64;
        self.stats.max_requests_per_connect = self.stats.max_requests_per_connect.max(requests);
        Ok(requests)
    }

    /// Removes output `y` from the tree of `x`, releasing matches no other
    /// leaf of the tree uses.
    pub fn prune(&mut self, x: usize, y: usize) -> Result<(), ConnectorError> {
        let tree = self
            .trees
            .get_mut(&x)
            .ok_or(ConnectorError::UnknownTree { x })?;
        let path = tree
            .leaves
            .remove(&y)
            .ok_or(ConnectorError::UnknownLeaf { x, y })?;
        unroute(&mut self.root, x, y)?;
        for node in path {
            let n = tree.uses.get_mut(&node).expect("path nodes are counted");
            *n -= 1;
            if *n == 0 {
                tree.uses.remove(&node);
                self.owner.remove(&node);
            }
        }
        self.leaf_owner.remove(&y);
        if tree.leaves.is_empty() {
            self.trees.remove(&x);
        }
        Ok(())
    }

    /// Removes the whole tree of `x`.
    pub fn disconnect(&mut self, x: usize) -> Result<(), ConnectorError> {
        let leaves = self.leaves(x);
        if leaves.is_empty() {
            return Err(ConnectorError::UnknownTree { x });
        }
        for y in leaves {
            self.prune(x, y)?;
        }
        self.stats.disconnects += 1;
        Ok(())
    }

    /// Audits disjointness, ownership and per-copy match counts.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen: HashMap<NodeId, usize> = HashMap::new();
        for (&x, tree) in &self.trees {
            let mut nodes = BTreeSet::new();
            for (&y, path) in &tree.leaves {
                if path.len() != self.t + 1 {
                    return Err(format!("path {x} -> {y} has {} nodes", path.len()));
                }
                if path[0] != self.root.inputs[x] || path[self.t] != self.root.outputs[y] {
                    return Err(format!("path {x} -> {y} has wrong endpoints"));
                }
                nodes.extend(path.iter().copied());
            }
            for node in nodes {
                if let Some(other) = seen.insert(node, x) {
                    return Err(format!("node {node} shared by trees of {other} and {x}"));
                }
                if self.owner.get(&node) != Some(&x) {
                    return Err(format!("owner map disagrees at node {node}"));
                }
            }
        }
        if seen.len() != self.owner.len() {
            return Err("owner map holds stale nodes".into());
        }
        let mut err = None;
        self.root.visit_copies(&mut |c| {
            if c.links.len() > c.capacity && err.is_none() {
                err = Some(format!(
                    "{} matches in a copy of capacity {}",
                    c.links.len(),
                    c.capacity
                ));
            }
        });
        err.map_or(Ok(()), Err)
    }

    /// Largest number of simultaneous matches seen in any copy, with that copy's capacity.
    pub fn max_copy_load(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        self.root
            .visit_copies(&mut |c| out.push((c.max_links, c.capacity)));
        out
    }

    /// Layered edge list followed by one `TREE <input>: <path>` line per leaf.
    pub fn dump(&self) -> String {
        let mut out = format!(
            "NETWORK b={} t={} c={} d={} inputs={} outputs={} nodes={} edges={}\n",
            self.b,
            self.t,
            self.multiplier,
            self.degree,
            self.inputs(),
            self.outputs(),
            self.node_count,
            self.edge_count()
        );
        for (layer, u, v) in self.edges() {
            writeln!(out, "EDGE {layer} {u} {v}").unwrap();
        }
        for (x, tree) in &self.trees {
            for path in tree.leaves.values() {
                let nodes: Vec<String> = path.iter().map(usize::to_string).collect();
                writeln!(out, "TREE {x}: {}", nodes.join(" ")).unwrap();
            }
        }
        out
    }
}

fn route(
    net: &mut Net,
    x: usize,
    y: usize,
    path: &mut Vec<NodeId>,
    requests: &mut usize,
) -> Result<(), ConnectorError> {
    if net.copies.is_empty() {
        path.push(net.outputs[y]);
        return Ok(());
    }
    let depth = net.depth;
    let block = net.outputs.len() / net.copies.len();
    let copy = &mut net.copies[y / block];
    let right = match copy.links.get_mut(&x) {
        Some(link) => {
            link.uses += 1;
            link.right
        }
        None => {
            *requests += 1;
            let reply = copy
                .matcher
                .request(x)
                .map_err(|source| ConnectorError::Match { depth, source })?;
            let right = match reply.as_slice() {
                [r] if copy.graph.neighbors(x).contains(r) => *r,
                _ => {
                    return Err(ConnectorError::Invariant(format!(
                        "bad match {reply:?} for {x} at depth {depth}"
                    )))
                }
            };
            if copy.links.values().any(|l| l.right == right) {
                return Err(ConnectorError::Invariant(format!(
                    "right node {right} matched twice at depth {depth}"
                )));
            }
            copy.links.insert(x, Link { right, uses: 1 });
            copy.max_links = copy.max_links.max(copy.links.len());
            right
        }
    };
    path.push(copy.sub.inputs[right]);
    route(&mut copy.sub, right, y % block, path, requests)
}

fn unroute(net: &mut Net, x: usize, y: usize) -> Result<(), ConnectorError> {
    if net.copies.is_empty() {
        return Ok(());
    }
    let depth = net.depth;
    let block = net.outputs.len() / net.copies.len();
    let copy = &mut net.copies[y / block];
    let link = copy
        .links
        .get_mut(&x)
        .ok_or_else(|| ConnectorError::Invariant(format!("no match for {x} at depth {depth}")))?;
    let right = link.right;
    link.uses -= 1;
    if link.uses == 0 {
        copy.links.remove(&x);
        copy.matcher
            .retract(x, &[right])
            .map_err(|source| ConnectorError::Match { depth, source })?;
    }
    unroute(&mut copy.sub, right, y % block)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_one_is_complete() {
        let c = Connector::build(5, 1, &mut CompleteLevels { multiplier: 2 }).unwrap();
        assert_eq!(c.edge_count(), 10 * 5);
        assert!(c.edge_count() <= c.edge_bound());
    }

    #[test]
    fn recursive_edge_count() {
        // B = 3, t = 2, C = 1: three copies of K(9, 3) feeding K(3, 3)
        let c = Connector::build(3, 2, &mut CompleteLevels::default()).unwrap();
        assert_eq!(c.edge_count(), 3 * (27 + 9));
        assert!(c.edge_count() <= c.edge_bound());
        assert_eq!(c.edges().len(), c.edge_count());
    }

    #[test]
    fn connect_extend_and_prune() {
        let mut c = Connector::build(2, 2, &mut CompleteLevels::default()).unwrap();
        assert_eq!(c.connect(1, 0).unwrap(), 1);
        assert_eq!(c.path(1, 0).unwrap().len(), 3);
        // same copy: the first-level match is reused
        assert_eq!(c.connect(1, 1).unwrap(), 0);
        // other copy: a new match
        assert_eq!(c.connect(1, 3).unwrap(), 1);
        assert!(matches!(
            c.connect(0, 3),
            Err(ConnectorError::OutputBusy { y: 3, owner: 1 })
        ));
        c.check_invariants().unwrap();
        let trunk = c.path(1, 1).unwrap()[1];
        c.prune(1, 0).unwrap();
        assert_eq!(c.path(1, 1).unwrap()[1], trunk);
        c.disconnect(1).unwrap();
        assert!(c.roots().is_empty());
        c.check_invariants().unwrap();
        assert!(c.root.copies.iter().all(|cp| cp.links.is_empty()));
    }

    #[test]
    fn rejects_non_powers_and_bad_shapes() {
        assert!(matches!(
            Connector::for_outputs(10, 2, &mut CompleteLevels::default()),
            Err(ConnectorError::NotPower { .. })
        ));
        assert_eq!(integer_root(27, 3), Some(3));

        struct Wrong;
        impl LevelFactory for Wrong {
            fn multiplier(&self) -> usize {
                1
            }
            fn graph(&mut self, _: usize, _: usize) -> Result<BiGraph, ConnectorError> {
                Ok(fixtures::complete(3, 3))
            }
            fn matcher(
                &self,
                _: usize,
                g: Arc<BiGraph>,
                _: usize,
            ) -> Result<Box<dyn Matcher>, ConnectorError> {
                Ok(Box::new(FirstFreeMatcher::new(g, 1)))
            }
        }
        assert!(matches!(
            Connector::build(2, 2, &mut Wrong),
            Err(ConnectorError::Shape { .. })
        ));
    }

    #[test]
    fn verified_levels_use_the_oracle() {
        let mut f = VerifiedLevels::new(3);
        let mut c = Connector::build(2, 2, &mut f).unwrap();
        assert!(f.verified_levels().contains(&1));
        assert_eq!(c.inputs(), 16);
        for (x, y) in [(0, 0), (5, 1), (9, 2), (0, 3)] {
            c.connect(x, y).unwrap();
        }
        c.check_invariants().unwrap();
        assert!(c.dump().lines().filter(|l| l.starts_with("TREE")).count() == 4);
    }
}
