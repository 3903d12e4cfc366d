//! Graph generators: seeded random left-regular graphs, prime hashing,
//! and rejection sampling for verified expanders.

use rand::seq::index;

use super::check::expansion_check;
use super::graph::{Adjacency, BiGraph, GraphError};
use crate::rng::{child_seed, stream, stream_rng};
use crate::scalar::Scalar;

/// Left-regular random graph: every left node gets `degree` distinct right
/// nodes drawn uniformly without replacement, listed in increasing order.
pub fn sample_random(
    left_size: usize,
    right_size: usize,
    degree: usize,
    seed: u64,
) -> Result<BiGraph, GraphError> {
    if degree > right_size {
        return Err(GraphError::DegreeTooLarge { degree, right_size });
    }
    let mut rng = stream_rng(seed, stream::GRAPH);
    let adjacency = (0..left_size)
        .map(|_| {
            let mut list = index::sample(&mut rng, right_size, degree).into_vec();
            list.sort_unstable();
            list
        })
        .collect();
    BiGraph::build(left_size, right_size, adjacency)
}

/// A random graph that passed an exhaustive expansion check, with the seed
/// that produced it.
#[derive(Debug, Clone)]
pub struct VerifiedExpander {
    pub graph: BiGraph,
    pub seed: u64,
    pub attempts: usize,
}

/// Rejection sampling: tries seeds derived from `seed` until a sampled graph
/// has `e`-expansion up to `k`, giving up after `max_attempts`.
pub fn find_expander<T: Scalar>(
    left_size: usize,
    right_size: usize,
    degree: usize,
    e: T,
    k: usize,
    seed: u64,
    max_attempts: usize,
) -> Result<Option<VerifiedExpander>, GraphError> {
    for attempt in 0..max_attempts {
        let s = child_seed(seed, attempt as u64);
        let g = sample_random(left_size, right_size, degree, s)?;
        if expansion_check(&g, e, k).holds {
            return Ok(Some(VerifiedExpander {
                graph: g,
                seed: s,
                attempts: attempt + 1,
            }));
        }
    }
    Ok(None)
}

/// Default bound on prime search.
pub const PRIME_SEARCH_LIMIT: usize = 1 << 31;

fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// The first `count` primes `>= floor`, or an error when the search passes `limit`.
pub fn primes_from(count: usize, floor: usize, limit: usize) -> Result<Vec<usize>, GraphError> {
    let mut primes = Vec::with_capacity(count);
    let mut n = floor.max(2);
    while primes.len() < count {
        if n >= limit {
            return Err(GraphError::PrimesExhausted {
                needed: count,
                floor,
                limit,
            });
        }
        if is_prime(n) {
            primes.push(n);
        }
        n += 1;
    }
    Ok(primes)
}

/// Implicit prime-hash graph: block `i` uses prime `p_i`, and left node `x`
/// is adjacent to `(i, x mod p_i)`, encoded `offset_i + x mod p_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeHash {
    left_size: usize,
    primes: Vec<usize>,
    offsets: Vec<usize>,
    right_size: usize,
}

impl PrimeHash {
    pub fn new(
        left_size: usize,
        block_count: usize,
        prime_floor: usize,
    ) -> Result<Self, GraphError> {
        Self::with_limit(left_size, block_count, prime_floor, PRIME_SEARCH_LIMIT)
    }

    pub fn with_limit(
        left_size: usize,
        block_count: usize,
        prime_floor: usize,
        limit: usize,
    ) -> Result<Self, GraphError> {
        let primes = primes_from(block_count, prime_floor, limit)?;
        let mut offsets = Vec::with_capacity(primes.len());
        let mut total = 0;
        for &p in &primes {
            offsets.push(total);
            total += p;
        }
        Ok(PrimeHash {
            left_size,
            primes,
            offsets,
            right_size: total,
        })
    }

    pub fn primes(&self) -> &[usize] {
        &self.primes
    }

    pub fn block_count(&self) -> usize {
        self.primes.len()
    }

    /// Right node of `x` in block `i`.
    pub fn node(&self, x: usize, block: usize) -> usize {
        self.offsets[block] + x % self.primes[block]
    }

    /// Blocks in which `x` and `x2` share a right node.
    pub fn collision_blocks(&self, x: usize, x2: usize) -> Vec<usize> {
        (0..self.primes.len())
            .filter(|&i| x % self.primes[i] == x2 % self.primes[i])
            .collect()
    }

    /// Upper bound on the number of blocks shared by two distinct left nodes:
    /// `⌊log N / log p_min⌋`, since `|x - x'| < N` has at most that many
    /// distinct prime factors `>= p_min`.
    pub fn collision_bound(left_size: usize, prime_floor: usize) -> usize {
        if left_size <= 1 || prime_floor < 2 {
            return if prime_floor < 2 { usize::MAX } else { 0 };
        }
        // integer form of floor(log N / log p): largest j with p^j <= N - 1
        let span = left_size - 1;
        let mut j = 0;
        let mut pow: usize = 1;
        while let Some(next) = pow.checked_mul(prime_floor) {
            if next > span {
                break;
            }
            pow = next;
            j += 1;
        }
        j
    }

    pub fn to_bigraph(&self) -> BiGraph {
        BiGraph::materialize(self)
    }
}

impl Adjacency for PrimeHash {
    fn left_size(&self) -> usize {
        self.left_size
    }
    fn right_size(&self) -> usize {
        self.right_size
    }
    fn degree(&self) -> usize {
        self.primes.len()
    }
    fn left_degree(&self, _x: usize) -> usize {
        self.primes.len()
    }
    fn neighbors_into(&self, x: usize, out: &mut Vec<usize>) {
        out.clear();
        out.extend((0..self.primes.len()).map(|i| self.node(x, i)));
    }
    fn has_edge(&self, x: usize, y: usize) -> bool {
        match self.offsets.partition_point(|&o| o <= y) {
            0 => false,
            b => self.node(x, b - 1) == y,
        }
    }
    fn is_left_regular(&self) -> bool {
        true
    }
}

/// Materialized prime-hash graph over `[N]` with `block_count` primes `>= prime_floor`.
pub fn prime_hash_graph(
    left_size: usize,
    block_count: usize,
    prime_floor: usize,
) -> Result<BiGraph, GraphError> {
    Ok(PrimeHash::new(left_size, block_count, prime_floor)?.to_bigraph())
}
