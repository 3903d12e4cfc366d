//! Bipartite graphs, graph algebra, generators and brute-force checkers.

pub mod algebra;
pub mod check;
pub mod fixtures;
pub mod generate;
mod graph;

pub use algebra::{
    clone_graph, induced, product, union, union_source, InducedView, ProductView, UnionSide,
};
pub use check::{
    expansion_check, is_critical, neighborhood, offline_matching_check, private_neighbors,
    sampled_expansion_check, subset_count, ExpansionWitness,
};
pub use generate::{
    find_expander, prime_hash_graph, primes_from, sample_random, PrimeHash, VerifiedExpander,
};
pub use graph::{Adjacency, BiGraph, GraphError};
