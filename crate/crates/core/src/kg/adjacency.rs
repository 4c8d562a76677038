//! Self-loop adjacency and labeled neighbor lists.

use super::KnowledgeGraph;
use std::collections::BTreeSet;

/// Role of the owning entity in the triple behind a neighbor edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Direction {
    /// The owning entity is the head; the neighbor is the tail.
    HeadToTail,
    /// The owning entity is the tail; the neighbor is the head.
    TailToHead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct NeighborEdge {
    pub neighbor: usize,
    pub relation: usize,
    pub direction: Direction,
}

/// Adjacency with self-connections: the 0/1 matrix M_hat = M + I, its degree
/// vector, and per-entity relation-labeled neighbor lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyStructure {
    pub n_entities: usize,
    /// Nonzero positions of M_hat, sorted; includes the full diagonal.
    pub edges: Vec<(usize, usize)>,
    /// Row sums of M_hat (each at least 1 because of the self-loop).
    pub degree: Vec<usize>,
    /// For each entity, its labeled neighbor edges (no self-loops here).
    pub neighbor_lists: Vec<Vec<NeighborEdge>>,
}

impl AdjacencyStructure {
    /// Neighbor column indices of row `i` in M_hat (includes `i` itself).
    pub fn row_neighbors(&self, i: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|&&(a, _)| a == i)
            .map(|&(_, b)| b)
            .collect()
    }
}

/// Builds M_hat = M + I from the relation triples of `kg`.
///
/// In undirected mode each triple (h, r, t) sets both M[h][t] and M[t][h],
/// and neighbor lists record the edge from both ends with its direction.
/// In directed mode only M[h][t] is set and each entity lists only its
/// outgoing edges.
pub fn build_adjacency(kg: &KnowledgeGraph, undirected: bool) -> AdjacencyStructure {
    let n = kg.num_entities();
    let mut set: BTreeSet<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    let mut neighbor_lists: Vec<Vec<NeighborEdge>> = vec![Vec::new(); n];
    for &(h, r, t) in &kg.rel_triples {
        set.insert((h, t));
        neighbor_lists[h].push(NeighborEdge {
            neighbor: t,
            relation: r,
            direction: Direction::HeadToTail,
        });
        if undirected {
            set.insert((t, h));
            neighbor_lists[t].push(NeighborEdge {
                neighbor: h,
                relation: r,
                direction: Direction::TailToHead,
            });
        }
    }
    for list in &mut neighbor_lists {
        list.sort_unstable();
    }
    let edges: Vec<(usize, usize)> = set.into_iter().collect();
    let mut degree = vec![0usize; n];
    for &(i, _) in &edges {
        degree[i] += 1;
    }
    AdjacencyStructure {
        n_entities: n,
        edges,
        degree,
        neighbor_lists,
    }
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn degree_equals_row_sum(
            n in 1usize..12,
            triples in proptest::collection::vec((0usize..12, 0usize..3, 0usize..12), 0..30),
            undirected in proptest::bool::ANY,
        ) {
            let triples: Vec<_> = triples
                .into_iter()
                .map(|(h, r, t)| (h % n, r, t % n))
                .collect();
            let mut kg = KnowledgeGraph {
                entity_names: (0..n).map(|i| i.to_string()).collect(),
                relation_names: (0..3).map(|i| i.to_string()).collect(),
                attribute_names: vec![],
                values: vec![],
                rel_triples: triples,
                attr_triples: vec![],
            };
            kg.normalize_triples();
            let adj = build_adjacency(&kg, undirected);
            for i in 0..n {
                prop_assert_eq!(adj.degree[i], adj.row_neighbors(i).len());
                // diagonal present
                prop_assert!(adj.edges.binary_search(&(i, i)).is_ok());
            }
            if undirected {
                for &(a, b) in &adj.edges {
                    prop_assert!(adj.edges.binary_search(&(b, a)).is_ok(), "asymmetric edge ({}, {})", a, b);
                }
            }
        }
    }
}
