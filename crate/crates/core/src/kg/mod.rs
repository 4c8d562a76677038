//! Knowledge-graph data model: entities, relations, attributes, triples,
//! seed pairs, and candidate sets.
//!
//! Ids are dense `usize` indices per KG side. Original ids/URIs from the
//! source files are kept in side tables for reporting.

mod adjacency;
mod io;
mod synth;

pub use adjacency::{build_adjacency, AdjacencyStructure, Direction, NeighborEdge};
pub use io::{load_dataset, load_embeddings, save_dataset, save_embeddings};
pub use synth::{synth_kg_pair, SynthPair, SYNTH_EMB_DIM};

use std::collections::BTreeSet;

use crate::error::{EchoError, Result};

/// Set of (left entity, right entity) id pairs.
///
/// Used for seeds as well as the bootstrap sample sets P+, P-, P_iter+ and
/// P_iter-. `BTreeSet` keeps iteration order deterministic.
pub type PairSet = BTreeSet<(usize, usize)>;

/// One side of an alignment task: entities, relations, attributes, values
/// and both kinds of triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    /// Original entity ids (or URIs) indexed by dense entity id.
    pub entity_names: Vec<String>,
    /// Original relation names indexed by dense relation id.
    pub relation_names: Vec<String>,
    /// Attribute names indexed by dense attribute id.
    pub attribute_names: Vec<String>,
    /// Value strings indexed by dense value id.
    pub values: Vec<String>,
    /// (head, relation, tail) triples; deduplicated and sorted.
    pub rel_triples: Vec<(usize, usize, usize)>,
    /// (entity, attribute, value) triples.
    pub attr_triples: Vec<(usize, usize, usize)>,
}

impl KnowledgeGraph {
    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn num_attributes(&self) -> usize {
        self.attribute_names.len()
    }

    /// Checks that every id referenced by a triple exists.
    pub fn validate(&self) -> Result<()> {
        let (ne, nr) = (self.num_entities(), self.num_relations());
        for &(h, r, t) in &self.rel_triples {
            if h >= ne || t >= ne {
                return Err(EchoError::Integrity(format!(
                    "relation triple ({h}, {r}, {t}) references entity out of range (|E|={ne})"
                )));
            }
            if r >= nr {
                return Err(EchoError::Integrity(format!(
                    "relation triple ({h}, {r}, {t}) references relation out of range (|R|={nr})"
                )));
            }
        }
        let (na, nv) = (self.num_attributes(), self.values.len());
        for &(e, a, v) in &self.attr_triples {
            if e >= ne {
                return Err(EchoError::Integrity(format!(
                    "attribute triple ({e}, {a}, {v}) references entity out of range (|E|={ne})"
                )));
            }
            if a >= na {
                return Err(EchoError::Integrity(format!(
                    "attribute triple ({e}, {a}, {v}) references attribute out of range (|A|={na})"
                )));
            }
            if v >= nv {
                return Err(EchoError::Integrity(format!(
                    "attribute triple ({e}, {a}, {v}) references value out of range (|V|={nv})"
                )));
            }
        }
        Ok(())
    }

    /// Dedups and sorts relation triples in place.
    pub(crate) fn normalize_triples(&mut self) {
        self.rel_triples.sort_unstable();
        self.rel_triples.dedup();
        self.attr_triples.sort_unstable();
        self.attr_triples.dedup();
    }

    /// Attribute ids attached to `entity`.
    pub fn attrs_of(&self, entity: usize) -> BTreeSet<usize> {
        self.attr_triples
            .iter()
            .filter(|&&(e, _, _)| e == entity)
            .map(|&(_, a, _)| a)
            .collect()
    }
}

/// Pre-aligned entity pairs: a partial bijection between the two sides.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SeedPairs {
    pub pairs: PairSet,
}

impl SeedPairs {
    pub fn new(pairs: PairSet) -> Result<Self> {
        let mut lefts = BTreeSet::new();
        let mut rights = BTreeSet::new();
        for &(a, b) in &pairs {
            if !lefts.insert(a) {
                return Err(EchoError::Integrity(format!(
                    "seed left entity {a} appears more than once"
                )));
            }
            if !rights.insert(b) {
                return Err(EchoError::Integrity(format!(
                    "seed right entity {b} appears more than once"
                )));
            }
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn left_entities(&self) -> BTreeSet<usize> {
        self.pairs.iter().map(|&(a, _)| a).collect()
    }

    pub fn right_entities(&self) -> BTreeSet<usize> {
        self.pairs.iter().map(|&(_, b)| b).collect()
    }
}

/// Splits seeds into a train/test partition.
///
/// The split is a deterministic function of `rng_seed`: seeds are shuffled
/// with a seeded generator and the first `round(train_fraction * n)` go to
/// the train side.
pub fn split_seeds(
    seeds: &SeedPairs,
    train_fraction: f64,
    rng_seed: u64,
) -> Result<(SeedPairs, SeedPairs)> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if seeds.is_empty() {
        return Err(EchoError::Argument("cannot split an empty seed set".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(EchoError::Argument(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut all: Vec<(usize, usize)> = seeds.pairs.iter().copied().collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng_seed);
    all.shuffle(&mut rng);
    let n_train = (train_fraction * all.len() as f64).round() as usize;
    let train: PairSet = all[..n_train].iter().copied().collect();
    let test: PairSet = all[n_train..].iter().copied().collect();
    Ok((SeedPairs { pairs: train }, SeedPairs { pairs: test }))
}

/// Candidate entity sets E'1 and E'2: the entities eligible for alignment,
/// disjoint from the train seeds on each side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSets {
    /// Sorted KG1 candidate entity ids; row order of similarity matrices.
    pub left: Vec<usize>,
    /// Sorted KG2 candidate entity ids; column order of similarity matrices.
    pub right: Vec<usize>,
}

impl CandidateSets {
    /// Default candidates: all entities mentioned by the test pairs.
    pub fn from_test_seeds(test: &SeedPairs) -> Self {
        Self {
            left: test.left_entities().into_iter().collect(),
            right: test.right_entities().into_iter().collect(),
        }
    }

    /// Fails if a candidate entity also appears in the train seeds.
    pub fn check_disjoint(&self, train: &SeedPairs) -> Result<()> {
        let tl = train.left_entities();
        let tr = train.right_entities();
        if let Some(e) = self.left.iter().find(|e| tl.contains(e)) {
            return Err(EchoError::Integrity(format!(
                "candidate left entity {e} is also a train seed"
            )));
        }
        if let Some(e) = self.right.iter().find(|e| tr.contains(e)) {
            return Err(EchoError::Integrity(format!(
                "candidate right entity {e} is also a train seed"
            )));
        }
        Ok(())
    }
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn split_is_a_partition(n in 2usize..80, frac in 0.05f64..0.95, seed in 0u64..1000) {
            let seeds = SeedPairs::new((0..n).map(|i| (i, i + 10_000)).collect()).unwrap();
            let (train, test) = split_seeds(&seeds, frac, seed).unwrap();
            let mut union = train.pairs.clone();
            union.extend(test.pairs.iter().copied());
            prop_assert_eq!(&union, &seeds.pairs);
            prop_assert!(train.pairs.is_disjoint(&test.pairs));
            prop_assert_eq!(train.len(), (frac * n as f64).round() as usize);
        }
    }
}
