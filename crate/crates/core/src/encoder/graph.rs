//! Precomputed graph structures consumed by the encoder: the normalized
//! self-loop adjacency, GAT edge lists, per-relation triple lists, and
//! per-entity relation role lists.

use std::rc::Rc;

use crate::autograd::CsrMatrix;
use crate::kg::{build_adjacency, AdjacencyStructure, KnowledgeGraph};

/// COO edge list for attention over graph neighborhoods; one element per
/// nonzero of M_hat, so every target has at least its self-loop.
#[derive(Debug, Clone)]
pub struct GatEdges {
    pub targets: Rc<Vec<usize>>,
    pub sources: Rc<Vec<usize>>,
    pub n_targets: usize,
}

/// One element per deduplicated relation triple, grouped by relation id.
#[derive(Debug, Clone)]
pub struct RelEdges {
    pub rels: Rc<Vec<usize>>,
    pub heads: Rc<Vec<usize>>,
    pub tails: Rc<Vec<usize>>,
    pub n_rels: usize,
}

/// Relation list of each entity in one role: element e pairs an entity with
/// one relation occurrence. Duplicate relation ids across distinct partner
/// entities are kept.
#[derive(Debug, Clone)]
pub struct RoleList {
    pub entities: Rc<Vec<usize>>,
    pub rels: Rc<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct GraphContext {
    pub n_entities: usize,
    pub n_relations: usize,
    /// D_hat^{-1/2} M_hat D_hat^{-1/2}
    pub norm_adj: Rc<CsrMatrix>,
    pub gat_edges: GatEdges,
    pub rel_edges: RelEdges,
    pub head_role: RoleList,
    pub tail_role: RoleList,
}

impl GraphContext {
    pub fn new(kg: &KnowledgeGraph) -> Self {
        let adj = build_adjacency(kg, true);
        Self::from_adjacency(kg, &adj)
    }

    pub fn from_adjacency(kg: &KnowledgeGraph, adj: &AdjacencyStructure) -> Self {
        let n = adj.n_entities;
        let entries: Vec<(usize, usize, f64)> = adj
            .edges
            .iter()
            .map(|&(i, j)| {
                let norm = 1.0 / ((adj.degree[i] as f64).sqrt() * (adj.degree[j] as f64).sqrt());
                (i, j, norm)
            })
            .collect();
        let norm_adj = Rc::new(CsrMatrix::from_entries(n, n, &entries));

        let targets: Vec<usize> = adj.edges.iter().map(|&(i, _)| i).collect();
        let sources: Vec<usize> = adj.edges.iter().map(|&(_, j)| j).collect();

        let mut rels = Vec::with_capacity(kg.rel_triples.len());
        let mut heads = Vec::with_capacity(kg.rel_triples.len());
        let mut tails = Vec::with_capacity(kg.rel_triples.len());
        let mut by_rel: Vec<(usize, usize, usize)> = kg
            .rel_triples
            .iter()
            .map(|&(h, r, t)| (r, h, t))
            .collect();
        by_rel.sort_unstable();
        for (r, h, t) in by_rel {
            rels.push(r);
            heads.push(h);
            tails.push(t);
        }

        let mut head_list: Vec<(usize, usize)> =
            kg.rel_triples.iter().map(|&(h, r, _)| (h, r)).collect();
        head_list.sort_unstable();
        let mut tail_list: Vec<(usize, usize)> =
            kg.rel_triples.iter().map(|&(_, r, t)| (t, r)).collect();
        tail_list.sort_unstable();

        Self {
            n_entities: n,
            n_relations: kg.num_relations(),
            norm_adj,
            gat_edges: GatEdges {
                targets: Rc::new(targets),
                sources: Rc::new(sources),
                n_targets: n,
            },
            rel_edges: RelEdges {
                rels: Rc::new(rels),
                heads: Rc::new(heads),
                tails: Rc::new(tails),
                n_rels: kg.num_relations(),
            },
            head_role: RoleList {
                entities: Rc::new(head_list.iter().map(|&(e, _)| e).collect()),
                rels: Rc::new(head_list.iter().map(|&(_, r)| r).collect()),
            },
            tail_role: RoleList {
                entities: Rc::new(tail_list.iter().map(|&(e, _)| e).collect()),
                rels: Rc::new(tail_list.iter().map(|&(_, r)| r).collect()),
            },
        }
    }
}
