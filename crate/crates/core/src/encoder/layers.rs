//! Graph layers: symmetric-normalized graph convolution, highway gating,
//! and neighborhood attention.

use std::rc::Rc;

use crate::autograd::{Tape, Var};
use crate::error::{EchoError, Result};

use super::graph::{GatEdges, GraphContext};
use super::params::Activation;

/// Negative slope used by every LeakyReLU in the attention logits.
pub const LEAKY_SLOPE: f64 = 0.2;

/// One attention distribution produced during a forward pass, kept so tests
/// can verify that every softmax sums to one per target.
#[derive(Clone)]
pub struct AttentionRecord {
    pub name: String,
    pub alpha: Var,
    pub segments: Rc<Vec<usize>>,
    pub n_segments: usize,
}

impl AttentionRecord {
    /// Per-target attention sums; targets with no incoming elements are
    /// skipped (they have no distribution).
    pub fn segment_sums(&self, tape: &Tape) -> Vec<f64> {
        let alpha = tape.value(self.alpha);
        let mut sums = vec![0.0f64; self.n_segments];
        let mut counts = vec![0usize; self.n_segments];
        for (e, &s) in self.segments.iter().enumerate() {
            sums[s] += alpha[[e, 0]];
            counts[s] += 1;
        }
        sums.into_iter()
            .zip(counts)
            .filter(|&(_, c)| c > 0)
            .map(|(s, _)| s)
            .collect()
    }
}

impl Activation {
    pub(crate) fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// One graph-convolution layer: sigma(D^-1/2 M_hat D^-1/2 X W).
pub fn gcn_forward(
    tape: &mut Tape,
    x: Var,
    ctx: &GraphContext,
    w: Var,
    activation: Activation,
) -> Result<Var> {
    let (n, d) = tape.value(x).dim();
    if n != ctx.n_entities {
        return Err(EchoError::Argument(format!(
            "gcn_forward: X has {n} rows, graph has {} entities",
            ctx.n_entities
        )));
    }
    let wd = tape.value(w).dim();
    if wd != (d, d) {
        return Err(EchoError::Argument(format!(
            "gcn_forward: weight must be {d}x{d}, got {wd:?}"
        )));
    }
    let agg = tape.spmm(ctx.norm_adj.clone(), x);
    let lin = tape.matmul(agg, w);
    Ok(activation.apply(tape, lin))
}

/// Gated mixing of two equal-shape representations:
/// alpha = sigmoid(Xa W + b), out = (1 - alpha) * Xa + alpha * Xb.
pub fn highway(tape: &mut Tape, xa: Var, xb: Var, gate_w: Var, gate_b: Var) -> Result<Var> {
    let da = tape.value(xa).dim();
    let db = tape.value(xb).dim();
    if da != db {
        return Err(EchoError::Argument(format!(
            "highway: shapes {da:?} and {db:?} differ"
        )));
    }
    let wd = tape.value(gate_w).dim();
    let bd = tape.value(gate_b).dim();
    if wd != (da.1, da.1) || bd != (1, da.1) {
        return Err(EchoError::Argument(format!(
            "highway: gate shapes {wd:?}/{bd:?} do not fit width {}",
            da.1
        )));
    }
    let pre = tape.matmul(xa, gate_w);
    let pre = tape.add_row(pre, gate_b);
    let alpha = tape.sigmoid(pre);
    let keep = tape.affine(alpha, -1.0, 1.0);
    let left = tape.mul(keep, xa);
    let right = tape.mul(alpha, xb);
    Ok(tape.add(left, right))
}

/// Neighborhood attention: per target i, softmax over neighbors j of
/// LeakyReLU(a^T [x_i || x_j]), then x_i' = sum_j alpha_ij x_j.
///
/// Edge lists built from M_hat always contain the self-loop, so no target
/// ever faces an empty softmax.
pub fn gat_forward(
    tape: &mut Tape,
    x: Var,
    edges: &GatEdges,
    attn: Var,
    name: &str,
) -> Result<(Var, AttentionRecord)> {
    let d = tape.value(x).ncols();
    let ad = tape.value(attn).dim();
    if ad != (2 * d, 1) {
        return Err(EchoError::Argument(format!(
            "gat_forward: attention vector must be {}x1, got {ad:?}",
            2 * d
        )));
    }
    let xi = tape.gather_rows(x, edges.targets.clone());
    let xj = tape.gather_rows(x, edges.sources.clone());
    let cat = tape.concat_cols(&[xi, xj]);
    let logits = tape.matmul(cat, attn);
    let act = tape.leaky_relu(logits, LEAKY_SLOPE);
    let alpha = tape.segment_softmax(act, edges.targets.clone(), edges.n_targets);
    let out = tape.segment_weighted_sum(alpha, xj, edges.targets.clone(), edges.n_targets);
    Ok((
        out,
        AttentionRecord {
            name: name.to_string(),
            alpha,
            segments: edges.targets.clone(),
            n_segments: edges.n_targets,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::KnowledgeGraph;
    use ndarray::{array, Array2};

    fn ctx_of(n: usize, triples: Vec<(usize, usize, usize)>) -> GraphContext {
        let mut kg = KnowledgeGraph {
            entity_names: (0..n).map(|i| format!("e{i}")).collect(),
            relation_names: (0..4).map(|i| i.to_string()).collect(),
            attribute_names: vec![],
            values: vec![],
            rel_triples: triples,
            attr_triples: vec![],
        };
        kg.normalize_triples();
        GraphContext::new(&kg)
    }

    #[test]
    fn gcn_identity_on_isolated_entity() {
        let ctx = ctx_of(1, vec![]);
        let mut tape = Tape::new();
        let x = tape.leaf(array![[3.0, -2.0]]);
        let w = tape.leaf(Array2::eye(2));
        let out = gcn_forward(&mut tape, x, &ctx, w, Activation::Identity).unwrap();
        assert_eq!(tape.value(out), &array![[3.0, -2.0]]);
    }

    #[test]
    fn gcn_two_entities_average_with_half_weights() {
        // One edge, undirected: M_hat is all-ones 2x2, degrees are 2, so the
        // normalized operator is constant 0.5 and X = 2I maps to all-ones.
        let ctx = ctx_of(2, vec![(0, 0, 1)]);
        let mut tape = Tape::new();
        let x = tape.leaf(array![[2.0, 0.0], [0.0, 2.0]]);
        let w = tape.leaf(Array2::eye(2));
        let out = gcn_forward(&mut tape, x, &ctx, w, Activation::Identity).unwrap();
        for v in tape.value(out).iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gcn_preserves_constant_rows_on_regular_graph() {
        // 3-cycle is 3-regular after self-loops; the symmetric-normalized
        // operator is row-stochastic there, fixing constant-row inputs.
        let ctx = ctx_of(3, vec![(0, 0, 1), (1, 0, 2), (2, 0, 0)]);
        let mut tape = Tape::new();
        let x = tape.leaf(array![[4.0, -1.5], [4.0, -1.5], [4.0, -1.5]]);
        let w = tape.leaf(Array2::eye(2));
        let out = gcn_forward(&mut tape, x, &ctx, w, Activation::Identity).unwrap();
        for (a, b) in tape.value(out).iter().zip(tape.value(x).iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gcn_rejects_shape_mismatch() {
        let ctx = ctx_of(2, vec![(0, 0, 1)]);
        let mut tape = Tape::new();
        let x = tape.leaf(Array2::zeros((2, 3)));
        let w = tape.leaf(Array2::zeros((2, 2)));
        assert!(gcn_forward(&mut tape, x, &ctx, w, Activation::Identity).is_err());
    }

    #[test]
    fn highway_fixed_point_when_inputs_equal() {
        let mut tape = Tape::new();
        let xa = tape.leaf(array![[1.0, -2.0], [0.5, 3.0]]);
        let xb = tape.leaf(array![[1.0, -2.0], [0.5, 3.0]]);
        let w = tape.leaf(array![[0.7, -0.3], [0.2, 0.9]]);
        let b = tape.leaf(array![[0.1, -0.4]]);
        let out = highway(&mut tape, xa, xb, w, b).unwrap();
        for (o, a) in tape.value(out).iter().zip(tape.value(xa).iter()) {
            assert!((o - a).abs() < 1e-12);
        }
    }

    #[test]
    fn highway_zero_gate_is_plain_average() {
        let mut tape = Tape::new();
        let xa = tape.leaf(array![[2.0, 0.0]]);
        let xb = tape.leaf(array![[0.0, 4.0]]);
        let w = tape.leaf(Array2::zeros((2, 2)));
        let b = tape.leaf(Array2::zeros((1, 2)));
        let out = highway(&mut tape, xa, xb, w, b).unwrap();
        assert_eq!(tape.value(out), &array![[1.0, 2.0]]);
    }

    #[test]
    fn highway_rejects_shape_mismatch() {
        let mut tape = Tape::new();
        let xa = tape.leaf(Array2::zeros((2, 2)));
        let xb = tape.leaf(Array2::zeros((3, 2)));
        let w = tape.leaf(Array2::zeros((2, 2)));
        let b = tape.leaf(Array2::zeros((1, 2)));
        assert!(highway(&mut tape, xa, xb, w, b).is_err());
    }

    #[test]
    fn gat_uniform_attention_for_identical_neighbors() {
        let ctx = ctx_of(3, vec![(0, 0, 1), (0, 0, 2)]);
        let mut tape = Tape::new();
        let x = tape.leaf(array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]);
        let a = tape.leaf(Array2::from_shape_fn((4, 1), |(i, _)| 0.3 * i as f64));
        let (out, rec) = gat_forward(&mut tape, x, &ctx.gat_edges, a, "t").unwrap();
        // all features identical -> attention uniform -> output equals input
        for (o, i) in tape.value(out).iter().zip(tape.value(x).iter()) {
            assert!((o - i).abs() < 1e-12);
        }
        let alpha = tape.value(rec.alpha);
        // entity 0 has neighbors {0, 1, 2}: uniform 1/3
        for (e, &t) in rec.segments.iter().enumerate() {
            if t == 0 {
                assert!((alpha[[e, 0]] - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gat_single_neighbor_copies_it() {
        // entity 1's only neighbors are itself and entity 0; make the self
        // loop the sole neighbor of entity 0 to check the single-term case.
        let ctx = ctx_of(1, vec![]);
        let mut tape = Tape::new();
        let x = tape.leaf(array![[2.5, -1.0]]);
        let a = tape.leaf(Array2::from_shape_fn((4, 1), |(i, _)| i as f64 - 1.5));
        let (out, rec) = gat_forward(&mut tape, x, &ctx.gat_edges, a, "t").unwrap();
        assert_eq!(tape.value(out), &array![[2.5, -1.0]]);
        assert_eq!(rec.segment_sums(&tape), vec![1.0]);
    }

    #[test]
    fn highway_output_lies_between_its_inputs() {
        use proptest::prelude::*;
        let mut runner = proptest::test_runner::TestRunner::default();
        runner
            .run(
                &(
                    proptest::collection::vec(-5.0f64..5.0, 6),
                    proptest::collection::vec(-5.0f64..5.0, 6),
                    proptest::collection::vec(-2.0f64..2.0, 9),
                    proptest::collection::vec(-2.0f64..2.0, 3),
                ),
                |(a, b, w, bias)| {
                    let mut tape = Tape::new();
                    let xa = tape.leaf(Array2::from_shape_vec((2, 3), a).unwrap());
                    let xb = tape.leaf(Array2::from_shape_vec((2, 3), b).unwrap());
                    let gw = tape.leaf(Array2::from_shape_vec((3, 3), w).unwrap());
                    let gb = tape.leaf(Array2::from_shape_vec((1, 3), bias).unwrap());
                    let out = highway(&mut tape, xa, xb, gw, gb).unwrap();
                    let (av, bv, ov) = (tape.value(xa), tape.value(xb), tape.value(out));
                    for ((x, y), o) in av.iter().zip(bv.iter()).zip(ov.iter()) {
                        let (lo, hi) = (x.min(*y), x.max(*y));
                        prop_assert!(*o >= lo - 1e-12 && *o <= hi + 1e-12);
                    }
                    Ok(())
                },
            )
            .unwrap();
    }

    #[test]
    fn gat_attention_sums_to_one_and_stays_in_hull() {
        let ctx = ctx_of(4, vec![(0, 0, 1), (0, 1, 2), (0, 2, 3)]);
        let mut tape = Tape::new();
        let x = tape.leaf(array![
            [0.2, -1.0],
            [1.5, 0.3],
            [-0.7, 2.2],
            [0.9, 0.9]
        ]);
        let a = tape.leaf(Array2::from_shape_fn((4, 1), |(i, _)| (i as f64) * 0.41 - 0.8));
        let (out, rec) = gat_forward(&mut tape, x, &ctx.gat_edges, a, "t").unwrap();
        for s in rec.segment_sums(&tape) {
            assert!((s - 1.0).abs() < 1e-6);
        }
        // convex-combination bound per coordinate over each neighborhood
        let xv = tape.value(x).clone();
        let ov = tape.value(out).clone();
        for i in 0..4 {
            let neigh: Vec<usize> = rec
                .segments
                .iter()
                .enumerate()
                .filter(|&(_, &t)| t == i)
                .map(|(e, _)| ctx.gat_edges.sources[e])
                .collect();
            for c in 0..2 {
                let lo = neigh.iter().map(|&j| xv[[j, c]]).fold(f64::INFINITY, f64::min);
                let hi = neigh
                    .iter()
                    .map(|&j| xv[[j, c]])
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!(ov[[i, c]] >= lo - 1e-9 && ov[[i, c]] <= hi + 1e-9);
            }
        }
    }
}
