//! The alignment encoder.
//!
//! Three stages map initial entity embeddings to alignment embeddings:
//!
//! 1. primitive aggregation: stacked graph convolutions and neighborhood
//!    attention with highway gates and dropout, width-preserving;
//! 2. echo: relation parts computed from entity features, then echoed back
//!    into per-entity head/tail parts (width d_e + 2 d_r);
//! 3. complete aggregation: one more attention pass concatenated with its
//!    input (width doubles).

mod checkpoint;
mod echo;
mod graph;
mod layers;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use echo::{can_forward, echo_forward, relation_repr, EchoVars};
pub use graph::{GatEdges, GraphContext, RelEdges, RoleList};
pub use layers::{gat_forward, gcn_forward, highway, AttentionRecord, LEAKY_SLOPE};
pub use params::{Activation, EncoderConfig, GateParams, ModelParams};

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::error::{EchoError, Result};

/// Whether dropout is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Tape handles of every parameter group, in [`ModelParams::groups`] order.
pub struct ParamVars {
    pub gcn_weights: Vec<Var>,
    pub pan_gcn_gate: Option<(Var, Var)>,
    pub pan_gat_attn: Vec<Var>,
    pub pan_gat_gates: Vec<(Var, Var)>,
    pub head_proj: Var,
    pub tail_proj: Var,
    pub rel_attn: Var,
    pub echo_attn_hh: Var,
    pub echo_attn_ht: Var,
    pub echo_attn_th: Var,
    pub echo_attn_tt: Var,
    pub en_head_gate: (Var, Var),
    pub en_tail_gate: (Var, Var),
    pub can_attn: Var,
}

impl ParamVars {
    /// Puts every group of `params` on the tape.
    pub fn leaf(tape: &mut Tape, params: &ModelParams) -> Self {
        Self {
            gcn_weights: params.gcn_weights.iter().map(|w| tape.leaf(w.clone())).collect(),
            pan_gcn_gate: params
                .pan_gcn_gate
                .as_ref()
                .map(|g| (tape.leaf(g.w.clone()), tape.leaf(g.b.clone()))),
            pan_gat_attn: params.pan_gat_attn.iter().map(|a| tape.leaf(a.clone())).collect(),
            pan_gat_gates: params
                .pan_gat_gates
                .iter()
                .map(|g| (tape.leaf(g.w.clone()), tape.leaf(g.b.clone())))
                .collect(),
            head_proj: tape.leaf(params.head_proj.clone()),
            tail_proj: tape.leaf(params.tail_proj.clone()),
            rel_attn: tape.leaf(params.rel_attn.clone()),
            echo_attn_hh: tape.leaf(params.echo_attn_hh.clone()),
            echo_attn_ht: tape.leaf(params.echo_attn_ht.clone()),
            echo_attn_th: tape.leaf(params.echo_attn_th.clone()),
            echo_attn_tt: tape.leaf(params.echo_attn_tt.clone()),
            en_head_gate: (
                tape.leaf(params.en_head_gate.w.clone()),
                tape.leaf(params.en_head_gate.b.clone()),
            ),
            en_tail_gate: (
                tape.leaf(params.en_tail_gate.w.clone()),
                tape.leaf(params.en_tail_gate.b.clone()),
            ),
            can_attn: tape.leaf(params.can_attn.clone()),
        }
    }

    /// Named vars aligned with [`ModelParams::groups`].
    pub fn named(&self) -> Vec<(String, Var)> {
        let mut out: Vec<(String, Var)> = Vec::new();
        for (i, v) in self.gcn_weights.iter().enumerate() {
            out.push((format!("gcn_w_{i}"), *v));
        }
        if let Some((w, b)) = &self.pan_gcn_gate {
            out.push(("pan_gcn_gate_w".into(), *w));
            out.push(("pan_gcn_gate_b".into(), *b));
        }
        for (i, v) in self.pan_gat_attn.iter().enumerate() {
            out.push((format!("pan_gat_attn_{i}"), *v));
        }
        for (i, (w, b)) in self.pan_gat_gates.iter().enumerate() {
            out.push((format!("pan_gat_gate_w_{i}"), *w));
            out.push((format!("pan_gat_gate_b_{i}"), *b));
        }
        out.push(("head_proj".into(), self.head_proj));
        out.push(("tail_proj".into(), self.tail_proj));
        out.push(("rel_attn".into(), self.rel_attn));
        out.push(("echo_attn_hh".into(), self.echo_attn_hh));
        out.push(("echo_attn_ht".into(), self.echo_attn_ht));
        out.push(("echo_attn_th".into(), self.echo_attn_th));
        out.push(("echo_attn_tt".into(), self.echo_attn_tt));
        out.push(("en_head_gate_w".into(), self.en_head_gate.0));
        out.push(("en_head_gate_b".into(), self.en_head_gate.1));
        out.push(("en_tail_gate_w".into(), self.en_tail_gate.0));
        out.push(("en_tail_gate_b".into(), self.en_tail_gate.1));
        out.push(("can_attn".into(), self.can_attn));
        out
    }
}

/// Attention distributions recorded during one encode pass.
#[derive(Default)]
pub struct EncodeTrace {
    pub attentions: Vec<AttentionRecord>,
}

impl EncodeTrace {
    /// (name, per-target sums) for every distribution.
    pub fn all_segment_sums(&self, tape: &Tape) -> Vec<(String, Vec<f64>)> {
        self.attentions
            .iter()
            .map(|r| (r.name.clone(), r.segment_sums(tape)))
            .collect()
    }
}

/// First stage: GCN stack gated against the raw input, dropout, then
/// attention layers each gated against their own input. Width d_e is
/// preserved throughout. Dropout only fires in train mode.
pub fn pan_forward(
    tape: &mut Tape,
    x0: Var,
    ctx: &GraphContext,
    pv: &ParamVars,
    cfg: &EncoderConfig,
    mode: Mode,
    rng: &mut ChaCha8Rng,
    trace: &mut EncodeTrace,
) -> Result<Var> {
    let mut x = x0;
    if cfg.pan_gcn_layers > 0 {
        let mut g = x0;
        for w in &pv.gcn_weights {
            g = gcn_forward(tape, g, ctx, *w, cfg.activation)?;
        }
        let (gw, gb) = pv.pan_gcn_gate.as_ref().ok_or_else(|| {
            EchoError::Argument("params lack the gcn highway gate this config needs".into())
        })?;
        x = highway(tape, x0, g, *gw, *gb)?;
    }
    if mode == Mode::Train && cfg.dropout_rate > 0.0 {
        x = tape.dropout(x, cfg.dropout_rate, rng);
    }
    for l in 0..cfg.pan_gat_layers {
        let (y, rec) = gat_forward(tape, x, &ctx.gat_edges, pv.pan_gat_attn[l], &format!("pan_gat_{l}"))?;
        trace.attentions.push(rec);
        let (gw, gb) = pv.pan_gat_gates[l];
        x = highway(tape, x, y, gw, gb)?;
    }
    Ok(x)
}

/// Builds the full encoder graph on `tape`, returning the output var and
/// the recorded attention distributions.
pub fn build_encode(
    tape: &mut Tape,
    ctx: &GraphContext,
    x0: Var,
    pv: &ParamVars,
    cfg: &EncoderConfig,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<(Var, EncodeTrace)> {
    cfg.validate()?;
    let dim = tape.value(x0).dim();
    if dim != (ctx.n_entities, cfg.d_e) {
        return Err(EchoError::Argument(format!(
            "encode: X0 is {dim:?}, expected ({}, {})",
            ctx.n_entities, cfg.d_e
        )));
    }
    let mut trace = EncodeTrace::default();

    let x_pan = if cfg.use_pan {
        pan_forward(tape, x0, ctx, pv, cfg, mode, rng, &mut trace)?
    } else {
        x0
    };

    let x_en = if cfg.use_en {
        let (rh, rt, rec) = relation_repr(tape, x_pan, ctx, pv.head_proj, pv.tail_proj, pv.rel_attn)?;
        trace.attentions.push(rec);
        let vars = EchoVars {
            attn_hh: pv.echo_attn_hh,
            attn_ht: pv.echo_attn_ht,
            attn_th: pv.echo_attn_th,
            attn_tt: pv.echo_attn_tt,
            head_gate_w: pv.en_head_gate.0,
            head_gate_b: pv.en_head_gate.1,
            tail_gate_w: pv.en_tail_gate.0,
            tail_gate_b: pv.en_tail_gate.1,
        };
        let (x_en, recs) = echo_forward(tape, x_pan, rh, rt, ctx, &vars)?;
        trace.attentions.extend(recs);
        x_en
    } else {
        x_pan
    };

    let out = if cfg.use_can {
        let (out, rec) = can_forward(tape, x_en, ctx, pv.can_attn)?;
        trace.attentions.push(rec);
        out
    } else {
        x_en
    };
    Ok((out, trace))
}

/// Runs the encoder eagerly and returns the alignment embeddings.
///
/// In infer mode the result is a pure function of (inputs, params); `rng`
/// is only consumed by dropout in train mode.
pub fn encode(
    ctx: &GraphContext,
    x0: &Array2<f64>,
    params: &ModelParams,
    cfg: &EncoderConfig,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<f64>> {
    let mut tape = Tape::new();
    let x0v = tape.leaf(x0.clone());
    let pv = ParamVars::leaf(&mut tape, params);
    let (out, _) = build_encode(&mut tape, ctx, x0v, &pv, cfg, mode, rng)?;
    Ok(tape.value(out).clone())
}
