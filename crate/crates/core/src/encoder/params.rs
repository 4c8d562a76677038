//! Encoder configuration and trainable parameters.

use ndarray::Array2;
use rand::Rng;

use crate::error::{EchoError, Result};

/// Elementwise nonlinearity applied by the GCN layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "identity" => Ok(Self::Identity),
            "relu" => Ok(Self::Relu),
            "tanh" => Ok(Self::Tanh),
            other => Err(EchoError::Config(format!(
                "unknown activation {other:?} (expected identity, relu or tanh)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Relu => "relu",
            Self::Tanh => "tanh",
        }
    }
}

/// Static shape and pipeline choices of the encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    /// Entity embedding width d_e; preserved by the first stage.
    pub d_e: usize,
    /// Relation-part width d_r.
    pub d_r: usize,
    pub dropout_rate: f64,
    pub pan_gcn_layers: usize,
    pub pan_gat_layers: usize,
    pub activation: Activation,
    /// Stage toggles for ablations.
    pub use_pan: bool,
    pub use_en: bool,
    pub use_can: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_e: 300,
            d_r: 100,
            dropout_rate: 0.05,
            pan_gcn_layers: 1,
            pan_gat_layers: 2,
            activation: Activation::Relu,
            use_pan: true,
            use_en: true,
            use_can: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_e == 0 || self.d_r == 0 {
            return Err(EchoError::Config("d_e and d_r must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(EchoError::Config(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Width after the echo stage.
    pub fn en_width(&self) -> usize {
        if self.use_en {
            self.d_e + 2 * self.d_r
        } else {
            self.d_e
        }
    }

    /// Width of the final alignment embeddings.
    pub fn output_width(&self) -> usize {
        if self.use_can {
            2 * self.en_width()
        } else {
            self.en_width()
        }
    }
}

/// Sigmoid gate of a highway unit: weight matrix plus bias row.
#[derive(Clone, Debug, PartialEq)]
pub struct GateParams {
    pub w: Array2<f64>,
    pub b: Array2<f64>,
}

/// All trainable weights of the encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub gcn_weights: Vec<Array2<f64>>,
    pub pan_gcn_gate: Option<GateParams>,
    pub pan_gat_attn: Vec<Array2<f64>>,
    pub pan_gat_gates: Vec<GateParams>,
    pub head_proj: Array2<f64>,
    pub tail_proj: Array2<f64>,
    pub rel_attn: Array2<f64>,
    pub echo_attn_hh: Array2<f64>,
    pub echo_attn_ht: Array2<f64>,
    pub echo_attn_th: Array2<f64>,
    pub echo_attn_tt: Array2<f64>,
    pub en_head_gate: GateParams,
    pub en_tail_gate: GateParams,
    pub can_attn: Array2<f64>,
}

fn uniform_fan_in(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let bound = 1.0 / (rows as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

fn near_identity(d: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut w = Array2::eye(d);
    for v in w.iter_mut() {
        *v += rng.random_range(-0.01..0.01);
    }
    w
}

fn gate(d: usize, rng: &mut impl Rng) -> GateParams {
    GateParams {
        w: uniform_fan_in(d, d, rng),
        b: Array2::zeros((1, d)),
    }
}

impl ModelParams {
    pub fn init(cfg: &EncoderConfig, rng: &mut impl Rng) -> Self {
        let (de, dr) = (cfg.d_e, cfg.d_r);
        let can_in = cfg.en_width();
        Self {
            gcn_weights: (0..cfg.pan_gcn_layers).map(|_| near_identity(de, rng)).collect(),
            pan_gcn_gate: (cfg.pan_gcn_layers > 0).then(|| gate(de, rng)),
            pan_gat_attn: (0..cfg.pan_gat_layers)
                .map(|_| uniform_fan_in(2 * de, 1, rng))
                .collect(),
            pan_gat_gates: (0..cfg.pan_gat_layers).map(|_| gate(de, rng)).collect(),
            head_proj: uniform_fan_in(de, dr, rng),
            tail_proj: uniform_fan_in(de, dr, rng),
            rel_attn: uniform_fan_in(2 * dr, 1, rng),
            echo_attn_hh: uniform_fan_in(de + dr, 1, rng),
            echo_attn_ht: uniform_fan_in(de + dr, 1, rng),
            echo_attn_th: uniform_fan_in(de + dr, 1, rng),
            echo_attn_tt: uniform_fan_in(de + dr, 1, rng),
            en_head_gate: gate(dr, rng),
            en_tail_gate: gate(dr, rng),
            can_attn: uniform_fan_in(2 * can_in, 1, rng),
        }
    }

    /// Named parameter groups in a fixed order; the order is the contract
    /// for checkpoints, the optimizer, and gradient checks.
    pub fn groups(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out: Vec<(String, &Array2<f64>)> = Vec::new();
        for (i, w) in self.gcn_weights.iter().enumerate() {
            out.push((format!("gcn_w_{i}"), w));
        }
        if let Some(g) = &self.pan_gcn_gate {
            out.push(("pan_gcn_gate_w".into(), &g.w));
            out.push(("pan_gcn_gate_b".into(), &g.b));
        }
        for (i, a) in self.pan_gat_attn.iter().enumerate() {
            out.push((format!("pan_gat_attn_{i}"), a));
        }
        for (i, g) in self.pan_gat_gates.iter().enumerate() {
            out.push((format!("pan_gat_gate_w_{i}"), &g.w));
            out.push((format!("pan_gat_gate_b_{i}"), &g.b));
        }
        out.push(("head_proj".into(), &self.head_proj));
        out.push(("tail_proj".into(), &self.tail_proj));
        out.push(("rel_attn".into(), &self.rel_attn));
        out.push(("echo_attn_hh".into(), &self.echo_attn_hh));
        out.push(("echo_attn_ht".into(), &self.echo_attn_ht));
        out.push(("echo_attn_th".into(), &self.echo_attn_th));
        out.push(("echo_attn_tt".into(), &self.echo_attn_tt));
        out.push(("en_head_gate_w".into(), &self.en_head_gate.w));
        out.push(("en_head_gate_b".into(), &self.en_head_gate.b));
        out.push(("en_tail_gate_w".into(), &self.en_tail_gate.w));
        out.push(("en_tail_gate_b".into(), &self.en_tail_gate.b));
        out.push(("can_attn".into(), &self.can_attn));
        out
    }

    pub fn groups_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out: Vec<(String, &mut Array2<f64>)> = Vec::new();
        for (i, w) in self.gcn_weights.iter_mut().enumerate() {
            out.push((format!("gcn_w_{i}"), w));
        }
        if let Some(g) = &mut self.pan_gcn_gate {
            out.push(("pan_gcn_gate_w".into(), &mut g.w));
            out.push(("pan_gcn_gate_b".into(), &mut g.b));
        }
        for (i, a) in self.pan_gat_attn.iter_mut().enumerate() {
            out.push((format!("pan_gat_attn_{i}"), a));
        }
        for (i, g) in self.pan_gat_gates.iter_mut().enumerate() {
            out.push((format!("pan_gat_gate_w_{i}"), &mut g.w));
            out.push((format!("pan_gat_gate_b_{i}"), &mut g.b));
        }
        out.push(("head_proj".into(), &mut self.head_proj));
        out.push(("tail_proj".into(), &mut self.tail_proj));
        out.push(("rel_attn".into(), &mut self.rel_attn));
        out.push(("echo_attn_hh".into(), &mut self.echo_attn_hh));
        out.push(("echo_attn_ht".into(), &mut self.echo_attn_ht));
        out.push(("echo_attn_th".into(), &mut self.echo_attn_th));
        out.push(("echo_attn_tt".into(), &mut self.echo_attn_tt));
        out.push(("en_head_gate_w".into(), &mut self.en_head_gate.w));
        out.push(("en_head_gate_b".into(), &mut self.en_head_gate.b));
        out.push(("en_tail_gate_w".into(), &mut self.en_tail_gate.w));
        out.push(("en_tail_gate_b".into(), &mut self.en_tail_gate.b));
        out.push(("can_attn".into(), &mut self.can_attn));
        out
    }

    /// Replaces named groups with loaded payloads; every group must exist
    /// with a matching shape.
    pub fn assign_groups(&mut self, loaded: &[(String, Array2<f64>)]) -> Result<()> {
        use std::collections::HashMap;
        let by_name: HashMap<&str, &Array2<f64>> =
            loaded.iter().map(|(n, a)| (n.as_str(), a)).collect();
        for (name, slot) in self.groups_mut() {
            let src = by_name.get(name.as_str()).ok_or_else(|| {
                EchoError::Integrity(format!("checkpoint missing parameter group {name}"))
            })?;
            if src.dim() != slot.dim() {
                return Err(EchoError::Integrity(format!(
                    "checkpoint group {name} has shape {:?}, expected {:?}",
                    src.dim(),
                    slot.dim()
                )));
            }
            slot.assign(src);
        }
        Ok(())
    }
}
