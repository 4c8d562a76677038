//! Margin-based training with nearest-neighbor negative sampling and
//! periodic bootstrap rounds that grow the positive set and refresh the
//! iterative negative set.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::rc::Rc;

use crate::alignment::{abgs_from_combined, bidirectional_softmax, rel_similarity};
use crate::attr::{combine_similarity, SimilarityWeights};
use crate::autograd::{Tape, Var};
use crate::encoder::{build_encode, EncoderConfig, GraphContext, Mode, ModelParams, ParamVars};
use crate::error::{EchoError, Result};
use crate::eval::{bootstrap_quality, eval_report, BootstrapQuality, EvalDirection, EvalReport};
use crate::kg::{CandidateSets, KnowledgeGraph, PairSet, SeedPairs};
use crate::sim::SimilarityMatrix;

/// Optimization and bootstrap schedule parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    /// Margin of the hinge loss.
    pub margin: f64,
    /// Negatives sampled per positive.
    pub neg_per_pos: usize,
    /// Epoch period of bootstrap and negative-sample refresh.
    pub refresh_period: usize,
    pub max_epochs: usize,
    pub rng_seed: u64,
    /// Ablation: keep the initial embeddings fixed.
    pub freeze_embeddings: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            margin: 3.0,
            neg_per_pos: 5,
            refresh_period: 10,
            max_epochs: 100,
            rng_seed: 0,
            freeze_embeddings: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.margin <= 0.0 {
            return Err(EchoError::Config(format!(
                "margin must be positive, got {}",
                self.margin
            )));
        }
        if self.neg_per_pos == 0 {
            return Err(EchoError::Config("neg_per_pos must be at least 1".into()));
        }
        if self.refresh_period == 0 {
            return Err(EchoError::Config("refresh_period must be at least 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(EchoError::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// One negative record: a positive pair and its corrupted counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegRecord {
    pub pos: (usize, usize),
    pub neg: (usize, usize),
}

/// The sample sets the loss is computed over.
#[derive(Debug, Clone, Default)]
pub struct SampleBank {
    /// Train seeds plus accepted iterative positives.
    pub p_plus: PairSet,
    /// Sampled corruption records.
    pub p_minus: Vec<NegRecord>,
    /// Iterative negatives from the bootstrap; always disjoint from p_plus.
    pub p_iter_minus: PairSet,
}

impl SampleBank {
    pub fn check_invariants(&self) -> Result<()> {
        if !self.p_iter_minus.is_disjoint(&self.p_plus) {
            return Err(EchoError::Integrity(
                "p_iter_minus overlaps p_plus".into(),
            ));
        }
        Ok(())
    }
}

/// For each positive (e1, e2), corrupts the right side with e1's `k` most
/// similar entities under `s`, skipping any corruption that is itself a
/// known positive. Rows with fewer than `k` usable columns contribute what
/// they have.
pub fn sample_negatives(
    p_plus: &PairSet,
    s: &SimilarityMatrix,
    k: usize,
) -> Result<Vec<NegRecord>> {
    let mut out = Vec::with_capacity(p_plus.len() * k);
    for &(e1, e2) in p_plus {
        let row = s.row_of(e1).ok_or_else(|| {
            EchoError::Argument(format!("sampling similarity lacks a row for entity {e1}"))
        })?;
        let mut cols: Vec<usize> = (0..s.ncols()).collect();
        cols.sort_by(|&a, &b| {
            s.data[[row, b]]
                .partial_cmp(&s.data[[row, a]])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut taken = 0usize;
        for c in cols {
            if taken == k {
                break;
            }
            let cand = s.right_ids[c];
            if p_plus.contains(&(e1, cand)) {
                continue;
            }
            out.push(NegRecord {
                pos: (e1, e2),
                neg: (e1, cand),
            });
            taken += 1;
        }
    }
    Ok(out)
}

fn gather_pairs(
    tape: &mut Tape,
    e1: Var,
    e2: Var,
    pairs: impl Iterator<Item = (usize, usize)>,
) -> Var {
    let (lefts, rights): (Vec<usize>, Vec<usize>) = pairs.unzip();
    let l = tape.gather_rows(e1, Rc::new(lefts));
    let r = tape.gather_rows(e2, Rc::new(rights));
    tape.pair_l1(l, r)
}

/// Builds the loss on `tape` from final embeddings `e1`, `e2`:
/// sum over records of max(0, margin + d(pos) - d(neg)), plus
/// sum over iterative negatives of max(0, margin - d(neg)).
pub fn hinge_loss_graph(
    tape: &mut Tape,
    e1: Var,
    e2: Var,
    bank: &SampleBank,
    margin: f64,
) -> Result<Var> {
    if bank.p_plus.is_empty() {
        return Err(EchoError::Argument(
            "cannot train with an empty positive set".into(),
        ));
    }
    bank.check_invariants()?;

    let d_pos = gather_pairs(tape, e1, e2, bank.p_minus.iter().map(|r| r.pos));
    let d_neg = gather_pairs(tape, e1, e2, bank.p_minus.iter().map(|r| r.neg));
    let gap = tape.sub(d_pos, d_neg);
    let shifted = tape.affine(gap, 1.0, margin);
    let hinged = tape.relu(shifted);
    let main_sum = tape.sum_all(hinged);

    let d_iter = gather_pairs(tape, e1, e2, bank.p_iter_minus.iter().copied());
    let iter_shifted = tape.affine(d_iter, -1.0, margin);
    let iter_hinged = tape.relu(iter_shifted);
    let iter_sum = tape.sum_all(iter_hinged);

    Ok(tape.add(main_sum, iter_sum))
}

/// Eager scalar loss over plain embedding matrices.
pub fn hinge_loss(
    x1: &Array2<f64>,
    x2: &Array2<f64>,
    bank: &SampleBank,
    margin: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let e1 = tape.leaf(x1.clone());
    let e2 = tape.leaf(x2.clone());
    let loss = hinge_loss_graph(&mut tape, e1, e2, bank, margin)?;
    Ok(tape.value(loss)[[0, 0]])
}

/// Adam with bias correction; state is keyed by parameter-group name.
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: BTreeMap<String, Array2<f64>>,
    v: BTreeMap<String, Array2<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, updates: Vec<(String, &mut Array2<f64>, Array2<f64>)>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (name, param, grad) in updates {
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Array2::zeros(param.dim()));
            let v = self
                .v
                .entry(name)
                .or_insert_with(|| Array2::zeros(param.dim()));
            for ((mi, vi), (pi, gi)) in m
                .iter_mut()
                .zip(v.iter_mut())
                .zip(param.iter_mut().zip(grad.iter()))
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *pi -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Method toggles of the training loop.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub encoder: EncoderConfig,
    pub training: TrainingConfig,
    pub weights: SimilarityWeights,
    /// Grow the positive set / refresh iterative negatives every period.
    pub use_abgs: bool,
    /// Preprocess the combined similarity with row+column softmax before
    /// alignment.
    pub bidirectional_softmax: bool,
    /// When set, a checkpoint is written here at every bootstrap round.
    pub checkpoint_dir: Option<std::path::PathBuf>,
}

/// Optional side information: precomputed attribute similarities over the
/// candidate sets, pairs to evaluate against during training, and the
/// candidate ground truth for bootstrap-quality reporting.
#[derive(Default)]
pub struct TrainAux<'a> {
    pub s_attr: Option<&'a SimilarityMatrix>,
    pub s_attr_value: Option<&'a SimilarityMatrix>,
    pub eval_pairs: Option<&'a SeedPairs>,
    pub truth: Option<&'a PairSet>,
}

#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub n_p_plus: usize,
    pub n_iter_plus: usize,
    pub n_iter_minus: usize,
    pub eval: Option<EvalReport>,
}

#[derive(Debug, Clone)]
pub struct BootstrapRecord {
    pub round: usize,
    pub epoch: usize,
    pub n_iter_plus: usize,
    pub n_iter_minus: usize,
    pub n_global: usize,
    /// Quality of the global-filtered sets against the candidate truth.
    pub quality: Option<BootstrapQuality>,
    /// Quality the raw local sets would have had on the same round.
    pub quality_local_only: Option<BootstrapQuality>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub bootstraps: Vec<BootstrapRecord>,
}

/// Everything the loop produces.
pub struct TrainOutput {
    pub params: ModelParams,
    pub x1: Array2<f64>,
    pub x2: Array2<f64>,
    pub final1: Array2<f64>,
    pub final2: Array2<f64>,
    pub history: TrainHistory,
    pub bank: SampleBank,
}

fn zeros_like_candidates(candidates: &CandidateSets) -> SimilarityMatrix {
    SimilarityMatrix::new(
        candidates.left.clone(),
        candidates.right.clone(),
        Array2::zeros((candidates.left.len(), candidates.right.len())),
    )
    .expect("candidate shapes agree")
}

/// Column pool for negative sampling: candidate rights plus every right
/// entity already in the positive set.
fn sampling_candidates(p_plus: &PairSet, candidates: &CandidateSets) -> CandidateSets {
    let mut rights: std::collections::BTreeSet<usize> =
        candidates.right.iter().copied().collect();
    rights.extend(p_plus.iter().map(|&(_, b)| b));
    CandidateSets {
        left: p_plus.iter().map(|&(a, _)| a).collect(),
        right: rights.into_iter().collect(),
    }
}

/// The semi-supervised training loop.
///
/// Each epoch encodes both KGs with shared parameters, takes one optimizer
/// step on the hinge loss, and every `refresh_period` epochs recomputes the
/// combined similarity, runs the bootstrap generator, grows the positive
/// set, replaces the iterative negatives, and resamples corruption records.
#[allow(clippy::too_many_arguments)]
pub fn train_loop(
    kg1: &KnowledgeGraph,
    kg2: &KnowledgeGraph,
    train_seeds: &SeedPairs,
    candidates: &CandidateSets,
    x1_init: Array2<f64>,
    x2_init: Array2<f64>,
    options: &TrainOptions,
    aux: &TrainAux,
) -> Result<TrainOutput> {
    options.training.validate()?;
    options.encoder.validate()?;
    options.weights.validate()?;
    let cfg = &options.encoder;
    let tc = &options.training;

    if x1_init.dim() != (kg1.num_entities(), cfg.d_e) || x2_init.dim() != (kg2.num_entities(), cfg.d_e)
    {
        return Err(EchoError::Argument(format!(
            "initial embeddings {:?}/{:?} do not match entity counts and d_e={}",
            x1_init.dim(),
            x2_init.dim(),
            cfg.d_e
        )));
    }
    if tc.max_epochs > 0 && train_seeds.is_empty() {
        return Err(EchoError::Argument(
            "cannot train with an empty positive set".into(),
        ));
    }

    let ctx1 = GraphContext::new(kg1);
    let ctx2 = GraphContext::new(kg2);
    let mut rng = ChaCha8Rng::seed_from_u64(tc.rng_seed);
    let mut params = ModelParams::init(cfg, &mut rng);
    let mut x1 = x1_init;
    let mut x2 = x2_init;

    let zeros = zeros_like_candidates(candidates);
    let s_attr = aux.s_attr.unwrap_or(&zeros);
    let s_attr_value = aux.s_attr_value.unwrap_or(&zeros);

    let mut history = TrainHistory::default();
    let mut bank = SampleBank {
        p_plus: train_seeds.pairs.clone(),
        p_minus: Vec::new(),
        p_iter_minus: PairSet::new(),
    };
    let mut adam = Adam::new(tc.learning_rate);

    let infer = |params: &ModelParams, x1: &Array2<f64>, x2: &Array2<f64>| -> Result<(Array2<f64>, Array2<f64>)> {
        let mut dummy = ChaCha8Rng::seed_from_u64(0);
        let f1 = crate::encoder::encode(&ctx1, x1, params, cfg, Mode::Infer, &mut dummy)?;
        let f2 = crate::encoder::encode(&ctx2, x2, params, cfg, Mode::Infer, &mut dummy)?;
        Ok((f1, f2))
    };

    // initial negative sampling from the untrained encoder's similarity
    if tc.max_epochs > 0 {
        let (f1, f2) = infer(&params, &x1, &x2)?;
        let samp_cand = sampling_candidates(&bank.p_plus, candidates);
        let s_samp = rel_similarity(&f1, &f2, &samp_cand)?;
        bank.p_minus = sample_negatives(&bank.p_plus, &s_samp, tc.neg_per_pos)?;
    }

    let mut round = 0usize;
    for epoch in 1..=tc.max_epochs {
        let mut tape = Tape::new();
        let x1v = tape.leaf(x1.clone());
        let x2v = tape.leaf(x2.clone());
        let pv = ParamVars::leaf(&mut tape, &params);
        let (out1, _) = build_encode(&mut tape, &ctx1, x1v, &pv, cfg, Mode::Train, &mut rng)?;
        let (out2, _) = build_encode(&mut tape, &ctx2, x2v, &pv, cfg, Mode::Train, &mut rng)?;
        let loss_var = hinge_loss_graph(&mut tape, out1, out2, &bank, tc.margin)?;
        let loss = tape.value(loss_var)[[0, 0]];
        if !loss.is_finite() {
            return Err(EchoError::Numeric(format!(
                "loss diverged to {loss} at epoch {epoch}"
            )));
        }
        let grads = tape.backward(loss_var);

        let mut updates: Vec<(String, &mut Array2<f64>, Array2<f64>)> = Vec::new();
        let named = pv.named();
        for ((name, slot), (gname, var)) in params.groups_mut().into_iter().zip(named.iter()) {
            debug_assert_eq!(&name, gname);
            let dim = slot.dim();
            updates.push((name, slot, grads.get_or_zeros(*var, dim)));
        }
        if !tc.freeze_embeddings {
            let d1 = x1.dim();
            updates.push(("x0_1".into(), &mut x1, grads.get_or_zeros(x1v, d1)));
            let d2 = x2.dim();
            updates.push(("x0_2".into(), &mut x2, grads.get_or_zeros(x2v, d2)));
        }
        adam.step(updates);

        let mut record = EpochRecord {
            epoch,
            loss,
            n_p_plus: bank.p_plus.len(),
            n_iter_plus: 0,
            n_iter_minus: bank.p_iter_minus.len(),
            eval: None,
        };

        if epoch % tc.refresh_period == 0 {
            round += 1;
            if let Some(dir) = &options.checkpoint_dir {
                std::fs::create_dir_all(dir).map_err(|source| EchoError::Io {
                    path: dir.clone(),
                    source,
                })?;
                crate::encoder::save_checkpoint(
                    dir.join(format!("checkpoint_round_{round}.bin")),
                    cfg,
                    &params,
                )?;
            }
            let (f1, f2) = infer(&params, &x1, &x2)?;
            let s_rel = rel_similarity(&f1, &f2, candidates)?;
            let combined = combine_similarity(&s_rel, s_attr, s_attr_value, &options.weights)?;
            let s_used = if options.bidirectional_softmax {
                bidirectional_softmax(&combined)
            } else {
                combined
            };
            let result = abgs_from_combined(&s_used);

            let quality = match aux.truth {
                Some(truth) => {
                    Some(bootstrap_quality(&result.p_iter_plus, &result.p_iter_minus, truth)?)
                }
                None => None,
            };
            let quality_local_only = match aux.truth {
                Some(truth) => {
                    Some(bootstrap_quality(&result.p_local_plus, &result.p_local_minus, truth)?)
                }
                None => None,
            };
            history.bootstraps.push(BootstrapRecord {
                round,
                epoch,
                n_iter_plus: result.p_iter_plus.len(),
                n_iter_minus: result.p_iter_minus.len(),
                n_global: result.p_global.len(),
                quality,
                quality_local_only,
            });

            if options.use_abgs {
                bank.p_plus.extend(result.p_iter_plus.iter().copied());
                bank.p_iter_minus = result
                    .p_iter_minus
                    .difference(&bank.p_plus)
                    .copied()
                    .collect();
            }
            record.n_iter_plus = result.p_iter_plus.len();
            record.n_p_plus = bank.p_plus.len();
            record.n_iter_minus = bank.p_iter_minus.len();

            // refresh corruption records against the current embeddings
            let samp_cand = sampling_candidates(&bank.p_plus, candidates);
            let s_samp = rel_similarity(&f1, &f2, &samp_cand)?;
            bank.p_minus = sample_negatives(&bank.p_plus, &s_samp, tc.neg_per_pos)?;

            if let Some(pairs) = aux.eval_pairs {
                record.eval = Some(eval_report(&s_used, pairs, EvalDirection::LeftToRight)?);
            }
        }
        history.epochs.push(record);
    }

    let (final1, final2) = infer(&params, &x1, &x2)?;
    Ok(TrainOutput {
        params,
        x1,
        x2,
        final1,
        final2,
        history,
        bank,
    })
}
