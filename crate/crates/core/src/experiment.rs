//! Experiment orchestration: flat key-value run configuration, the full
//! load -> train -> evaluate pipeline, and CSV artifact emission.

use ndarray::Array2;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::alignment::{bidirectional_softmax, global_align, rel_similarity};
use crate::attr::{
    attr_similarity, attr_value_similarity, combine_similarity, match_attributes,
    write_alignment_report, AttributeAlignment, NameNormalizer, SimilarityWeights,
};
use crate::encoder::{save_checkpoint, Activation, EncoderConfig, ModelParams};
use crate::error::{EchoError, Result};
use crate::eval::{eval_report, matching_hits_at_1, EvalDirection};
use crate::kg::{
    load_dataset, load_embeddings, save_embeddings, split_seeds, synth_kg_pair, CandidateSets,
    KnowledgeGraph, PairSet, SeedPairs, SYNTH_EMB_DIM,
};
use crate::sim::SimilarityMatrix;
use crate::training::{train_loop, TrainAux, TrainHistory, TrainOptions, TrainingConfig};

/// Fully resolved run configuration. Every field has a key of the same name
/// in the flat `key = value` config format.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // data
    pub dataset_dir: Option<PathBuf>,
    pub emb_file_1: Option<PathBuf>,
    pub emb_file_2: Option<PathBuf>,
    pub normalizer_file: Option<PathBuf>,
    pub synth: bool,
    pub synth_entities: usize,
    pub synth_relations: usize,
    pub synth_density: f64,
    pub synth_attr_vocab: usize,
    pub synth_noise: f64,
    pub train_fraction: f64,
    // encoder
    pub d_e: usize,
    pub d_r: usize,
    pub dropout: f64,
    pub gcn_layers: usize,
    pub gat_layers: usize,
    pub activation: String,
    pub use_pan: bool,
    pub use_en: bool,
    pub use_can: bool,
    // training
    pub learning_rate: f64,
    pub margin: f64,
    pub neg_k: usize,
    pub refresh_period: usize,
    pub max_epochs: usize,
    pub rng_seed: u64,
    pub freeze_embeddings: bool,
    // bootstrap
    pub use_abgs: bool,
    pub global_align: bool,
    pub bidirectional_softmax: bool,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub attr_match_threshold: f64,
    // evaluation and output
    pub direction: String,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_dir: None,
            emb_file_1: None,
            emb_file_2: None,
            normalizer_file: None,
            synth: false,
            synth_entities: 200,
            synth_relations: 5,
            synth_density: 3.0,
            synth_attr_vocab: 8,
            synth_noise: 0.1,
            train_fraction: 0.3,
            d_e: 300,
            d_r: 100,
            dropout: 0.05,
            gcn_layers: 1,
            gat_layers: 2,
            activation: "relu".into(),
            use_pan: true,
            use_en: true,
            use_can: true,
            learning_rate: 0.001,
            margin: 3.0,
            neg_k: 5,
            refresh_period: 10,
            max_epochs: 100,
            rng_seed: 0,
            freeze_embeddings: false,
            use_abgs: true,
            global_align: true,
            bidirectional_softmax: false,
            alpha1: 0.1,
            alpha2: 0.5,
            alpha3: 0.4,
            attr_match_threshold: 0.85,
            direction: "left_to_right".into(),
            out_dir: PathBuf::from("echoea_run"),
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

impl RunConfig {
    /// Applies one `key = value` assignment; returns false for unknown keys
    /// or unparseable values.
    fn apply(&mut self, key: &str, value: &str) -> bool {
        macro_rules! num {
            ($field:ident) => {
                match value.parse() {
                    Ok(v) => {
                        self.$field = v;
                        true
                    }
                    Err(_) => false,
                }
            };
        }
        macro_rules! flag {
            ($field:ident) => {
                match parse_bool(value) {
                    Some(v) => {
                        self.$field = v;
                        true
                    }
                    None => false,
                }
            };
        }
        match key {
            "dataset_dir" => {
                self.dataset_dir = Some(PathBuf::from(value));
                true
            }
            "emb_file_1" => {
                self.emb_file_1 = Some(PathBuf::from(value));
                true
            }
            "emb_file_2" => {
                self.emb_file_2 = Some(PathBuf::from(value));
                true
            }
            "normalizer_file" => {
                self.normalizer_file = Some(PathBuf::from(value));
                true
            }
            "synth" => flag!(synth),
            "synth_entities" => num!(synth_entities),
            "synth_relations" => num!(synth_relations),
            "synth_density" => num!(synth_density),
            "synth_attr_vocab" => num!(synth_attr_vocab),
            "synth_noise" => num!(synth_noise),
            "train_fraction" => num!(train_fraction),
            "d_e" => num!(d_e),
            "d_r" => num!(d_r),
            "dropout" => num!(dropout),
            "gcn_layers" => num!(gcn_layers),
            "gat_layers" => num!(gat_layers),
            "activation" => {
                self.activation = value.to_string();
                true
            }
            "use_pan" => flag!(use_pan),
            "use_en" => flag!(use_en),
            "use_can" => flag!(use_can),
            "learning_rate" => num!(learning_rate),
            "margin" => num!(margin),
            "neg_k" => num!(neg_k),
            "refresh_period" => num!(refresh_period),
            "max_epochs" => num!(max_epochs),
            "rng_seed" => num!(rng_seed),
            "freeze_embeddings" => flag!(freeze_embeddings),
            "use_abgs" => flag!(use_abgs),
            "global_align" => flag!(global_align),
            "bidirectional_softmax" => flag!(bidirectional_softmax),
            "alpha1" => num!(alpha1),
            "alpha2" => num!(alpha2),
            "alpha3" => num!(alpha3),
            "attr_match_threshold" => num!(attr_match_threshold),
            "direction" => {
                self.direction = value.to_string();
                true
            }
            "out_dir" => {
                self.out_dir = PathBuf::from(value);
                true
            }
            _ => false,
        }
    }

    /// Parses `key = value` lines (# starts a comment) on top of defaults;
    /// all offending keys are reported together.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut offenders = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    let (k, v) = (k.trim(), v.trim());
                    if !cfg.apply(k, v) {
                        offenders.push(format!("{k} (line {})", ln + 1));
                    }
                }
                None => offenders.push(format!("malformed line {}: {raw:?}", ln + 1)),
            }
        }
        if !offenders.is_empty() {
            return Err(EchoError::Config(format!(
                "invalid configuration keys: {}",
                offenders.join(", ")
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(EchoError::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|source| EchoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Applies `key=value` override strings on top of this config.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        let mut offenders = Vec::new();
        for ov in overrides {
            match ov.split_once('=') {
                Some((k, v)) => {
                    if !self.apply(k.trim(), v.trim()) {
                        offenders.push(k.trim().to_string());
                    }
                }
                None => offenders.push(ov.clone()),
            }
        }
        if !offenders.is_empty() {
            return Err(EchoError::Config(format!(
                "invalid override keys: {}",
                offenders.join(", ")
            )));
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let mut offenders = Vec::new();
        if !self.synth && self.dataset_dir.is_none() {
            offenders.push("dataset_dir (required unless synth = true)".to_string());
        }
        if self.synth && self.d_e != SYNTH_EMB_DIM {
            offenders.push(format!("d_e (synthetic embeddings are {SYNTH_EMB_DIM}-wide)"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            offenders.push("train_fraction".to_string());
        }
        if Activation::parse(&self.activation).is_err() {
            offenders.push("activation".to_string());
        }
        if EvalDirection::parse(&self.direction).is_err() {
            offenders.push("direction".to_string());
        }
        let enc = self.encoder_config();
        if enc.and_then(|e| e.validate().map(|_| ())).is_err() {
            offenders.push("d_e/d_r/dropout".to_string());
        }
        if self.training_config().validate().is_err() {
            offenders.push("learning_rate/margin/neg_k/refresh_period".to_string());
        }
        if self.weights().validate().is_err() {
            offenders.push("alpha1/alpha2/alpha3".to_string());
        }
        if !(0.0..=1.0).contains(&self.attr_match_threshold) {
            offenders.push("attr_match_threshold".to_string());
        }
        if offenders.is_empty() {
            Ok(())
        } else {
            Err(EchoError::Config(format!(
                "invalid configuration keys: {}",
                offenders.join(", ")
            )))
        }
    }

    pub fn encoder_config(&self) -> Result<EncoderConfig> {
        Ok(EncoderConfig {
            d_e: self.d_e,
            d_r: self.d_r,
            dropout_rate: self.dropout,
            pan_gcn_layers: self.gcn_layers,
            pan_gat_layers: self.gat_layers,
            activation: Activation::parse(&self.activation)?,
            use_pan: self.use_pan,
            use_en: self.use_en,
            use_can: self.use_can,
        })
    }

    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            learning_rate: self.learning_rate,
            margin: self.margin,
            neg_per_pos: self.neg_k,
            refresh_period: self.refresh_period,
            max_epochs: self.max_epochs,
            rng_seed: self.rng_seed,
            freeze_embeddings: self.freeze_embeddings,
        }
    }

    pub fn weights(&self) -> SimilarityWeights {
        SimilarityWeights {
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            alpha3: self.alpha3,
        }
    }

    /// Canonical text form (sorted keys), echoed into the run directory.
    pub fn to_text(&self) -> String {
        let mut pairs: BTreeMap<&str, String> = BTreeMap::new();
        if let Some(p) = &self.dataset_dir {
            pairs.insert("dataset_dir", p.display().to_string());
        }
        if let Some(p) = &self.emb_file_1 {
            pairs.insert("emb_file_1", p.display().to_string());
        }
        if let Some(p) = &self.emb_file_2 {
            pairs.insert("emb_file_2", p.display().to_string());
        }
        if let Some(p) = &self.normalizer_file {
            pairs.insert("normalizer_file", p.display().to_string());
        }
        pairs.insert("synth", self.synth.to_string());
        pairs.insert("synth_entities", self.synth_entities.to_string());
        pairs.insert("synth_relations", self.synth_relations.to_string());
        pairs.insert("synth_density", self.synth_density.to_string());
        pairs.insert("synth_attr_vocab", self.synth_attr_vocab.to_string());
        pairs.insert("synth_noise", self.synth_noise.to_string());
        pairs.insert("train_fraction", self.train_fraction.to_string());
        pairs.insert("d_e", self.d_e.to_string());
        pairs.insert("d_r", self.d_r.to_string());
        pairs.insert("dropout", self.dropout.to_string());
        pairs.insert("gcn_layers", self.gcn_layers.to_string());
        pairs.insert("gat_layers", self.gat_layers.to_string());
        pairs.insert("activation", self.activation.clone());
        pairs.insert("use_pan", self.use_pan.to_string());
        pairs.insert("use_en", self.use_en.to_string());
        pairs.insert("use_can", self.use_can.to_string());
        pairs.insert("learning_rate", self.learning_rate.to_string());
        pairs.insert("margin", self.margin.to_string());
        pairs.insert("neg_k", self.neg_k.to_string());
        pairs.insert("refresh_period", self.refresh_period.to_string());
        pairs.insert("max_epochs", self.max_epochs.to_string());
        pairs.insert("rng_seed", self.rng_seed.to_string());
        pairs.insert("freeze_embeddings", self.freeze_embeddings.to_string());
        pairs.insert("use_abgs", self.use_abgs.to_string());
        pairs.insert("global_align", self.global_align.to_string());
        pairs.insert("bidirectional_softmax", self.bidirectional_softmax.to_string());
        pairs.insert("alpha1", self.alpha1.to_string());
        pairs.insert("alpha2", self.alpha2.to_string());
        pairs.insert("alpha3", self.alpha3.to_string());
        pairs.insert("attr_match_threshold", self.attr_match_threshold.to_string());
        pairs.insert("direction", self.direction.clone());
        pairs.insert("out_dir", self.out_dir.display().to_string());
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// The loaded data of one run.
pub struct RunData {
    pub kg1: KnowledgeGraph,
    pub kg2: KnowledgeGraph,
    pub seeds: SeedPairs,
    pub x1: Array2<f64>,
    pub x2: Array2<f64>,
}

/// Loads or generates the data a config describes.
pub fn prepare_data(cfg: &RunConfig) -> Result<RunData> {
    if cfg.synth {
        let pair = synth_kg_pair(
            cfg.synth_entities,
            cfg.synth_relations,
            cfg.synth_density,
            cfg.synth_attr_vocab,
            cfg.synth_noise,
            cfg.rng_seed,
        )?;
        return Ok(RunData {
            kg1: pair.kg1,
            kg2: pair.kg2,
            seeds: pair.truth,
            x1: pair.emb1,
            x2: pair.emb2,
        });
    }
    let dir = cfg.dataset_dir.as_ref().expect("validated");
    let (kg1, kg2, seeds) = load_dataset(dir)?;
    let f1 = cfg.emb_file_1.clone().unwrap_or_else(|| dir.join("ent_emb_1"));
    let f2 = cfg.emb_file_2.clone().unwrap_or_else(|| dir.join("ent_emb_2"));
    let x1 = load_embeddings(&f1, Some(kg1.num_entities()))?;
    let x2 = load_embeddings(&f2, Some(kg2.num_entities()))?;
    if x1.ncols() != cfg.d_e || x2.ncols() != cfg.d_e {
        return Err(EchoError::Config(format!(
            "embedding width {} does not match d_e = {}",
            x1.ncols(),
            cfg.d_e
        )));
    }
    Ok(RunData {
        kg1,
        kg2,
        seeds,
        x1,
        x2,
    })
}

/// Attribute alignment plus the two similarity matrices, when both sides
/// carry attribute triples.
pub struct AttrPipeline {
    pub alignment: AttributeAlignment,
    pub s_attr: SimilarityMatrix,
    pub s_attr_value: SimilarityMatrix,
}

pub fn build_attr_pipeline(
    cfg: &RunConfig,
    kg1: &KnowledgeGraph,
    kg2: &KnowledgeGraph,
    candidates: &CandidateSets,
) -> Result<Option<AttrPipeline>> {
    if kg1.attr_triples.is_empty() || kg2.attr_triples.is_empty() {
        return Ok(None);
    }
    let normalizer = match &cfg.normalizer_file {
        Some(p) => NameNormalizer::from_file(p)?,
        None => NameNormalizer::default(),
    };
    let names1: Vec<String> = kg1.attribute_names.iter().map(|n| normalizer.apply(n)).collect();
    let names2: Vec<String> = kg2.attribute_names.iter().map(|n| normalizer.apply(n)).collect();
    let alignment = match_attributes(&names1, &names2, cfg.attr_match_threshold);
    let s_attr = attr_similarity(kg1, kg2, &alignment, candidates)?;
    let s_attr_value = attr_value_similarity(kg1, kg2, &alignment, candidates)?;
    Ok(Some(AttrPipeline {
        alignment,
        s_attr,
        s_attr_value,
    }))
}

/// One headline metric row: (variant, direction, hits@1, hits@10, mrr);
/// one-to-one variants report hits@1 only.
pub type EvalRow = (String, String, f64, Option<f64>, Option<f64>);

/// Paths of everything a run writes.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub config: PathBuf,
    pub history_csv: PathBuf,
    pub bootstrap_csv: PathBuf,
    pub eval_csv: PathBuf,
    pub loss_plot_csv: PathBuf,
    pub metrics_plot_csv: PathBuf,
    pub checkpoint: PathBuf,
    pub attr_report_csv: Option<PathBuf>,
    pub trained_emb_1: PathBuf,
    pub trained_emb_2: PathBuf,
    pub final_emb_1: PathBuf,
    pub final_emb_2: PathBuf,
    /// Headline metric rows.
    pub eval_rows: Vec<EvalRow>,
    /// One-line dataset and split description.
    pub summary: String,
}

fn describe(kg: &KnowledgeGraph, tag: &str) -> String {
    format!(
        "{tag}: {} entities, {} relations, {} rel triples, {} attr triples",
        kg.num_entities(),
        kg.num_relations(),
        kg.rel_triples.len(),
        kg.attr_triples.len()
    )
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|source| EchoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn history_csv(history: &TrainHistory) -> String {
    let mut out = String::from("epoch,loss,p_plus,p_iter_plus,p_iter_minus,hits1,hits10,mrr\n");
    for e in &history.epochs {
        let (h1, h10, m) = match &e.eval {
            Some(r) => (
                r.hits1.to_string(),
                r.hits10.to_string(),
                r.mrr.to_string(),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            e.epoch, e.loss, e.n_p_plus, e.n_iter_plus, e.n_iter_minus, h1, h10, m
        );
    }
    out
}

fn bootstrap_csv(history: &TrainHistory) -> String {
    let mut out = String::from(
        "round,epoch,p_iter_plus,p_iter_minus,p_global,r_u,r_p,r_n,local_r_u,local_r_p,local_r_n\n",
    );
    for b in &history.bootstraps {
        let q = b.quality;
        let l = b.quality_local_only;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            b.round,
            b.epoch,
            b.n_iter_plus,
            b.n_iter_minus,
            b.n_global,
            opt(q.map(|q| q.r_u)),
            opt(q.and_then(|q| q.r_p)),
            opt(q.and_then(|q| q.r_n)),
            opt(l.map(|q| q.r_u)),
            opt(l.and_then(|q| q.r_p)),
            opt(l.and_then(|q| q.r_n)),
        );
    }
    out
}

/// Runs the full pipeline a config describes and writes every artifact.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let enc = cfg.encoder_config()?;
    let data = prepare_data(cfg)?;

    let (train, test) = split_seeds(&data.seeds, cfg.train_fraction, cfg.rng_seed)?;
    let candidates = CandidateSets::from_test_seeds(&test);
    candidates.check_disjoint(&train)?;

    let attr_pipeline = build_attr_pipeline(cfg, &data.kg1, &data.kg2, &candidates)?;

    let options = TrainOptions {
        encoder: enc.clone(),
        training: cfg.training_config(),
        weights: cfg.weights(),
        use_abgs: cfg.use_abgs,
        bidirectional_softmax: cfg.bidirectional_softmax,
        checkpoint_dir: Some(cfg.out_dir.clone()),
    };
    let aux = TrainAux {
        s_attr: attr_pipeline.as_ref().map(|p| &p.s_attr),
        s_attr_value: attr_pipeline.as_ref().map(|p| &p.s_attr_value),
        eval_pairs: Some(&test),
        truth: Some(&test.pairs),
    };
    let out = train_loop(
        &data.kg1,
        &data.kg2,
        &train,
        &candidates,
        data.x1.clone(),
        data.x2.clone(),
        &options,
        &aux,
    )?;

    // final evaluation on the configured similarity
    let s_rel = rel_similarity(&out.final1, &out.final2, &candidates)?;
    let combined = match &attr_pipeline {
        Some(p) => combine_similarity(&s_rel, &p.s_attr, &p.s_attr_value, &cfg.weights())?,
        None => s_rel.clone(),
    };
    let s_eval = if cfg.bidirectional_softmax {
        bidirectional_softmax(&combined)
    } else {
        combined
    };
    let direction = EvalDirection::parse(&cfg.direction)?;
    let local_report = eval_report(&s_eval, &test, direction)?;
    let mut eval_rows: Vec<EvalRow> = vec![(
        "local".into(),
        direction.name().into(),
        local_report.hits1,
        Some(local_report.hits10),
        Some(local_report.mrr),
    )];
    if cfg.global_align {
        let matching: PairSet = global_align(&s_eval);
        let hits1 = matching_hits_at_1(&matching, &test)?;
        // one-to-one alignment has a single headline number
        eval_rows.push(("global".into(), "left_to_right".into(), hits1, None, None));
    }

    // artifacts
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir.join("plots")).map_err(|source| EchoError::Io {
        path: dir.clone(),
        source,
    })?;
    let artifacts = RunArtifacts {
        out_dir: dir.clone(),
        config: dir.join("config.txt"),
        history_csv: dir.join("history.csv"),
        bootstrap_csv: dir.join("bootstrap.csv"),
        eval_csv: dir.join("eval.csv"),
        loss_plot_csv: dir.join("plots").join("loss.csv"),
        metrics_plot_csv: dir.join("plots").join("metrics.csv"),
        checkpoint: dir.join("checkpoint.bin"),
        attr_report_csv: attr_pipeline.as_ref().map(|_| dir.join("attr_alignment.csv")),
        trained_emb_1: dir.join("emb_trained_1"),
        trained_emb_2: dir.join("emb_trained_2"),
        final_emb_1: dir.join("emb_final_1"),
        final_emb_2: dir.join("emb_final_2"),
        eval_rows: eval_rows.clone(),
        summary: format!(
            "{}\n{}\nseeds: {} (train {} / test {})",
            describe(&data.kg1, "KG1"),
            describe(&data.kg2, "KG2"),
            data.seeds.len(),
            train.len(),
            test.len()
        ),
    };

    write_text(&artifacts.config, &cfg.to_text())?;
    write_text(&artifacts.history_csv, &history_csv(&out.history))?;
    write_text(&artifacts.bootstrap_csv, &bootstrap_csv(&out.history))?;

    let mut eval_text = String::from("variant,direction,hits1,hits10,mrr\n");
    for (variant, dir_name, h1, h10, m) in &eval_rows {
        let _ = writeln!(eval_text, "{variant},{dir_name},{h1},{},{}", opt(*h10), opt(*m));
    }
    write_text(&artifacts.eval_csv, &eval_text)?;

    let mut loss_plot = String::from("epoch,loss\n");
    for e in &out.history.epochs {
        let _ = writeln!(loss_plot, "{},{}", e.epoch, e.loss);
    }
    write_text(&artifacts.loss_plot_csv, &loss_plot)?;

    let mut metrics_plot = String::from("epoch,hits1,hits10,mrr\n");
    for e in &out.history.epochs {
        if let Some(r) = &e.eval {
            let _ = writeln!(metrics_plot, "{},{},{},{}", e.epoch, r.hits1, r.hits10, r.mrr);
        }
    }
    write_text(&artifacts.metrics_plot_csv, &metrics_plot)?;

    save_checkpoint(&artifacts.checkpoint, &enc, &out.params)?;
    if let (Some(p), Some(report)) = (&attr_pipeline, &artifacts.attr_report_csv) {
        write_alignment_report(report, &data.kg1, &data.kg2, &p.alignment)?;
    }
    save_embeddings(&artifacts.trained_emb_1, &out.x1)?;
    save_embeddings(&artifacts.trained_emb_2, &out.x2)?;
    save_embeddings(&artifacts.final_emb_1, &out.final1)?;
    save_embeddings(&artifacts.final_emb_2, &out.final2)?;

    Ok(artifacts)
}

/// Re-evaluates a finished run directory from its checkpoint and trained
/// embeddings; returns the eval rows and writes `eval_checkpoint.csv`.
pub fn evaluate_run(run_dir: impl AsRef<Path>) -> Result<Vec<EvalRow>> {
    use crate::encoder::{encode, load_checkpoint, GraphContext, Mode};
    use rand::SeedableRng;

    let run_dir = run_dir.as_ref();
    let cfg = RunConfig::from_file(run_dir.join("config.txt"))?;
    let (enc, params): (EncoderConfig, ModelParams) =
        load_checkpoint(run_dir.join("checkpoint.bin"))?;
    let data = prepare_data(&cfg)?;
    let x1 = load_embeddings(run_dir.join("emb_trained_1"), Some(data.kg1.num_entities()))?;
    let x2 = load_embeddings(run_dir.join("emb_trained_2"), Some(data.kg2.num_entities()))?;

    let (train, test) = split_seeds(&data.seeds, cfg.train_fraction, cfg.rng_seed)?;
    let candidates = CandidateSets::from_test_seeds(&test);
    candidates.check_disjoint(&train)?;

    let ctx1 = GraphContext::new(&data.kg1);
    let ctx2 = GraphContext::new(&data.kg2);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let f1 = encode(&ctx1, &x1, &params, &enc, Mode::Infer, &mut rng)?;
    let f2 = encode(&ctx2, &x2, &params, &enc, Mode::Infer, &mut rng)?;

    let s_rel = rel_similarity(&f1, &f2, &candidates)?;
    let attr_pipeline = build_attr_pipeline(&cfg, &data.kg1, &data.kg2, &candidates)?;
    let combined = match &attr_pipeline {
        Some(p) => combine_similarity(&s_rel, &p.s_attr, &p.s_attr_value, &cfg.weights())?,
        None => s_rel.clone(),
    };
    let s_eval = if cfg.bidirectional_softmax {
        bidirectional_softmax(&combined)
    } else {
        combined
    };

    let direction = EvalDirection::parse(&cfg.direction)?;
    let report = eval_report(&s_eval, &test, direction)?;
    let mut rows: Vec<EvalRow> = vec![(
        "local".into(),
        direction.name().into(),
        report.hits1,
        Some(report.hits10),
        Some(report.mrr),
    )];
    if cfg.global_align {
        let matching = global_align(&s_eval);
        rows.push((
            "global".into(),
            "left_to_right".into(),
            matching_hits_at_1(&matching, &test)?,
            None,
            None,
        ));
    }

    let mut text = String::from("variant,direction,hits1,hits10,mrr\n");
    for (variant, dir_name, h1, h10, m) in &rows {
        let _ = writeln!(text, "{variant},{dir_name},{h1},{},{}", opt(*h10), opt(*m));
    }
    write_text(&run_dir.join("eval_checkpoint.csv"), &text)?;
    Ok(rows)
}
