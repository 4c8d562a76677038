//! Command-line interface: train, evaluate, bootstrap-stats, synth, align.

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use echoea::alignment::bidirectional_softmax;
use echoea::error::{EchoError, Result};
use echoea::experiment::{build_attr_pipeline, evaluate_run, run_experiment, RunConfig};
use echoea::kg::{
    load_embeddings, save_dataset, save_embeddings, split_seeds, synth_kg_pair, CandidateSets,
};

#[derive(Parser)]
#[command(name = "echoea", version, about = "Cross-KG entity alignment with an echo encoder and global-filtered bootstrapping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline described by a config file and write artifacts
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Config overrides as key=value; may repeat
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Re-evaluate a finished run directory from its checkpoint
    Evaluate {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Summarize a bootstrap-round report CSV
    BootstrapStats {
        #[arg(long)]
        input: PathBuf,
    },
    /// Generate a synthetic aligned KG pair as a loadable dataset directory
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        entities: usize,
        #[arg(long, default_value_t = 5)]
        relations: usize,
        /// Relation triples per entity
        #[arg(long, default_value_t = 3.0)]
        density: f64,
        #[arg(long, default_value_t = 8)]
        attr_vocab: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// One-shot bootstrap sample generation from saved final embeddings
    Align {
        #[arg(long)]
        config: PathBuf,
        /// Final embedding file for KG1 (header `|E| d`)
        #[arg(long)]
        emb1: PathBuf,
        /// Final embedding file for KG2
        #[arg(long)]
        emb2: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_file(path)?;
    cfg.apply_overrides(overrides)?;
    Ok(cfg)
}

fn cmd_train(config: &Path, overrides: &[String]) -> Result<()> {
    let cfg = load_config(config, overrides)?;
    let artifacts = run_experiment(&cfg)?;
    println!("{}", artifacts.summary);
    for (variant, direction, h1, h10, mrr) in &artifacts.eval_rows {
        let h10 = h10.map(|v| format!(" hits@10={v:.4}")).unwrap_or_default();
        let mrr = mrr.map(|v| format!(" mrr={v:.4}")).unwrap_or_default();
        println!("eval[{variant}/{direction}]: hits@1={h1:.4}{h10}{mrr}");
    }
    println!("artifacts written to {}", artifacts.out_dir.display());
    Ok(())
}

fn cmd_evaluate(run_dir: &Path) -> Result<()> {
    let rows = evaluate_run(run_dir)?;
    for (variant, direction, h1, h10, mrr) in rows {
        let h10 = h10.map(|v| format!(" hits@10={v:.4}")).unwrap_or_default();
        let mrr = mrr.map(|v| format!(" mrr={v:.4}")).unwrap_or_default();
        println!("eval[{variant}/{direction}]: hits@1={h1:.4}{h10}{mrr}");
    }
    println!("wrote {}", run_dir.join("eval_checkpoint.csv").display());
    Ok(())
}

fn mean_of(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn cmd_bootstrap_stats(input: &Path) -> Result<()> {
    if !input.is_file() {
        return Err(EchoError::MissingFile(input.to_path_buf()));
    }
    let text = std::fs::read_to_string(input).map_err(|source| EchoError::Io {
        path: input.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| EchoError::Parse {
        file: input.to_path_buf(),
        line: 1,
        message: "empty report".into(),
    })?;
    let columns: Vec<&str> = header.split(',').collect();
    let col = |name: &str| columns.iter().position(|&c| c == name);
    let (ru_c, rp_c, rn_c) = (col("r_u"), col("r_p"), col("r_n"));

    let mut rounds = 0usize;
    let mut total_plus = 0u64;
    let mut total_minus = 0u64;
    let (mut rus, mut rps, mut rns) = (Vec::new(), Vec::new(), Vec::new());
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 5 {
            return Err(EchoError::Parse {
                file: input.to_path_buf(),
                line: ln + 2,
                message: "expected at least 5 columns".into(),
            });
        }
        rounds += 1;
        total_plus += fields[2].parse::<u64>().unwrap_or(0);
        total_minus += fields[3].parse::<u64>().unwrap_or(0);
        let push = |idx: Option<usize>, store: &mut Vec<f64>| {
            if let Some(i) = idx {
                if let Some(f) = fields.get(i) {
                    if let Ok(v) = f.parse::<f64>() {
                        store.push(v);
                    }
                }
            }
        };
        push(ru_c, &mut rus);
        push(rp_c, &mut rps);
        push(rn_c, &mut rns);
    }
    println!("rounds: {rounds}");
    println!("total iterative positives: {total_plus}");
    println!("total iterative negatives: {total_minus}");
    for (name, values) in [("r_u", rus), ("r_p", rps), ("r_n", rns)] {
        match mean_of(&values) {
            Some(m) => println!("mean {name}: {m:.6} over {} rounds", values.len()),
            None => println!("mean {name}: n/a"),
        }
    }
    Ok(())
}

fn cmd_synth(
    out: &Path,
    entities: usize,
    relations: usize,
    density: f64,
    attr_vocab: usize,
    noise: f64,
    seed: u64,
) -> Result<()> {
    let pair = synth_kg_pair(entities, relations, density, attr_vocab, noise, seed)?;
    save_dataset(out, &pair.kg1, &pair.kg2, &pair.truth)?;
    save_embeddings(out.join("ent_emb_1"), &pair.emb1)?;
    save_embeddings(out.join("ent_emb_2"), &pair.emb2)?;
    println!(
        "KG1: {} entities, {} relations, {} rel triples, {} attr triples",
        pair.kg1.num_entities(),
        pair.kg1.num_relations(),
        pair.kg1.rel_triples.len(),
        pair.kg1.attr_triples.len()
    );
    println!(
        "KG2: {} entities, {} relations, {} rel triples, {} attr triples",
        pair.kg2.num_entities(),
        pair.kg2.num_relations(),
        pair.kg2.rel_triples.len(),
        pair.kg2.attr_triples.len()
    );
    println!("ground truth pairs: {}", pair.truth.len());
    println!("dataset written to {}", out.display());
    Ok(())
}

fn cmd_align(config: &Path, emb1: &Path, emb2: &Path, out: &Path, overrides: &[String]) -> Result<()> {
    use echoea::alignment::{abgs_from_combined, rel_similarity};
    use echoea::attr::combine_similarity;
    use echoea::experiment::prepare_data;

    let cfg = load_config(config, overrides)?;
    let data = prepare_data(&cfg)?;
    let x1 = load_embeddings(emb1, Some(data.kg1.num_entities()))?;
    let x2 = load_embeddings(emb2, Some(data.kg2.num_entities()))?;

    let (train, test) = split_seeds(&data.seeds, cfg.train_fraction, cfg.rng_seed)?;
    let candidates = CandidateSets::from_test_seeds(&test);
    candidates.check_disjoint(&train)?;

    let s_rel = rel_similarity(&x1, &x2, &candidates)?;
    let attr_pipeline = build_attr_pipeline(&cfg, &data.kg1, &data.kg2, &candidates)?;
    let combined = match &attr_pipeline {
        Some(p) => combine_similarity(&s_rel, &p.s_attr, &p.s_attr_value, &cfg.weights())?,
        None => s_rel.clone(),
    };
    let s = if cfg.bidirectional_softmax {
        bidirectional_softmax(&combined)
    } else {
        combined
    };
    let result = abgs_from_combined(&s);

    std::fs::create_dir_all(out).map_err(|source| EchoError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let mut pairs_csv = String::from("set,left,right\n");
    for (name, set) in [
        ("local_plus", &result.p_local_plus),
        ("local_minus", &result.p_local_minus),
        ("global", &result.p_global),
        ("iter_plus", &result.p_iter_plus),
        ("iter_minus", &result.p_iter_minus),
    ] {
        for &(a, b) in set.iter() {
            pairs_csv.push_str(&format!("{name},{a},{b}\n"));
        }
    }
    let pairs_path = out.join("alignment_pairs.csv");
    std::fs::write(&pairs_path, pairs_csv).map_err(|source| EchoError::Io {
        path: pairs_path.clone(),
        source,
    })?;

    let report_path = out.join("bootstrap_round.csv");
    let report = format!(
        "round,p_iter_plus,p_iter_minus,p_global\n1,{},{},{}\n",
        result.p_iter_plus.len(),
        result.p_iter_minus.len(),
        result.p_global.len()
    );
    std::fs::write(&report_path, report).map_err(|source| EchoError::Io {
        path: report_path.clone(),
        source,
    })?;

    println!(
        "iter+: {}  iter-: {}  global: {}",
        result.p_iter_plus.len(),
        result.p_iter_minus.len(),
        result.p_global.len()
    );
    println!("wrote {} and {}", pairs_path.display(), report_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train { config, overrides } => cmd_train(config, overrides),
        Command::Evaluate { run_dir } => cmd_evaluate(run_dir),
        Command::BootstrapStats { input } => cmd_bootstrap_stats(input),
        Command::Synth {
            out,
            entities,
            relations,
            density,
            attr_vocab,
            noise,
            seed,
        } => cmd_synth(out, *entities, *relations, *density, *attr_vocab, *noise, *seed),
        Command::Align {
            config,
            emb1,
            emb2,
            out,
            overrides,
        } => cmd_align(config, emb1, emb2, out, overrides),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
