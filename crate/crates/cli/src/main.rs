//! Command line driver for the dual-stream fusion workspace.
//!
//! One binary, seven subcommands: generate data, train, evaluate, run the
//! modality-dropout sweep, run the ablation grid, export embeddings, and
//! check gradients. Every command reads the same run configuration (see
//! [`config::RunConfig`]) and writes its artifacts into the configured
//! output directory, echoing the resolved settings alongside them. Runs
//! with identical settings produce byte-identical outputs.
//!
//! Exit codes: 0 on success, 1 for configuration errors, 2 for data and IO
//! errors, 3 for numerical failures.

mod config;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use dsrsd_core::checkpoint::{self, LoadedCheckpoint};
use dsrsd_core::data::csv::export_dataset;
use dsrsd_core::data::split;
use dsrsd_core::error::{Error, Result};
use dsrsd_core::eval::ablation::{ablation_run, write_ablation_csv, AblationConfig};
use dsrsd_core::eval::diagnostics::diagnostics;
use dsrsd_core::eval::evaluate;
use dsrsd_core::eval::export::export_embeddings;
use dsrsd_core::eval::sweep::{dropout_sweep, write_sweep_csv};
use dsrsd_core::gradsuite;
use dsrsd_core::data::MultimodalDataset;
use dsrsd_core::model::{DsrsdModel, ModelConfig, ModelVariant};
use dsrsd_core::rng::{self, tag};
use dsrsd_core::trainer::fit;

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "dsrsd",
    version,
    about = "Train and evaluate dual-stream residual fusion models",
    after_long_help = config::defaults_help()
)]
struct Cli {
    /// Run configuration file (JSON). Omitted fields keep their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one config key by dot path, e.g. --set train.base_lr=0.001.
    /// Values parse as JSON, falling back to strings. Repeatable.
    #[arg(long, global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Master seed. Wins over the config file, DSRSD_SEED, and --set.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory. Wins over the config file and --set.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write it as CSV files plus manifest.
    GenData,
    /// Train a model; writes model.ckpt, epochs.jsonl, and metrics.json.
    Train {
        /// Override the decorrelation penalty weight.
        #[arg(long, value_name = "W")]
        lambda_dec: Option<f64>,
        /// Override the orthogonality penalty weight.
        #[arg(long, value_name = "W")]
        lambda_orth: Option<f64>,
    },
    /// Evaluate a checkpoint on the configured dataset.
    Eval {
        /// Checkpoint file written by `train`.
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
    },
    /// Degrade one modality at a time and tabulate the metric drop.
    Sweep {
        /// Checkpoint file written by `train`.
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
    },
    /// Train every model variant over several seeds and tabulate metrics.
    Ablate,
    /// Write per-sample embeddings for a checkpoint as CSV.
    ExportEmbeddings {
        /// Checkpoint file written by `train`.
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
    },
    /// Check every analytic gradient against central differences.
    GradCheck,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let fatal = !matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            std::process::exit(if fatal { 1 } else { 0 });
        }
    };
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: &Cli) -> Result<()> {
    let mut run = resolve_config(cli)?;
    match &cli.command {
        Command::GenData => cmd_gen_data(&run),
        Command::Train { lambda_dec, lambda_orth } => {
            if let Some(w) = lambda_dec {
                run.train.weights.dec = *w;
            }
            if let Some(w) = lambda_orth {
                run.train.weights.orth = *w;
            }
            run.train.validate()?;
            cmd_train(&run)
        }
        Command::Eval { checkpoint } => cmd_eval(&run, checkpoint),
        Command::Sweep { checkpoint } => cmd_sweep(&run, checkpoint),
        Command::Ablate => cmd_ablate(&run),
        Command::ExportEmbeddings { checkpoint } => cmd_export(&run, checkpoint),
        Command::GradCheck => cmd_grad_check(&run),
    }
}

/// Merge defaults, config file, `DSRSD_SEED`, `--set` overrides, and the
/// dedicated flags, in that order, then validate the result.
fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut sets = Vec::new();
    if let Some(seed) = config::seed_from_env()? {
        sets.push(format!("seed={seed}"));
    }
    sets.extend(cli.set.iter().cloned());
    let mut run = config::load_config(cli.config.as_deref(), &sets)?;
    if let Some(seed) = cli.seed {
        run.seed = seed;
    }
    if let Some(out) = &cli.out {
        run.output_dir = out.clone();
    }
    run.model.validate()?;
    run.train.validate()?;
    run.split.validate()?;
    Ok(run)
}

/// The model's declared input widths must match the data it runs on; a
/// mismatch would otherwise surface as a shape error deep in the forward
/// pass.
fn check_dims(model: &ModelConfig, dataset: &MultimodalDataset) -> Result<()> {
    if model.input_dim_a != dataset.dim_a() || model.input_dim_b != dataset.dim_b() {
        return Err(Error::config(format!(
            "model expects input dims ({}, {}) but the dataset has ({}, {}); \
             set model.input_dim_a and model.input_dim_b to match",
            model.input_dim_a,
            model.input_dim_b,
            dataset.dim_a(),
            dataset.dim_b()
        )));
    }
    Ok(())
}

fn load_trained(path: &Path) -> Result<LoadedCheckpoint> {
    let loaded = checkpoint::load(path)?;
    log::info!(
        "loaded {} ({} variant, config hash {})",
        path.display(),
        loaded.model.config.variant,
        &loaded.config_hash[..12.min(loaded.config_hash.len())]
    );
    Ok(loaded)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    std::fs::write(path, body + "\n").map_err(|e| Error::io(path.to_path_buf(), e))
}

fn prepare_dir(run: &RunConfig) -> Result<PathBuf> {
    let dir = run.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.clone(), e))?;
    run.echo(&dir)?;
    Ok(dir)
}

fn cmd_gen_data(run: &RunConfig) -> Result<()> {
    let dataset = run.data.synthetic.validate().and_then(|_| {
        dsrsd_core::data::synthetic::generate(&run.data.synthetic, run.seed)
    })?;
    let dir = prepare_dir(run)?;
    let manifest = export_dataset(&dir, &dataset)?;
    let positives = dataset.labels.iter().filter(|&&y| y == 1).count();
    println!("wrote {} samples to {}", dataset.len(), manifest.display());
    println!(
        "class balance: {positives} positive, {} negative",
        dataset.len() - positives
    );
    Ok(())
}

fn cmd_train(run: &RunConfig) -> Result<()> {
    let dataset = run.resolve_dataset()?;
    check_dims(&run.model, &dataset)?;
    let (train, val, test) = split(&dataset, run.split, run.seed)?;
    log::info!(
        "split {} samples into {}/{}/{}",
        dataset.len(),
        train.len(),
        val.len(),
        test.len()
    );
    let mut model = DsrsdModel::new(run.model.clone(), &mut rng::stream(run.seed, tag::INIT))?;
    let result = fit(&mut model, &train, &val, &run.train, run.seed, |r| {
        log::info!(
            "epoch {:>3}  total {:.4}  task {:.4}  val auc {:.4}  lr {:.3e}",
            r.epoch,
            r.losses.total,
            r.losses.task,
            r.val.auc,
            r.lr
        );
    })?;

    let dir = prepare_dir(run)?;
    let mut log_lines = String::new();
    for record in &result.records {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::config(format!("epoch record serialization: {e}")))?;
        log_lines.push_str(&line);
        log_lines.push('\n');
    }
    let log_path = dir.join("epochs.jsonl");
    std::fs::write(&log_path, log_lines).map_err(|e| Error::io(log_path, e))?;
    checkpoint::save(&model, &run.content_hash()?, &dir.join("model.ckpt"))?;
    let metrics = evaluate(&model, &test)?;
    write_json(&dir.join("metrics.json"), &metrics)?;

    println!(
        "trained {} epochs; best epoch {} with validation AUC {:.4}",
        result.records.len(),
        result.best_epoch,
        result.best_val_auc
    );
    println!(
        "test: auc {:.4}  acc {:.4}  f1 {:.4}",
        metrics.auc, metrics.acc, metrics.f1
    );
    Ok(())
}

fn cmd_eval(run: &RunConfig, ckpt: &Path) -> Result<()> {
    let loaded = load_trained(ckpt)?;
    if loaded.config_hash != run.content_hash()? {
        log::warn!("checkpoint was trained under a different configuration");
    }
    let dataset = run.resolve_dataset()?;
    check_dims(&loaded.model.config, &dataset)?;
    let metrics = evaluate(&loaded.model, &dataset)?;
    let dir = prepare_dir(run)?;
    write_json(&dir.join("metrics.json"), &metrics)?;
    println!(
        "eval over {} samples: auc {:.4}  acc {:.4}  f1 {:.4}",
        dataset.len(),
        metrics.auc,
        metrics.acc,
        metrics.f1
    );
    if loaded.model.config.variant == ModelVariant::Full {
        let report = diagnostics(&loaded.model, &dataset)?;
        write_json(&dir.join("diagnostics.json"), &report)?;
        println!(
            "diagnostics: offdiag energy {:.6}  orth residual {:.6}  gate entropy {:.4}",
            report.offdiag_energy, report.orth_residual, report.gate_entropy
        );
    }
    Ok(())
}

fn cmd_sweep(run: &RunConfig, ckpt: &Path) -> Result<()> {
    let loaded = load_trained(ckpt)?;
    let dataset = run.resolve_dataset()?;
    check_dims(&loaded.model.config, &dataset)?;
    let table = dropout_sweep(
        &loaded.model,
        &dataset,
        &run.eval.sweep_rates,
        &run.eval.sweep_modalities,
        &run.eval.sweep_seeds,
    )?;
    let dir = prepare_dir(run)?;
    write_sweep_csv(&table, &dir.join("sweep.csv"))?;
    println!("baseline auc {:.4}", table.baseline.auc);
    for s in &table.summaries {
        println!(
            "modality {}  p {:.2}: mean auc {:.4}  mean drop {:.4}",
            s.modality, s.p, s.mean.auc, s.mean_drop.auc
        );
    }
    Ok(())
}

fn cmd_ablate(run: &RunConfig) -> Result<()> {
    let dataset = run.resolve_dataset()?;
    check_dims(&run.model, &dataset)?;
    let ab = AblationConfig {
        model: run.model.clone(),
        train: run.train.clone(),
        split: run.split,
    };
    let outcome = ablation_run(&ab, &dataset, &run.eval.ablation_seeds)?;
    let dir = prepare_dir(run)?;
    write_ablation_csv(&outcome.table, &dir.join("ablation.csv"))?;
    for s in &outcome.table.summaries {
        println!(
            "{:>8}: auc {:.4} (std {:.4})  acc {:.4}  f1 {:.4}",
            s.variant, s.mean.auc, s.std.auc, s.mean.acc, s.mean.f1
        );
    }
    Ok(())
}

fn cmd_export(run: &RunConfig, ckpt: &Path) -> Result<()> {
    let loaded = load_trained(ckpt)?;
    let dataset = run.resolve_dataset()?;
    check_dims(&loaded.model.config, &dataset)?;
    let dir = prepare_dir(run)?;
    let path = dir.join("embeddings.csv");
    export_embeddings(&loaded.model, &dataset, run.eval.export, &path)?;
    println!("wrote embeddings for {} samples to {}", dataset.len(), path.display());
    Ok(())
}

fn cmd_grad_check(run: &RunConfig) -> Result<()> {
    let reports = gradsuite::run_full_suite(run.seed)?;
    let mut failures = 0usize;
    for r in &reports {
        let status = if r.passed() { "pass" } else { "FAIL" };
        println!(
            "{status}  {:<24}  max err {:.3e} over {} coords",
            r.name, r.max_error, r.num_coords
        );
        if !r.passed() {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(Error::numerical(format!(
            "{failures} gradient case(s) exceeded tolerance"
        )));
    }
    println!("all {} gradient cases within tolerance", reports.len());
    Ok(())
}
