use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use vep_core::config::load_config;
use vep_core::dataset::{generate_synthetic, load_csv, load_features, write_csv, SyntheticKind};
use vep_core::engine::{predict_all, train, TrainConfig};
use vep_core::linreg::equivalence_report;
use vep_core::metrics::compute_metrics;
use vep_core::model_io::{load_model, save_model};
use vep_core::moments::NetworkShape;

/// Sparse Bayesian binary classifiers trained by variational expectation propagation.
#[derive(Parser)]
#[command(name = "vep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset and a `<out>.meta.json` description.
    Generate(GenerateArgs),
    /// Fit a network and save the posterior.
    Train(TrainArgs),
    /// Write one predictive probability per input row.
    Predict(PredictArgs),
    /// Print accuracy, log loss and Brier score for a labelled file.
    Evaluate(EvaluateArgs),
    /// Check the two linear-regression update routes against each other.
    Equivalence(EquivalenceArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// separable, sparse or noise
    #[arg(long)]
    kind: SyntheticKind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Layer widths from input to output, e.g. 20,8,1
    #[arg(long, value_delimiter = ',', required = true)]
    layers: Vec<usize>,
    /// Drop the bias input from every layer.
    #[arg(long)]
    no_bias: bool,
    /// key = value settings; omitted keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the per-sweep training report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct EquivalenceArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn generate(args: GenerateArgs) -> Result<()> {
    let (data, meta) = generate_synthetic(args.kind, args.n, args.d, args.seed)?;
    write_csv(&args.out, &data)?;
    write_text(&meta_path(&args.out), &(serde_json::to_string_pretty(&meta)? + "\n"))?;
    eprintln!("wrote {} rows x {} features to {}", data.len(), data.n_features(), args.out.display());
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let config = match &args.config {
        Some(path) => load_config(path).with_context(|| format!("config {}", path.display()))?,
        None => TrainConfig::default(),
    };
    let data = load_csv(&args.data).with_context(|| format!("{}", args.data.display()))?;
    if args.layers.first() != Some(&data.n_features()) {
        bail!(
            "--layers starts with {} but {} has {} feature columns",
            args.layers.first().copied().unwrap_or(0),
            args.data.display(),
            data.n_features()
        );
    }
    let shape = NetworkShape::new(args.layers, !args.no_bias)?;
    let (state, report) = train(&data, &shape, &config)?;
    save_model(&args.out, &state)?;
    let metrics = compute_metrics(&predict_all(&state, &data.features)?, &data.labels)?;
    if let Some(path) = &args.report {
        let doc = json!({
            "converged": report.converged,
            "n_sweeps": report.n_sweeps,
            "prior_skips": state.prior_skips,
            "likelihood_skips": state.likelihood_skips,
            "training_metrics": metrics,
            "sweeps": report.sweeps,
        });
        write_text(path, &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    }
    eprintln!(
        "{} after {} sweeps, training accuracy {:.4}",
        if report.converged { "converged" } else { "stopped without converging" },
        report.n_sweeps,
        metrics.accuracy
    );
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let state = load_model(&args.model)?;
    let table = load_features(&args.data).with_context(|| format!("{}", args.data.display()))?;
    let probs = predict_all(&state, &table.features)?;
    let mut text = String::from("p\n");
    for p in probs {
        text.push_str(&format!("{p}\n"));
    }
    write_text(&args.out, &text)
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let state = load_model(&args.model)?;
    let data = load_csv(&args.data).with_context(|| format!("{}", args.data.display()))?;
    let metrics = compute_metrics(&predict_all(&state, &data.features)?, &data.labels)?;
    println!("{}", metrics.to_json());
    eprint!("{}", metrics.table());
    Ok(())
}

fn equivalence(args: EquivalenceArgs) -> Result<()> {
    let report = equivalence_report(args.n, args.seed)?;
    println!("{}", serde_json::to_string(&report)?);
    if !report.pass {
        bail!(
            "routes disagree: max |dmean| {:e}, max |dvar| {:e} (tol {:e})",
            report.max_abs_delta_mean,
            report.max_abs_delta_var,
            report.tolerance
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => run_train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Equivalence(a) => equivalence(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
