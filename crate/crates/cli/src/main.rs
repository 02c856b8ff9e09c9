//! certpri: rank a model's test inputs by certified movement cost.
//!
//! Exit codes: 0 success, 1 input error, 2 internal invariant violation.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use certpri::run::{
    report_to_table, run_evaluate, run_fit_gevt, run_prioritize, write_atomic, EvaluateRequest,
    ResultFile,
};
use certpri::synth::{generate, Generator, SynthSpec};
use certpri::train::{evaluate_metric, train_toy, TrainSpec};
use certpri_core::dataset::Dataset;
use certpri_core::gevt::EndpointVariant;
use certpri_core::model::{Activation, Model, TaskKind};
use certpri_core::prioritizer::{CertPriConfig, Mode, Radius};
use certpri_core::PNorm;

#[derive(Parser)]
#[command(
    name = "certpri",
    version,
    about = "Certified movement-cost prioritization of test inputs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic train/test datasets.
    GenSynthetic(GenArgs),
    /// Train a small dense model on a labeled dataset.
    TrainToy(TrainArgs),
    /// Rank a dataset's inputs by certified movement cost.
    Prioritize(PrioritizeArgs),
    /// Grade stored orderings against a labeled dataset.
    Evaluate(EvaluateArgs),
    /// Fit the reverse Weibull to a newline-separated value file.
    FitGevt(FitGevtArgs),
}

#[derive(Args)]
struct GenArgs {
    /// blobs, moons or linreg.
    #[arg(long, default_value = "blobs")]
    generator: String,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 2)]
    input_dim: usize,
    /// Output width for the linreg generator.
    #[arg(long, default_value_t = 1)]
    targets: usize,
    #[arg(long, default_value_t = 600)]
    train: usize,
    #[arg(long, default_value_t = 300)]
    test: usize,
    /// Label-flip rate in [0, 0.5].
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Adjacent blob center distance in cluster standard deviations.
    #[arg(long, default_value_t = 6.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    cluster_std: f64,
    /// Geometric jitter for moons.
    #[arg(long, default_value_t = 0.1)]
    jitter: f64,
    /// Target noise for linreg.
    #[arg(long, default_value_t = 0.5)]
    noise_sigma: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_train: PathBuf,
    #[arg(long)]
    out_test: PathBuf,
    /// Provenance sidecar; defaults to <out-train>.meta.json.
    #[arg(long)]
    out_meta: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// classification or regression.
    #[arg(long, default_value = "classification")]
    task: String,
    /// Override the class count inferred from labels.
    #[arg(long)]
    classes: Option<usize>,
    /// Comma-separated hidden layer widths.
    #[arg(long, default_value = "16")]
    hidden: String,
    /// identity, relu, tanh or sigmoid.
    #[arg(long, default_value = "tanh")]
    activation: String,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Regression output domain for center clipping.
    #[arg(long)]
    output_min: Option<f64>,
    #[arg(long)]
    output_max: Option<f64>,
    /// Labeled dataset for a held-out metric report.
    #[arg(long)]
    eval: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PrioritizeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Perturbation norm order: 1, 2 or inf.
    #[arg(long, default_value = "2")]
    norm: String,
    /// Absolute radius, or a fraction of the feature bound with the `x`
    /// suffix (0.04x).
    #[arg(long, default_value = "0.04x")]
    radius: String,
    #[arg(long, default_value_t = 6)]
    batches: usize,
    #[arg(long, default_value_t = 10)]
    samples_per_batch: usize,
    /// white-box or black-box.
    #[arg(long, default_value = "white-box")]
    mode: String,
    #[arg(long, default_value_t = 1e-4)]
    fd_step: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// location-scale or standardized.
    #[arg(long, default_value = "location-scale")]
    endpoint: String,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Result files to grade (repeatable).
    #[arg(long = "result", required = true)]
    results: Vec<PathBuf>,
    /// Labeled dataset the results were computed on.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated cutoffs.
    #[arg(long, default_value = "100,200,300,500")]
    cutoffs: String,
    /// Also grade the DeepGini baseline ordering.
    #[arg(long)]
    deepgini: bool,
    /// RAUC-all of an original run, enabling the robustness ratio.
    #[arg(long)]
    robr_baseline: Option<f64>,
    /// json or table.
    #[arg(long, default_value = "table")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitGevtArgs {
    /// Newline-separated values.
    #[arg(long)]
    values: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        // Invariant breakages are tagged by the "internal:" prefix where
        // they are detected.
        if format!("{e:#}").contains("internal:") {
            CliError::Internal(e)
        } else {
            CliError::Input(e)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CliError::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Seed resolution: the flag wins, then CERTPRI_SEED, then 0.
fn resolve_seed(flag: Option<u64>) -> anyhow::Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("CERTPRI_SEED") {
        Ok(text) => text
            .trim()
            .parse()
            .with_context(|| format!("CERTPRI_SEED={text:?} is not a 64-bit seed")),
        Err(_) => Ok(0),
    }
}

fn parse_activation(name: &str) -> anyhow::Result<Activation> {
    match name.to_ascii_lowercase().as_str() {
        "identity" => Ok(Activation::Identity),
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        "sigmoid" => Ok(Activation::Sigmoid),
        other => anyhow::bail!("unknown activation {other:?}"),
    }
}

fn parse_task(name: &str) -> anyhow::Result<TaskKind> {
    match name.to_ascii_lowercase().as_str() {
        "classification" => Ok(TaskKind::Classification),
        "regression" => Ok(TaskKind::Regression),
        other => anyhow::bail!("unknown task {other:?}"),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenSynthetic(args) => gen_synthetic(args)?,
        Command::TrainToy(args) => train_toy_cmd(args)?,
        Command::Prioritize(args) => prioritize_cmd(args)?,
        Command::Evaluate(args) => evaluate_cmd(args)?,
        Command::FitGevt(args) => fit_gevt_cmd(args)?,
    }
    Ok(())
}

fn gen_synthetic(args: GenArgs) -> anyhow::Result<()> {
    let generator: Generator = args.generator.parse().map_err(anyhow::Error::msg)?;
    let spec = SynthSpec {
        generator,
        classes: args.classes,
        input_dim: args.input_dim,
        targets: args.targets,
        train_count: args.train,
        test_count: args.test,
        noise: args.noise,
        separation: args.separation,
        cluster_std: args.cluster_std,
        jitter: args.jitter,
        noise_sigma: args.noise_sigma,
        seed: resolve_seed(args.seed)?,
    };
    let output = generate(&spec)?;
    write_atomic(&args.out_train, output.train.to_csv().as_bytes())?;
    write_atomic(&args.out_test, output.test.to_csv().as_bytes())?;
    let meta_path = args.out_meta.unwrap_or_else(|| {
        let mut p = args.out_train.as_os_str().to_owned();
        p.push(".meta.json");
        PathBuf::from(p)
    });
    write_atomic(&meta_path, format!("{:#}\n", output.meta).as_bytes())?;
    eprintln!(
        "wrote {} train rows, {} test rows",
        output.train.len(),
        output.test.len()
    );
    Ok(())
}

fn train_toy_cmd(args: TrainArgs) -> anyhow::Result<()> {
    let data = Dataset::load(&args.data)
        .with_context(|| format!("loading dataset {}", args.data.display()))?;
    let task = parse_task(&args.task)?;
    let hidden: Vec<usize> = args
        .hidden
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().context("parsing hidden widths"))
        .collect::<anyhow::Result<_>>()?;
    let output_domain = match (args.output_min, args.output_max) {
        (Some(min), Some(max)) => Some((min, max)),
        (None, None) => None,
        _ => anyhow::bail!("--output-min and --output-max must be given together"),
    };
    let spec = TrainSpec {
        hidden,
        activation: parse_activation(&args.activation)?,
        epochs: args.epochs,
        learning_rate: args.lr,
        seed: resolve_seed(args.seed)?,
    };
    let outcome = train_toy(&data, task, args.classes, output_domain, &spec)?;
    outcome.model.save(&args.out)?;

    let metric_name = match task {
        TaskKind::Classification => "accuracy",
        TaskKind::Regression => "mse",
    };
    let mut summary = serde_json::json!({
        "train_loss": outcome.final_loss,
        format!("train_{metric_name}"): outcome.train_metric,
    });
    if let Some(eval_path) = &args.eval {
        let eval_data = Dataset::load(eval_path)
            .with_context(|| format!("loading dataset {}", eval_path.display()))?;
        let eval_metric = evaluate_metric(&outcome.model, &eval_data)?;
        summary[format!("test_{metric_name}")] = serde_json::json!(eval_metric);
    }
    println!("{summary:#}");
    eprintln!("model written to {}", args.out.display());
    Ok(())
}

fn prioritize_cmd(args: PrioritizeArgs) -> anyhow::Result<()> {
    let model = Model::load(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let dataset = Dataset::load(&args.data)
        .with_context(|| format!("loading dataset {}", args.data.display()))?;
    let norm: PNorm = args.norm.parse().map_err(anyhow::Error::msg)?;
    let radius: Radius = args.radius.parse().map_err(anyhow::Error::msg)?;
    let mode = match args.mode.to_ascii_lowercase().replace('_', "-").as_str() {
        "white-box" => Mode::WhiteBox,
        "black-box" => Mode::BlackBox,
        other => anyhow::bail!("unknown mode {other:?}"),
    };
    let endpoint_variant = match args
        .endpoint
        .to_ascii_lowercase()
        .replace('_', "-")
        .as_str()
    {
        "location-scale" => EndpointVariant::LocationScale,
        "standardized" => EndpointVariant::Standardized,
        other => anyhow::bail!("unknown endpoint variant {other:?}"),
    };
    let config = CertPriConfig {
        norm,
        radius,
        batches: args.batches,
        samples_per_batch: args.samples_per_batch,
        mode,
        fd_step: args.fd_step,
        seed: resolve_seed(args.seed)?,
        endpoint_variant,
    };
    let result = run_prioritize(&model, &dataset, &config)?;
    let payload = serde_json::to_string_pretty(&result)?;
    write_atomic(&args.out, format!("{payload}\n").as_bytes())?;
    eprintln!(
        "prioritized {} inputs (seed {}), result at {}",
        result.inputs.len(),
        result.seed,
        args.out.display()
    );
    Ok(())
}

fn evaluate_cmd(args: EvaluateArgs) -> anyhow::Result<()> {
    let model = Model::load(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let dataset = Dataset::load(&args.data)
        .with_context(|| format!("loading dataset {}", args.data.display()))?;
    let cutoffs: Vec<usize> = args
        .cutoffs
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().context("parsing cutoffs"))
        .collect::<anyhow::Result<_>>()?;
    let mut results = Vec::new();
    for path in &args.results {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        results.push((name, ResultFile::load(path)?));
    }
    let request = EvaluateRequest {
        results,
        dataset: &dataset,
        model: &model,
        cutoffs,
        include_deepgini: args.deepgini,
        robr_baseline: args.robr_baseline,
    };
    let report = run_evaluate(&request)?;
    let rendered = match args.format.as_str() {
        "json" => format!("{}\n", serde_json::to_string_pretty(&report)?),
        "table" => report_to_table(&report),
        other => anyhow::bail!("unknown format {other:?} (json or table)"),
    };
    match &args.out {
        Some(path) => write_atomic(path, rendered.as_bytes())?,
        None => print!("{rendered}"),
    }
    Ok(())
}

fn fit_gevt_cmd(args: FitGevtArgs) -> anyhow::Result<()> {
    let fit = run_fit_gevt(&args.values)?;
    let rendered = format!("{fit:#}\n");
    match &args.out {
        Some(path) => write_atomic(path, rendered.as_bytes())?,
        None => print!("{rendered}"),
    }
    Ok(())
}
