//! `ars`: generate synthetic dynamical series, fit forecasting models on
//! their observed coordinates, forecast, and reproduce the full benchmark.
//!
//! Series travel as CSV (`t,x1,...,xd`), models as JSON. Exit codes:
//! 0 success, 1 runtime or I/O failure, 2 usage.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use ars_core::error::Error as CoreError;
use ars_core::{
    add_noise, fit_ar, fit_ars, fit_ars_interactions, forecast_ar, forecast_ars,
    forecast_ars_interactions, gen_circular, gen_lorenz, reproduce, ArModel, ArsModel, ExtArsModel,
    LorenzParams, MissingSpec, NoiseConfig, ObservedSeries, OptimSettings, SlackInit, Trajectory,
};

#[derive(Parser)]
#[command(
    name = "ars",
    version,
    about = "Forecasting of partially observed linear dynamics"
)]
struct Cli {
    /// Seed driving noise, slack initialisation and optimizer restarts.
    #[arg(long, global = true, env = "ARS_SEED", default_value_t = 0)]
    seed: u64,

    /// Ridge added to the normal equations of every fit.
    #[arg(long, global = true, default_value_t = 0.0)]
    ridge: f64,

    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Output format; series are CSV-only and models JSON-only, so this
    /// only needs setting when piping into format-sensitive tooling.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum System {
    Circular,
    Lorenz,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Ar,
    Ars,
    ArsInt,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitMode {
    /// Standard normal slack.
    Normal,
    /// True missing coordinates (columns r.. of the input) plus noise.
    Truth,
    /// All-zero slack.
    Zeros,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trajectory as CSV.
    Generate {
        #[arg(long, value_enum)]
        system: System,
        /// Number of time points.
        #[arg(long)]
        n: usize,
        /// Observation noise standard deviation.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        /// Index of the first sample (circular motion phase offset).
        #[arg(long, default_value_t = 1)]
        start_index: i64,
    },
    /// Fit a model on the leading r columns of a trajectory CSV.
    Fit {
        /// Trajectory CSV to read.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        model: ModelKind,
        /// Number of observed (leading) columns.
        #[arg(long)]
        r: usize,
        /// Slack dimension of the completed state.
        #[arg(long, default_value_t = 1)]
        s_tilde: usize,
        /// Autoregressive order (model "ar" only).
        #[arg(long, default_value_t = 1)]
        p: usize,
        /// Slack initialisation.
        #[arg(long, value_enum, default_value_t = InitMode::Normal)]
        init: InitMode,
    },
    /// Forecast k steps from a fitted model and its history CSV.
    Forecast {
        /// Model JSON produced by `fit`.
        #[arg(long)]
        model: PathBuf,
        /// History CSV the model was fitted on.
        #[arg(long)]
        history: PathBuf,
        /// Forecast horizon.
        #[arg(long)]
        k: usize,
    },
    /// Run the full benchmark and write tables, raw CSVs and figures.
    Reproduce {
        /// Directory receiving the artifacts.
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// A failure routed to an exit code: 1 for runtime/I-O, 2 for usage.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

/// Core errors during computation: invalid arguments are usage errors,
/// everything else is a runtime failure.
impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidArgument(_) => Failure::usage(e.to_string()),
            _ => Failure::runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Generate {
            system,
            n,
            sigma,
            start_index,
        } => {
            expect_format(cli.format, Format::Csv)?;
            let clean = match system {
                System::Circular => gen_circular(*n, *start_index)?,
                System::Lorenz => gen_lorenz(*n, &LorenzParams::default())?,
            };
            let noise = NoiseConfig::new(*sigma, cli.seed)?;
            emit(&cli.output, &add_noise(&clean, &noise).to_csv())
        }
        Command::Fit {
            input,
            model,
            r,
            s_tilde,
            p,
            init,
        } => {
            expect_format(cli.format, Format::Json)?;
            let traj = read_trajectory(input)?;
            if *r == 0 || *r > traj.dim() {
                return Err(Failure::usage(format!(
                    "r = {r} must be between 1 and the column count {}",
                    traj.dim()
                )));
            }
            let json = match model {
                ModelKind::Ar => {
                    let observed = observe(&traj, *r)?;
                    fit_ar(&observed, *p, cli.ridge)?.to_json()
                }
                ModelKind::Ars => {
                    let observed = observe(&traj, *r)?;
                    let slack_init = build_init(&traj, *r, *s_tilde, init, cli.seed)?;
                    fit_ars(
                        &observed,
                        *s_tilde,
                        &slack_init,
                        &fit_settings(cli.seed),
                        cli.ridge,
                    )?
                    .to_json()
                }
                ModelKind::ArsInt => {
                    let observed = observe(&traj, *r)?;
                    let slack_init = build_init(&traj, *r, *s_tilde, init, cli.seed)?;
                    fit_ars_interactions(
                        &observed,
                        *s_tilde,
                        &slack_init,
                        &fit_settings(cli.seed),
                        cli.ridge,
                    )?
                    .to_json()
                }
            };
            emit(&cli.output, &json)
        }
        Command::Forecast { model, history, k } => {
            expect_format(cli.format, Format::Csv)?;
            let text = fs::read_to_string(model)
                .map_err(|e| Failure::runtime(format!("cannot read {}: {e}", model.display())))?;
            let kind = model_kind(&text)?;
            let traj = read_trajectory(history)?;
            let forecast = match kind.as_str() {
                "ar" => {
                    let fitted = ArModel::from_json(&text)?;
                    let observed = observe_checked(&traj, fitted.dim())?;
                    forecast_ar(&fitted, &observed, *k)?
                }
                "ars" => {
                    let (r, len) = ars_dims(&text)?;
                    let observed = observe_checked(&traj, r)?;
                    check_history_len(len, observed.len())?;
                    let fitted = ArsModel::from_json(&text, observed)?;
                    forecast_ars(&fitted, *k)
                }
                "ars_int" => {
                    let (r, len) = ars_dims(&text)?;
                    let observed = observe_checked(&traj, r)?;
                    check_history_len(len, observed.len())?;
                    let fitted = ExtArsModel::from_json(&text, observed)?;
                    forecast_ars_interactions(&fitted, *k)?
                }
                other => {
                    return Err(Failure::usage(format!("unknown model type '{other}'")));
                }
            };
            emit(&cli.output, &forecast.to_csv())
        }
        Command::Reproduce { out_dir } => {
            let summary = reproduce(out_dir, cli.seed)?;
            print!("{}", summary.summary_text());
            println!(
                "wrote {} files to {} in {:.1}s",
                summary.files.len(),
                out_dir.display(),
                summary.elapsed_secs
            );
            Ok(())
        }
    }
}

/// Optimizer settings used by `fit`: deep tolerances with enough restarts
/// to recover clean dynamics from a random slack start.
fn fit_settings(seed: u64) -> OptimSettings {
    OptimSettings {
        max_iters: 4000,
        grad_tol: 1e-10,
        loss_tol: 1e-16,
        restarts: 8,
        seed,
        ..OptimSettings::default()
    }
}

fn expect_format(requested: Option<Format>, natural: Format) -> Result<(), Failure> {
    match requested {
        None => Ok(()),
        Some(f) if f == natural => Ok(()),
        Some(_) => Err(Failure::usage(match natural {
            Format::Csv => "this command emits series, which are CSV-only",
            Format::Json => "this command emits a model, which is JSON-only",
        })),
    }
}

fn emit(output: &Option<PathBuf>, content: &str) -> Result<(), Failure> {
    match output {
        Some(path) => fs::write(path, content)
            .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn read_trajectory(path: &PathBuf) -> Result<Trajectory, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::runtime(format!("cannot read {}: {e}", path.display())))?;
    Trajectory::from_csv(&text).map_err(|e| Failure::runtime(e.to_string()))
}

/// The missing mechanism applied by the tool: keep the leading r columns.
fn observe(traj: &Trajectory, r: usize) -> Result<ObservedSeries, Failure> {
    let spec = MissingSpec::new(r, traj.dim() - r)?;
    Ok(ars_core::split_observed(traj, &spec)?)
}

fn observe_checked(traj: &Trajectory, r: usize) -> Result<ObservedSeries, Failure> {
    if r == 0 || r > traj.dim() {
        return Err(Failure::usage(format!(
            "model expects {r} observed columns but the history has {}",
            traj.dim()
        )));
    }
    observe(traj, r)
}

fn check_history_len(model_len: usize, history_len: usize) -> Result<(), Failure> {
    if model_len != history_len {
        return Err(Failure::usage(format!(
            "model stores {model_len} slack entries but the history has {history_len} rows"
        )));
    }
    Ok(())
}

fn build_init(
    traj: &Trajectory,
    r: usize,
    s_tilde: usize,
    init: &InitMode,
    seed: u64,
) -> Result<SlackInit, Failure> {
    Ok(match init {
        InitMode::Normal => SlackInit::StandardNormal { seed },
        InitMode::Zeros => SlackInit::Zeros,
        InitMode::Truth => {
            if traj.dim() < r + s_tilde {
                return Err(Failure::usage(format!(
                    "truth initialisation needs columns {}..{} but the input has only {}",
                    r + 1,
                    r + s_tilde,
                    traj.dim()
                )));
            }
            let truth: Vec<DVector<f64>> = traj
                .states()
                .iter()
                .map(|s| s.rows(r, s_tilde).into_owned())
                .collect();
            SlackInit::TruthPerturbed { truth, seed }
        }
    })
}

fn model_kind(text: &str) -> Result<String, Failure> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| {
        Failure::runtime(format!("model JSON parse error at line {}: {e}", e.line()))
    })?;
    value
        .get("type")
        .and_then(|t| t.as_str())
        .map(str::to_owned)
        .ok_or_else(|| Failure::usage("model JSON has no 'type' field"))
}

fn ars_dims(text: &str) -> Result<(usize, usize), Failure> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| {
        Failure::runtime(format!("model JSON parse error at line {}: {e}", e.line()))
    })?;
    let r = value
        .get("r")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Failure::usage("model JSON has no 'r' field".to_string()))?
        as usize;
    let len = value
        .get("slack")
        .and_then(|v| v.as_array())
        .map(|a| a.len())
        .ok_or_else(|| Failure::usage("model JSON has no 'slack' array".to_string()))?;
    Ok((r, len))
}
