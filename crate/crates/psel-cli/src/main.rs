//! `psel` — command-line frontend for the post-selection estimation toolkit.
//!
//! Subcommands:
//! - `bound`: post-selection Cramér-Rao-type bounds for a configured model;
//! - `estimate`: run estimators on observations read from a CSV file;
//! - `simulate`: run a configured Monte-Carlo experiment or sweep;
//! - `preset`: run one of the built-in experiments by name.
//!
//! Configuration is a single JSON document (see `ExperimentConfig`); results
//! are CSV files plus a `manifest.json` with checksums of every data file
//! written. Output is deterministic for fixed (config, seed, replications)
//! regardless of worker count. Seed precedence: `--seed`, then the config
//! file, then the `PSEL_SEED` environment variable, then the built-in
//! default. Exit codes: 0 success, 2 input/configuration error, 3 numerical
//! error, 1 operational (I/O) failure.
//!
//! CSV conventions: `\n` line endings, mandatory header row, shortest
//! round-trip number formatting, and 1-based population indices in column
//! names (`pop_1`, `theta_hat_1`, `freq_1`, …) and in `m_selected`, matching
//! the 1-based `component` field of sweep configs; the library API itself
//! indexes populations from 0.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use psel_core::bounds::{self, PsfimMethod};
use psel_core::estimators::{self, EstimateResult, EstimatorSpec};
use psel_core::montecarlo::{self, ExperimentConfig, McSummary, Preset, DEFAULT_SEED};
use psel_core::{rng, selection, McOptions, ModelSpec, ObservationSet};

use output::{
    estimate_csv, psi_crb_csv, summary_csv, surface_csv, write_manifest, write_output,
    RunManifest,
};

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "psel",
    version,
    about = "Post-selection estimation: bounds, estimators, Monte-Carlo experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the post-selection Cramér-Rao-type bound for a configured model.
    Bound(BoundArgs),
    /// Run estimators on observations read from a CSV file.
    Estimate(EstimateArgs),
    /// Run a configured Monte-Carlo experiment (optionally a sweep).
    Simulate(SimulateArgs),
    /// Run a named built-in experiment preset.
    Preset(PresetArgs),
}

#[derive(Args)]
struct BoundArgs {
    /// Experiment configuration (JSON).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Information-matrix computation.
    #[arg(long, value_enum, default_value_t = MethodArg::Closed)]
    method: MethodArg,
    /// Replications for the Monte-Carlo methods (ignored by `closed`).
    #[arg(long, default_value_t = 100_000)]
    replications: u64,
    /// RNG seed (highest precedence; then config, PSEL_SEED, default).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, short, default_value = ".", value_name = "DIR")]
    out: PathBuf,
}

/// CLI spelling of the PSFIM computation methods.
#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Definition,
    Score,
    Hessian,
    Closed,
}

impl MethodArg {
    fn into_method(self) -> PsfimMethod {
        match self {
            MethodArg::Definition => PsfimMethod::Definition,
            MethodArg::Score => PsfimMethod::ScoreForm,
            MethodArg::Hessian => PsfimMethod::HessianForm,
            MethodArg::Closed => PsfimMethod::ClosedForm,
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Observations CSV with header pop_1,...,pop_M, one column per population.
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Experiment configuration (JSON) supplying model, rule, and estimators.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Estimator identifier (repeatable), overriding the configured list.
    #[arg(long = "estimator", value_name = "NAME")]
    estimator: Vec<String>,
    /// RNG seed (highest precedence; then config, PSEL_SEED, default).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, short, default_value = ".", value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment configuration (JSON).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// RNG seed (highest precedence; then config, PSEL_SEED, default).
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured replication count.
    #[arg(long)]
    reps: Option<u64>,
    /// Divide the replication count by 10 for a quick run.
    #[arg(long)]
    fast: bool,
    /// Worker threads (0 = all logical cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Print the effective configuration as JSON and exit without running.
    #[arg(long)]
    dump_config: bool,
    /// Output directory.
    #[arg(long, short, default_value = ".", value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct PresetArgs {
    /// Preset name: fig3_uniform, fig4_zeta_surface, fig56_gaussian,
    /// fig78_exponential.
    name: String,
    /// RNG seed (highest precedence; then PSEL_SEED, then the default).
    #[arg(long)]
    seed: Option<u64>,
    /// Override the preset's replication count.
    #[arg(long)]
    reps: Option<u64>,
    /// Divide the replication count by 10 for a quick run.
    #[arg(long)]
    fast: bool,
    /// Worker threads (0 = all logical cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Print the effective configuration as JSON and exit without running.
    #[arg(long)]
    dump_config: bool,
    /// Output directory.
    #[arg(long, short, default_value = ".", value_name = "DIR")]
    out: PathBuf,
}

// ---------------------------------------------------------------------------
// Error plumbing and exit codes
// ---------------------------------------------------------------------------

/// A failure with the process exit code it maps to: 2 for input problems,
/// 3 for numerical ones, 1 for operational (I/O) failures.
pub(crate) struct CliError {
    code: u8,
    message: String,
}

pub(crate) type CliResult<T> = Result<T, CliError>;

fn input_error(message: impl Into<String>) -> CliError {
    CliError {
        code: 2,
        message: message.into(),
    }
}

pub(crate) fn io_error(message: impl Into<String>) -> CliError {
    CliError {
        code: 1,
        message: message.into(),
    }
}

/// Map library errors onto the exit-code contract: everything that is wrong
/// with the inputs is code 2, everything that went wrong during computation
/// is code 3.
fn core_error(err: psel_core::Error) -> CliError {
    use psel_core::Error;
    let code = match &err {
        Error::DimensionMismatch(_)
        | Error::InvalidParameter(_)
        | Error::InvalidModel(_)
        | Error::InvalidData(_)
        | Error::InvalidConfig(_)
        | Error::RandomizedNeedsRng
        | Error::UnknownEstimator(_)
        | Error::UnknownPreset(_) => 2,
        _ => 3,
    };
    CliError {
        code,
        message: err.to_string(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Bound(args) => cmd_bound(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Preset(args) => cmd_preset(args),
    }
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

/// Seed precedence: explicit flag, then config value, then `PSEL_SEED`, then
/// the built-in default.
fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> CliResult<u64> {
    if let Some(seed) = flag.or(config) {
        return Ok(seed);
    }
    match std::env::var("PSEL_SEED") {
        Ok(text) => text.trim().parse().map_err(|_| {
            input_error(format!(
                "PSEL_SEED must be an unsigned 64-bit integer, got {text:?}"
            ))
        }),
        Err(std::env::VarError::NotPresent) => Ok(DEFAULT_SEED),
        Err(err) => Err(input_error(format!("PSEL_SEED: {err}"))),
    }
}

fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|err| input_error(format!("read {}: {err}", path.display())))?;
    let config: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|err| input_error(format!("parse {}: {err}", path.display())))?;
    config.validate().map_err(core_error)?;
    Ok(config)
}

/// Apply `--reps`/`--fast`/`--seed` to a loaded config and re-validate.
fn apply_run_overrides(
    config: &mut ExperimentConfig,
    reps: Option<u64>,
    fast: bool,
    seed_flag: Option<u64>,
) -> CliResult<()> {
    if let Some(reps) = reps {
        config.replications = reps;
    }
    if fast {
        config.replications = (config.replications / 10).max(1);
    }
    config.seed = Some(resolve_seed(seed_flag, config.seed)?);
    config.validate().map_err(core_error)
}

fn config_value(config: &ExperimentConfig) -> CliResult<serde_json::Value> {
    serde_json::to_value(config).map_err(|err| io_error(format!("serialize config: {err}")))
}

fn dump_config(config: &ExperimentConfig) -> CliResult<()> {
    let text = serde_json::to_string_pretty(config)
        .map_err(|err| io_error(format!("serialize config: {err}")))?;
    println!("{text}");
    Ok(())
}

fn write_summary_outputs(
    dir: &Path,
    command: String,
    config: &ExperimentConfig,
    summary: &McSummary,
    started: Instant,
) -> CliResult<()> {
    let record = write_output(
        dir,
        "summary.csv",
        &summary_csv(summary, config.model.populations()),
    )?;
    let manifest = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: summary.seed,
        workers: Some(summary.workers),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        config: config_value(config)?,
        outputs: vec![record],
    };
    write_manifest(dir, &manifest)
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_bound(args: BoundArgs) -> CliResult<()> {
    let started = Instant::now();
    let config = load_config(&args.config)?;
    let seed = resolve_seed(args.seed, config.seed)?;
    let mc = McOptions {
        replications: args.replications,
        seed,
    };
    let report = bounds::psi_crb(
        &config.model,
        &config.rule,
        &config.theta_true,
        args.method.into_method(),
        Some(&mc),
    )
    .map_err(core_error)?;
    let record = write_output(&args.out, "psi_crb.csv", &psi_crb_csv(&report))?;
    let manifest = RunManifest {
        command: "bound".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        workers: None,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        config: config_value(&config)?,
        outputs: vec![record],
    };
    write_manifest(&args.out, &manifest)
}

fn cmd_estimate(args: EstimateArgs) -> CliResult<()> {
    let started = Instant::now();
    let config = load_config(&args.config)?;
    let seed = resolve_seed(args.seed, config.seed)?;
    let specs: Vec<EstimatorSpec> = if args.estimator.is_empty() {
        config.estimators.clone()
    } else {
        args.estimator
            .iter()
            .map(|name| name.parse().map_err(core_error))
            .collect::<CliResult<_>>()?
    };
    let obs = read_observations(&args.data, &config.model)?;
    // The randomized rule draws from the same dedicated stream the
    // Monte-Carlo harness reserves for selection.
    let mut rule_rng = rng::stream(seed, &[u64::MAX]);
    let m = selection::select(&config.model, &config.rule, &obs, Some(&mut rule_rng))
        .map_err(core_error)?;
    let mut rows = Vec::with_capacity(specs.len());
    for (index, spec) in specs.iter().enumerate() {
        let est_seed = rng::derive(seed, &[0xE57, index as u64]);
        match estimators::estimate(&config.model, &config.rule, &obs, m, spec, est_seed) {
            Ok(result) => rows.push((spec.to_string(), m, result)),
            Err(err) => {
                // Per-row failures are reported, not fatal: the remaining
                // estimators still produce output.
                eprintln!("estimator {spec}: {err}");
                rows.push((spec.to_string(), m, failed_result(&config.model, m)));
            }
        }
    }
    let record = write_output(
        &args.out,
        "estimate.csv",
        &estimate_csv(config.model.populations(), &rows),
    )?;
    let manifest = RunManifest {
        command: "estimate".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        workers: None,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        config: config_value(&config)?,
        outputs: vec![record],
    };
    write_manifest(&args.out, &manifest)
}

/// Placeholder row for an estimator that returned a structural error.
fn failed_result(model: &ModelSpec, m: usize) -> EstimateResult {
    EstimateResult {
        theta_hat: vec![f64::NAN; model.populations()],
        m,
        method: String::new(),
        iterations: 0,
        final_score_norm: None,
        converged: false,
    }
}

/// Read an observation file: header `pop_1,...,pop_M`, one row per sample,
/// one column per population.
fn read_observations(path: &Path, model: &ModelSpec) -> CliResult<ObservationSet> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|err| input_error(format!("read {}: {err}", path.display())))?;
    let populations = model.populations();
    let headers = reader
        .headers()
        .map_err(|err| input_error(format!("read {}: {err}", path.display())))?
        .clone();
    let expected: Vec<String> = (1..=populations).map(|j| format!("pop_{j}")).collect();
    if headers.len() != populations || headers.iter().zip(&expected).any(|(h, e)| h != e) {
        return Err(input_error(format!(
            "{}: expected header {}, got {}",
            path.display(),
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); populations];
    for (index, record) in reader.records().enumerate() {
        let line = index + 2;
        let record =
            record.map_err(|err| input_error(format!("{}: {err}", path.display())))?;
        if record.len() != populations {
            return Err(input_error(format!(
                "{}: line {line} has {} fields, expected {populations}",
                path.display(),
                record.len()
            )));
        }
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                input_error(format!(
                    "{}: line {line}, column pop_{}: cannot parse {field:?} as a number",
                    path.display(),
                    j + 1
                ))
            })?;
            columns[j].push(value);
        }
    }
    ObservationSet::new(model, columns).map_err(core_error)
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let started = Instant::now();
    let mut config = load_config(&args.config)?;
    apply_run_overrides(&mut config, args.reps, args.fast, args.seed)?;
    if args.dump_config {
        return dump_config(&config);
    }
    let summary = montecarlo::run_experiment(&config, args.workers).map_err(core_error)?;
    write_summary_outputs(&args.out, "simulate".to_string(), &config, &summary, started)
}

fn cmd_preset(args: PresetArgs) -> CliResult<()> {
    let started = Instant::now();
    let preset: Preset = args.name.parse().map_err(core_error)?;
    match montecarlo::preset_experiment_config(preset, false) {
        Some(mut config) => {
            apply_run_overrides(&mut config, args.reps, args.fast, args.seed)?;
            if args.dump_config {
                return dump_config(&config);
            }
            let summary = montecarlo::run_experiment(&config, args.workers).map_err(core_error)?;
            write_summary_outputs(
                &args.out,
                format!("preset {}", preset.name()),
                &config,
                &summary,
                started,
            )
        }
        None => {
            // The correction-factor surface is an exact tabulation: no
            // replications, no randomness, no experiment config to dump.
            if args.dump_config {
                return Err(input_error(format!(
                    "preset {} is an exact tabulation with no experiment config",
                    preset.name()
                )));
            }
            let surface = montecarlo::zeta_surface();
            let record = write_output(&args.out, "surface.csv", &surface_csv(&surface))?;
            let manifest = RunManifest {
                command: format!("preset {}", preset.name()),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed: resolve_seed(args.seed, None)?,
                workers: None,
                wall_time_seconds: started.elapsed().as_secs_f64(),
                config: serde_json::json!({ "preset": preset.name() }),
                outputs: vec![record],
            };
            write_manifest(&args.out, &manifest)
        }
    }
}
