//! Replicated sampling experiments over selection-and-estimation pipelines.
//!
//! [`run_experiment`] draws datasets from the true parameter, applies the
//! selection rule once per dataset, runs every configured estimator on the
//! same data, and accumulates post-selection error summaries:
//!
//! - **PSMSE** — the mean squared error of the *selected* component,
//!   E[(θ̂_Ψ − θ_Ψ)²], which decomposes exactly over selection events,
//! - **Ψ-bias** — both the indicator form E[(θ̂_j − θ_j)·1{Ψ=m}] (whose
//!   vanishing for j=m defines unbiasedness under selection) and the
//!   conditional form E[θ̂_j − θ_j | Ψ=m],
//! - closed-form lower-bound columns where they exist.
//!
//! Replications are split into 32 fixed batches. Batches may run on worker
//! threads, but each batch is sequential inside and per-replication RNG
//! streams derive from the experiment seed and replication index alone, with
//! results combined in batch order — so a run is bit-identical for any
//! worker count, with or without the `parallel` feature. Standard errors are
//! delete-one-batch jackknife estimates.

use serde::{Deserialize, Serialize};

use crate::bounds::{
    self, biased_psi_crb, gaussian_ml_bias_gradients, psi_crb_exponential_n1,
    psi_crb_gaussian_closed, PsfimMethod,
};
use crate::error::{Error, Result};
use crate::estimators::{self, EstimatorSpec};
use crate::exec;
use crate::model::{Family, ModelSpec};
use crate::rng;
use crate::selection::{self, SelectionRule};

/// Seed used when a configuration does not pin one ("PSEL" in ASCII).
pub const DEFAULT_SEED: u64 = 0x5053_454C;

const BATCHES: usize = 32;
/// Tolerated per-estimator failure fraction before the run is aborted.
const FAILURE_TOLERANCE: f64 = 0.01;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// What varies across the sweep points of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum SweepAxis {
    /// Repeat the experiment for each samples-per-population value.
    SampleSize { grid: Vec<usize> },
    /// Repeat the experiment varying one true-parameter component
    /// (`component` is 1-based, matching report columns).
    ThetaComponent { component: usize, grid: Vec<f64> },
}

/// A full experiment description; serializable as the CLI's JSON config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    /// True parameter the data is drawn from.
    pub theta_true: Vec<f64>,
    pub rule: SelectionRule,
    /// Estimators to run on every dataset (identifiers like `"ml"`,
    /// `"psml_closed"`, `"mbp:1"`).
    pub estimators: Vec<EstimatorSpec>,
    /// Datasets per sweep point.
    pub replications: u64,
    /// RNG seed; defaults to [`DEFAULT_SEED`] when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepAxis>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.check_theta(&self.theta_true)?;
        self.rule.validate(self.model.populations())?;
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("no estimators configured".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be positive".into()));
        }
        match &self.sweep {
            None => {}
            Some(SweepAxis::SampleSize { grid }) => {
                if grid.is_empty() {
                    return Err(Error::InvalidConfig("empty sample-size grid".into()));
                }
                for &n in grid {
                    // Surfaces invalid sizes before any sampling happens.
                    self.model.with_samples_per_population(n)?;
                }
            }
            Some(SweepAxis::ThetaComponent { component, grid }) => {
                if *component == 0 || *component > self.model.populations() {
                    return Err(Error::InvalidConfig(format!(
                        "sweep component {component} out of range 1..={}",
                        self.model.populations()
                    )));
                }
                if grid.is_empty() {
                    return Err(Error::InvalidConfig("empty parameter grid".into()));
                }
                for &value in grid {
                    let mut theta = self.theta_true.clone();
                    theta[component - 1] = value;
                    self.model.check_theta(&theta)?;
                }
            }
        }
        Ok(())
    }

    /// The effective seed a run will use.
    pub fn effective_seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// Ψ-bias estimates for one estimator at one sweep point. Outer index is the
/// selection event m, inner index the parameter component j.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiBiasReport {
    /// Valid replications with Ψ = m for this estimator.
    pub counts: Vec<u64>,
    /// E[(θ̂_j − θ_j)·1{Ψ=m}] — the unbiasedness-under-selection functional.
    pub indicator: Vec<Vec<f64>>,
    pub indicator_se: Vec<Vec<f64>>,
    /// E[θ̂_j − θ_j | Ψ=m] (NaN where the event never occurred).
    pub conditional: Vec<Vec<f64>>,
    pub conditional_se: Vec<Vec<f64>>,
}

/// One estimator's summary at one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    /// Estimator identifier (the parsed spec, e.g. `"mbp:1"`).
    pub estimator: String,
    /// Selected-component mean squared error E[(θ̂_Ψ − θ_Ψ)²].
    pub psmse: f64,
    /// Jackknife standard error of `psmse`.
    pub psmse_se: f64,
    /// Conditional selected-component MSE per selection event
    /// (NaN where the event never occurred); satisfies
    /// psmse = Σ_m freq_m·conditional_mse_m.
    pub conditional_mse: Vec<f64>,
    pub bias: PsiBiasReport,
    /// Per-batch PSMSE values (for paired comparisons across estimators
    /// sharing the same replications).
    pub batch_psmse: Vec<f64>,
    /// Per-batch means of the selected-component error
    /// (θ̂_Ψ − θ_Ψ averaged over the batch).
    pub batch_selected_bias: Vec<f64>,
    /// Replications where this estimator returned an error.
    pub failures: u64,
}

/// Results at one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Value on the sweep axis (sample size or parameter value); absent for
    /// single-point experiments.
    pub sweep_value: Option<f64>,
    pub samples_per_population: usize,
    pub theta: Vec<f64>,
    pub replications: u64,
    /// Realized selection counts per population.
    pub selection_counts: Vec<u64>,
    pub selection_freq: Vec<f64>,
    /// Closed-form post-selection lower bound, where one exists for this
    /// model/rule.
    pub psi_crb: Option<f64>,
    /// Bias-corrected bound for the ML estimator (two-population Gaussian
    /// SMS only).
    pub biased_psi_crb: Option<f64>,
    pub estimators: Vec<EstimatorSummary>,
}

/// A full experiment result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    /// Seed actually used.
    pub seed: u64,
    /// Worker threads actually used (1 in sequential builds).
    pub workers: usize,
    pub points: Vec<SweepPoint>,
}

// ---------------------------------------------------------------------------
// Accumulation
// ---------------------------------------------------------------------------

#[derive(Clone)]
struct EstAccum {
    /// Per-m sum of squared selected-component errors.
    psse: Vec<f64>,
    /// Per-(m, j) sum of component errors over replications with Ψ=m.
    err: Vec<Vec<f64>>,
    /// Per-m valid replications.
    counts: Vec<u64>,
    failures: u64,
    first_failure: Option<String>,
}

impl EstAccum {
    fn new(dim: usize) -> Self {
        EstAccum {
            psse: vec![0.0; dim],
            err: vec![vec![0.0; dim]; dim],
            counts: vec![0; dim],
            failures: 0,
            first_failure: None,
        }
    }

    fn record(&mut self, theta_true: &[f64], theta_hat: &[f64], m: usize) {
        let e_m = theta_hat[m] - theta_true[m];
        self.psse[m] += e_m * e_m;
        for (j, (hat, truth)) in theta_hat.iter().zip(theta_true).enumerate() {
            self.err[m][j] += hat - truth;
        }
        self.counts[m] += 1;
    }

    fn absorb(&mut self, other: &EstAccum) {
        for (a, b) in self.psse.iter_mut().zip(&other.psse) {
            *a += b;
        }
        for (row_a, row_b) in self.err.iter_mut().zip(&other.err) {
            for (a, b) in row_a.iter_mut().zip(row_b) {
                *a += b;
            }
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.failures += other.failures;
        if self.first_failure.is_none() {
            self.first_failure = other.first_failure.clone();
        }
    }
}

struct BatchResult {
    replications: u64,
    selection_counts: Vec<u64>,
    estimators: Vec<EstAccum>,
}

/// Delete-one-batch jackknife standard error of a ratio-of-sums statistic.
/// `numerators[b]` and `denominators[b]` are the per-batch contributions.
fn jackknife_ratio_se(numerators: &[f64], denominators: &[f64]) -> f64 {
    let b = numerators.len();
    if b < 2 {
        return f64::NAN;
    }
    let total_num: f64 = numerators.iter().sum();
    let total_den: f64 = denominators.iter().sum();
    let mut leave = Vec::with_capacity(b);
    for (num, den) in numerators.iter().zip(denominators) {
        let d = total_den - den;
        if d <= 0.0 {
            return f64::NAN;
        }
        leave.push((total_num - num) / d);
    }
    let mean = leave.iter().sum::<f64>() / b as f64;
    let var: f64 = leave.iter().map(|x| (x - mean) * (x - mean)).sum();
    ((b as f64 - 1.0) / b as f64 * var).sqrt()
}

// ---------------------------------------------------------------------------
// The driver
// ---------------------------------------------------------------------------

/// Run a replicated experiment. `workers = 0` uses all available cores;
/// any worker count (and either build flavor) produces bit-identical
/// summaries for the same configuration.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<McSummary> {
    config.validate()?;
    let seed = config.effective_seed();
    let workers = resolve_workers(workers);

    // Materialize the sweep points.
    let mut points: Vec<(Option<f64>, ModelSpec, Vec<f64>)> = Vec::new();
    match &config.sweep {
        None => points.push((None, config.model.clone(), config.theta_true.clone())),
        Some(SweepAxis::SampleSize { grid }) => {
            for &n in grid {
                points.push((
                    Some(n as f64),
                    config.model.with_samples_per_population(n)?,
                    config.theta_true.clone(),
                ));
            }
        }
        Some(SweepAxis::ThetaComponent { component, grid }) => {
            for &value in grid {
                let mut theta = config.theta_true.clone();
                theta[component - 1] = value;
                points.push((Some(value), config.model.clone(), theta));
            }
        }
    }

    let mut out = Vec::with_capacity(points.len());
    for (pt_idx, (sweep_value, model, theta)) in points.iter().enumerate() {
        out.push(run_point(
            config,
            model,
            theta,
            *sweep_value,
            pt_idx as u64,
            seed,
            workers,
        )?);
    }
    Ok(McSummary {
        seed,
        workers,
        points: out,
    })
}

fn resolve_workers(workers: usize) -> usize {
    if cfg!(not(feature = "parallel")) {
        return 1;
    }
    if workers == 0 {
        std::thread::available_parallelism().map_or(1, usize::from)
    } else {
        workers
    }
}

fn run_point(
    config: &ExperimentConfig,
    model: &ModelSpec,
    theta: &[f64],
    sweep_value: Option<f64>,
    point_index: u64,
    seed: u64,
    workers: usize,
) -> Result<SweepPoint> {
    let dim = model.populations();
    let reps = config.replications;
    let ranges = exec::split_ranges(reps, BATCHES);
    let batches = exec::map_collect(workers, ranges.len(), |b| -> Result<BatchResult> {
        let mut selection_counts = vec![0u64; dim];
        let mut accums: Vec<EstAccum> =
            config.estimators.iter().map(|_| EstAccum::new(dim)).collect();
        for r in ranges[b].clone() {
            let rep_seed = rng::derive(seed, &[point_index, r]);
            let x = model.sample(theta, rep_seed)?;
            let mut sel_rng = rng::stream(rep_seed, &[u64::MAX]);
            let m = selection::select(model, &config.rule, &x, Some(&mut sel_rng))?;
            selection_counts[m] += 1;
            for (e, spec) in config.estimators.iter().enumerate() {
                let est_seed = rng::derive(rep_seed, &[0xE57, e as u64]);
                match estimators::estimate(model, &config.rule, &x, m, spec, est_seed) {
                    Ok(result) => accums[e].record(theta, &result.theta_hat, m),
                    Err(err) => {
                        accums[e].failures += 1;
                        if accums[e].first_failure.is_none() {
                            accums[e].first_failure = Some(err.to_string());
                        }
                    }
                }
            }
        }
        Ok(BatchResult {
            replications: ranges[b].end - ranges[b].start,
            selection_counts,
            estimators: accums,
        })
    });
    let mut results = Vec::with_capacity(batches.len());
    for b in batches {
        results.push(b?);
    }
    summarize_point(config, model, theta, sweep_value, &results)
}

fn summarize_point(
    config: &ExperimentConfig,
    model: &ModelSpec,
    theta: &[f64],
    sweep_value: Option<f64>,
    batches: &[BatchResult],
) -> Result<SweepPoint> {
    let dim = model.populations();
    let reps: u64 = batches.iter().map(|b| b.replications).sum();
    let mut selection_counts = vec![0u64; dim];
    for b in batches {
        for (total, c) in selection_counts.iter_mut().zip(&b.selection_counts) {
            *total += c;
        }
    }

    let mut summaries = Vec::with_capacity(config.estimators.len());
    for (e, spec) in config.estimators.iter().enumerate() {
        let mut total = EstAccum::new(dim);
        for b in batches {
            total.absorb(&b.estimators[e]);
        }
        let name = spec.to_string();
        if total.failures > 0 {
            let rate = total.failures as f64 / reps as f64;
            if rate > FAILURE_TOLERANCE {
                return Err(Error::ExcessiveFailures {
                    estimator: name,
                    failures: total.failures,
                    total: reps,
                    rate,
                    first: total.first_failure.unwrap_or_default(),
                });
            }
        }
        let valid: u64 = total.counts.iter().sum();
        if valid == 0 {
            return Err(Error::ExcessiveFailures {
                estimator: name,
                failures: total.failures,
                total: reps,
                rate: 1.0,
                first: total.first_failure.unwrap_or_default(),
            });
        }

        // Per-batch PSMSE and selected-bias series (over valid reps).
        let series: Vec<(f64, f64, f64)> = batches
            .iter()
            .map(|b| {
                let acc = &b.estimators[e];
                let batch_valid: u64 = acc.counts.iter().sum();
                let psse: f64 = acc.psse.iter().sum();
                let sel_err: f64 = (0..dim).map(|m| acc.err[m][m]).sum();
                (psse, sel_err, batch_valid as f64)
            })
            .collect();
        let psse_b: Vec<f64> = series.iter().map(|s| s.0).collect();
        let sel_err_b: Vec<f64> = series.iter().map(|s| s.1).collect();
        let valid_b: Vec<f64> = series.iter().map(|s| s.2).collect();
        let psmse = psse_b.iter().sum::<f64>() / valid as f64;
        let psmse_se = jackknife_ratio_se(&psse_b, &valid_b);
        let batch_psmse: Vec<f64> = psse_b
            .iter()
            .zip(&valid_b)
            .map(|(p, v)| if *v > 0.0 { p / v } else { f64::NAN })
            .collect();
        let batch_selected_bias: Vec<f64> = sel_err_b
            .iter()
            .zip(&valid_b)
            .map(|(s, v)| if *v > 0.0 { s / v } else { f64::NAN })
            .collect();

        let conditional_mse: Vec<f64> = (0..dim)
            .map(|m| {
                if total.counts[m] > 0 {
                    total.psse[m] / total.counts[m] as f64
                } else {
                    f64::NAN
                }
            })
            .collect();

        // Ψ-bias estimates with jackknife SEs.
        let mut indicator = vec![vec![0.0; dim]; dim];
        let mut indicator_se = vec![vec![0.0; dim]; dim];
        let mut conditional = vec![vec![0.0; dim]; dim];
        let mut conditional_se = vec![vec![0.0; dim]; dim];
        for m in 0..dim {
            let counts_b: Vec<f64> = batches
                .iter()
                .map(|b| b.estimators[e].counts[m] as f64)
                .collect();
            for j in 0..dim {
                let err_b: Vec<f64> = batches
                    .iter()
                    .map(|b| b.estimators[e].err[m][j])
                    .collect();
                indicator[m][j] = total.err[m][j] / valid as f64;
                indicator_se[m][j] = jackknife_ratio_se(&err_b, &valid_b);
                if total.counts[m] > 0 {
                    conditional[m][j] = total.err[m][j] / total.counts[m] as f64;
                    conditional_se[m][j] = jackknife_ratio_se(&err_b, &counts_b);
                } else {
                    conditional[m][j] = f64::NAN;
                    conditional_se[m][j] = f64::NAN;
                }
            }
        }

        summaries.push(EstimatorSummary {
            estimator: name,
            psmse,
            psmse_se,
            conditional_mse,
            bias: PsiBiasReport {
                counts: total.counts,
                indicator,
                indicator_se,
                conditional,
                conditional_se,
            },
            batch_psmse,
            batch_selected_bias,
            failures: total.failures,
        });
    }

    let (psi_crb, biased) = bound_columns(model, &config.rule, theta)?;
    Ok(SweepPoint {
        sweep_value,
        samples_per_population: model.samples_per_population(),
        theta: theta.to_vec(),
        replications: reps,
        selection_counts: selection_counts.clone(),
        selection_freq: selection_counts
            .iter()
            .map(|&c| c as f64 / reps as f64)
            .collect(),
        psi_crb,
        biased_psi_crb: biased,
        estimators: summaries,
    })
}

/// Closed-form bound columns for a sweep point, where they exist.
fn bound_columns(
    model: &ModelSpec,
    rule: &SelectionRule,
    theta: &[f64],
) -> Result<(Option<f64>, Option<f64>)> {
    match rule {
        SelectionRule::Sms => match (model.family(), model.populations()) {
            (Family::Gaussian, 2) => {
                let unbiased = psi_crb_gaussian_closed(model, theta)?.aggregate;
                let grads = gaussian_ml_bias_gradients(model, theta)?;
                let corrected = biased_psi_crb(
                    model,
                    rule,
                    theta,
                    &grads,
                    PsfimMethod::ClosedForm,
                    None,
                )?
                .aggregate;
                Ok((Some(unbiased), Some(corrected)))
            }
            (Family::Exponential, 2) if model.samples_per_population() == 1 => {
                Ok((Some(psi_crb_exponential_n1(model, theta)?.aggregate), None))
            }
            _ => Ok((None, None)),
        },
        SelectionRule::Randomized { .. } => {
            if model.family().is_regular() {
                let report =
                    bounds::psi_crb(model, rule, theta, PsfimMethod::ClosedForm, None)?;
                Ok((Some(report.aggregate), None))
            } else {
                Ok((None, None))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Standalone Ψ-bias estimation
// ---------------------------------------------------------------------------

/// Estimate Ψ-bias functionals from raw (estimate, selected-index) pairs.
///
/// Pairs are split into up to 32 contiguous chunks for jackknife standard
/// errors, mirroring [`run_experiment`]'s batching.
pub fn empirical_psi_bias(theta_true: &[f64], samples: &[(Vec<f64>, usize)]) -> PsiBiasReport {
    let dim = theta_true.len();
    let ranges = exec::split_ranges(samples.len() as u64, BATCHES);
    let accums: Vec<EstAccum> = ranges
        .iter()
        .map(|range| {
            let mut acc = EstAccum::new(dim);
            for (theta_hat, m) in &samples[range.start as usize..range.end as usize] {
                acc.record(theta_true, theta_hat, *m);
            }
            acc
        })
        .collect();
    let mut total = EstAccum::new(dim);
    for acc in &accums {
        total.absorb(acc);
    }
    let valid: u64 = total.counts.iter().sum();
    let valid_b: Vec<f64> = accums
        .iter()
        .map(|a| a.counts.iter().sum::<u64>() as f64)
        .collect();
    let mut indicator = vec![vec![0.0; dim]; dim];
    let mut indicator_se = vec![vec![0.0; dim]; dim];
    let mut conditional = vec![vec![0.0; dim]; dim];
    let mut conditional_se = vec![vec![0.0; dim]; dim];
    for m in 0..dim {
        let counts_b: Vec<f64> = accums.iter().map(|a| a.counts[m] as f64).collect();
        for j in 0..dim {
            let err_b: Vec<f64> = accums.iter().map(|a| a.err[m][j]).collect();
            indicator[m][j] = if valid > 0 {
                total.err[m][j] / valid as f64
            } else {
                f64::NAN
            };
            indicator_se[m][j] = jackknife_ratio_se(&err_b, &valid_b);
            if total.counts[m] > 0 {
                conditional[m][j] = total.err[m][j] / total.counts[m] as f64;
                conditional_se[m][j] = jackknife_ratio_se(&err_b, &counts_b);
            } else {
                conditional[m][j] = f64::NAN;
                conditional_se[m][j] = f64::NAN;
            }
        }
    }
    PsiBiasReport {
        counts: total.counts,
        indicator,
        indicator_se,
        conditional,
        conditional_se,
    }
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// Canned experiment configurations reproducing the study's figures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Uniform two-population study: ML vs MVU vs the
    /// unbiased-under-selection estimator across sample sizes.
    Fig3Uniform,
    /// Relative-bound surface ζ(Δ, κ) over the gap and variance grid.
    Fig4ZetaSurface,
    /// Gaussian two-population study: ML vs budgeted PSML iterations vs the
    /// one-step corrected ML across sample sizes.
    Fig56Gaussian,
    /// Exponential single-sample study: ML vs closed-form PSML against the
    /// exact bound, sweeping the second population's mean.
    Fig78Exponential,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Fig3Uniform,
        Preset::Fig4ZetaSurface,
        Preset::Fig56Gaussian,
        Preset::Fig78Exponential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig3Uniform => "fig3_uniform",
            Preset::Fig4ZetaSurface => "fig4_zeta_surface",
            Preset::Fig56Gaussian => "fig56_gaussian",
            Preset::Fig78Exponential => "fig78_exponential",
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// Options shared by all presets.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PresetOptions {
    /// Cut replications by 10× for quick runs.
    pub fast: bool,
    /// Override the preset's default seed.
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    pub workers: usize,
}

/// The ζ(Δ, κ) surface evaluated on a grid (no simulation involved).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZetaSurface {
    /// Standardized gaps Δ.
    pub deltas: Vec<f64>,
    /// First-population noise variances; κ = σ₁²/(σ₁² + σ₂²).
    pub sigma1_sqs: Vec<f64>,
    /// Second-population noise variance held fixed.
    pub sigma2_sq: f64,
    /// Samples per population the surface is quoted for (context only —
    /// ζ itself depends only on Δ and κ).
    pub samples_per_population: usize,
    /// `values[i][j]` = ζ(deltas[i], κ(sigma1_sqs[j])).
    pub values: Vec<Vec<f64>>,
}

/// What a preset produces.
#[derive(Clone, Debug, PartialEq)]
pub enum PresetOutput {
    Summary(McSummary),
    Surface(ZetaSurface),
}

/// The experiment configuration behind a preset (`None` for the closed-form
/// surface preset, which simulates nothing).
pub fn preset_experiment_config(preset: Preset, fast: bool) -> Option<ExperimentConfig> {
    let scale = |r: u64| if fast { r / 10 } else { r };
    let parse = |names: &[&str]| -> Vec<EstimatorSpec> {
        names
            .iter()
            .map(|n| n.parse().expect("preset estimator identifiers are valid"))
            .collect()
    };
    match preset {
        Preset::Fig3Uniform => Some(ExperimentConfig {
            model: ModelSpec::uniform(2, 1).expect("valid preset model"),
            theta_true: vec![10.0, 10.2],
            rule: SelectionRule::Sms,
            estimators: parse(&["ml", "mvu", "uv"]),
            replications: scale(250_000),
            seed: None,
            sweep: Some(SweepAxis::SampleSize {
                grid: (1..=10).collect(),
            }),
        }),
        Preset::Fig4ZetaSurface => None,
        Preset::Fig56Gaussian => Some(ExperimentConfig {
            model: ModelSpec::gaussian(2, 10, vec![1.0, 0.1]).expect("valid preset model"),
            theta_true: vec![0.0, 0.1],
            rule: SelectionRule::Sms,
            estimators: parse(&["ml", "psml_nr:1", "mbp:1"]),
            replications: scale(20_000),
            seed: None,
            sweep: Some(SweepAxis::SampleSize {
                grid: vec![1, 2, 5, 10, 20, 50],
            }),
        }),
        Preset::Fig78Exponential => Some(ExperimentConfig {
            model: ModelSpec::exponential(2, 1).expect("valid preset model"),
            theta_true: vec![5.0, 5.0],
            rule: SelectionRule::Sms,
            estimators: parse(&["ml", "psml_closed"]),
            replications: scale(100_000),
            seed: None,
            sweep: Some(SweepAxis::ThetaComponent {
                component: 2,
                grid: (1..=9).map(f64::from).collect(),
            }),
        }),
    }
}

/// Run a preset end to end.
pub fn run_preset(preset: Preset, options: &PresetOptions) -> Result<PresetOutput> {
    match preset_experiment_config(preset, options.fast) {
        Some(mut config) => {
            config.seed = options.seed.or(config.seed);
            Ok(PresetOutput::Summary(run_experiment(
                &config,
                options.workers,
            )?))
        }
        None => Ok(PresetOutput::Surface(zeta_surface())),
    }
}

/// The closed-form relative-bound surface on the canonical grid:
/// Δ over [−5, 5] (101 points), σ₁² geometric over [0.1, 10] (41 points),
/// σ₂² = 1, quoted at N = 10.
pub fn zeta_surface() -> ZetaSurface {
    let deltas: Vec<f64> = (0..101).map(|i| -5.0 + 0.1 * i as f64).collect();
    let sigma2_sq = 1.0;
    let sigma1_sqs: Vec<f64> = (0..41)
        .map(|i| 10f64.powf(-1.0 + i as f64 * 0.05))
        .collect();
    let values = deltas
        .iter()
        .map(|&d| {
            sigma1_sqs
                .iter()
                .map(|&s1| bounds::zeta_factor(d, s1 / (s1 + sigma2_sq)))
                .collect()
        })
        .collect();
    ZetaSurface {
        deltas,
        sigma1_sqs,
        sigma2_sq,
        samples_per_population: 10,
        values,
    }
}
