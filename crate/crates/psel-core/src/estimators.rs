//! Point estimators under data-driven selection.
//!
//! All estimators take the realized selected index `m` — callers apply the
//! selection rule once per dataset and pass the outcome down, so every
//! estimator sees exactly the selection event that occurred.
//!
//! The post-selection maximum-likelihood (PSML) estimate maximizes the
//! conditional log-likelihood log f(x; θ) − log Pr(Ψ=m; θ). Solvers:
//!
//! - [`psml_newton_raphson`]: damped Newton on the exact conditional
//!   objective (observed Hessian of log f minus ∇²log Pr),
//! - [`psml_fisher_scoring`]: same update with the expected (post-selection)
//!   information in place of the observed curvature,
//! - [`psml_grid_search`]: box grid plus iterated per-coordinate
//!   golden-section refinement — derivative-free reference solver,
//! - [`psml_gaussian_closed`] / [`psml_exponential_closed`]: reductions of
//!   the stationarity system to one scalar root,
//! - [`psml_mbp`]: fixed-point iteration that repeatedly corrects the ML
//!   estimate by the selection-probability gradient (exact per-family maps
//!   or relaxed Newton/Fisher updates that drop the selection curvature),
//! - [`ipsml`]: the simulation-based variant for models without an analytic
//!   ∇log Pr, using finite-difference Monte-Carlo gradients.
//!
//! Non-convergence within the iteration budget is reported through
//! [`EstimateResult::converged`], not as an error: iteration-capped variants
//! (for example `mbp:1`) are legitimate estimators in their own right.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bounds::analytic_conditional_bias;
use crate::error::{Error, Result};
use crate::mat::{inf_norm, Matrix};
use crate::model::{Family, ModelSpec, ObservationSet};
use crate::rng;
use crate::selection::{self, SelectionRule};
use crate::special::mills_ratio;

// ---------------------------------------------------------------------------
// Configuration and results
// ---------------------------------------------------------------------------

/// Starting point for iterative solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initializer {
    /// Start from the (unconditional) maximum-likelihood estimate.
    Ml,
    /// Start from an explicit in-domain parameter vector.
    Custom(Vec<f64>),
}

/// Shared knobs for the iterative PSML solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Iteration budget. Hitting it is not an error; the result is returned
    /// with `converged = false`.
    pub max_iterations: usize,
    /// Convergence test: ∞-norm of the post-selection score.
    pub score_tolerance: f64,
    /// Initial step scale; halved whenever a step would decrease the
    /// conditional log-likelihood or leave the parameter domain.
    pub step_damping: f64,
    /// Where iteration starts.
    pub initializer: Initializer,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 200,
            score_tolerance: 1e-10,
            step_damping: 1.0,
            initializer: Initializer::Ml,
        }
    }
}

impl SolverConfig {
    fn capped(iterations: Option<usize>) -> Self {
        SolverConfig {
            max_iterations: iterations.unwrap_or(SolverConfig::default().max_iterations),
            ..SolverConfig::default()
        }
    }
}

/// A point estimate together with solver diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    /// The estimate, one entry per population.
    pub theta_hat: Vec<f64>,
    /// Selected index the estimate conditions on (0-based).
    pub m: usize,
    /// Estimator identifier (e.g. `"psml_nr"`, `"mbp:1"`).
    pub method: String,
    /// Iterations actually performed (0 when the initializer already
    /// satisfies the stationarity test).
    pub iterations: usize,
    /// ∞-norm of the post-selection score at `theta_hat`, where defined.
    pub final_score_norm: Option<f64>,
    /// Whether the solver met its stopping criterion within the budget.
    pub converged: bool,
}

// ---------------------------------------------------------------------------
// Estimator identifiers
// ---------------------------------------------------------------------------

/// Estimator families the dispatcher knows how to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Ml,
    Mvu,
    /// The augmented-statistic unbiased-under-selection estimator.
    Uv,
    PsmlGrid,
    PsmlNewton,
    PsmlFisher,
    PsmlClosed,
    MbpExact,
    MbpNewton,
    MbpFisher,
    Ipsml,
}

impl EstimatorKind {
    fn name(self) -> &'static str {
        match self {
            EstimatorKind::Ml => "ml",
            EstimatorKind::Mvu => "mvu",
            EstimatorKind::Uv => "uv",
            EstimatorKind::PsmlGrid => "psml_grid",
            EstimatorKind::PsmlNewton => "psml_nr",
            EstimatorKind::PsmlFisher => "psml_fs",
            EstimatorKind::PsmlClosed => "psml_closed",
            EstimatorKind::MbpExact => "mbp",
            EstimatorKind::MbpNewton => "mbp_nr",
            EstimatorKind::MbpFisher => "mbp_fs",
            EstimatorKind::Ipsml => "ipsml",
        }
    }
}

/// A parsed estimator identifier: a kind plus an optional iteration cap,
/// written `name` or `name:cap` (e.g. `"mbp:1"` for the one-step corrected
/// ML estimate).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub iteration_cap: Option<usize>,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind) -> Self {
        EstimatorSpec {
            kind,
            iteration_cap: None,
        }
    }

    pub fn with_cap(kind: EstimatorKind, cap: usize) -> Self {
        EstimatorSpec {
            kind,
            iteration_cap: Some(cap),
        }
    }
}

impl FromStr for EstimatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, cap) = match s.split_once(':') {
            Some((name, cap)) => {
                let cap: usize = cap.parse().map_err(|_| {
                    Error::UnknownEstimator(format!("bad iteration cap in {s:?}"))
                })?;
                if cap == 0 {
                    return Err(Error::UnknownEstimator(format!(
                        "iteration cap must be positive in {s:?}"
                    )));
                }
                (name, Some(cap))
            }
            None => (s, None),
        };
        let kind = match name {
            "ml" => EstimatorKind::Ml,
            "mvu" => EstimatorKind::Mvu,
            "uv" => EstimatorKind::Uv,
            "psml_grid" => EstimatorKind::PsmlGrid,
            "psml_nr" => EstimatorKind::PsmlNewton,
            "psml_fs" => EstimatorKind::PsmlFisher,
            "psml_closed" => EstimatorKind::PsmlClosed,
            "mbp" => EstimatorKind::MbpExact,
            "mbp_nr" => EstimatorKind::MbpNewton,
            "mbp_fs" => EstimatorKind::MbpFisher,
            "ipsml" => EstimatorKind::Ipsml,
            _ => return Err(Error::UnknownEstimator(s.to_string())),
        };
        Ok(EstimatorSpec {
            kind,
            iteration_cap: cap,
        })
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.iteration_cap {
            Some(cap) => write!(f, "{}:{cap}", self.kind.name()),
            None => write!(f, "{}", self.kind.name()),
        }
    }
}

impl TryFrom<String> for EstimatorSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EstimatorSpec> for String {
    fn from(spec: EstimatorSpec) -> String {
        spec.to_string()
    }
}

// ---------------------------------------------------------------------------
// Baseline estimators
// ---------------------------------------------------------------------------

/// Unconditional maximum-likelihood estimate (per-population sample means,
/// or maxima for the uniform family).
pub fn ml(model: &ModelSpec, obs: &ObservationSet, m: usize) -> Result<EstimateResult> {
    check_selected(model, m)?;
    Ok(EstimateResult {
        theta_hat: model.ml_estimate(obs)?,
        m,
        method: "ml".into(),
        iterations: 0,
        final_score_norm: None,
        converged: true,
    })
}

/// Minimum-variance unbiased estimate ignoring selection: (N+1)/N times the
/// maximum for the uniform family; identical to ML for the Gaussian and
/// exponential families, where the sample mean is already the MVU estimator.
pub fn mvu(model: &ModelSpec, obs: &ObservationSet, m: usize) -> Result<EstimateResult> {
    check_selected(model, m)?;
    let theta_hat = match model.family() {
        Family::Uniform => model.mvu_uniform(obs)?,
        Family::Gaussian | Family::Exponential => model.ml_estimate(obs)?,
    };
    Ok(EstimateResult {
        theta_hat,
        m,
        method: "mvu".into(),
        iterations: 0,
        final_score_norm: None,
        converged: true,
    })
}

/// The unbiased-under-selection estimator built by augmenting the selected
/// population's unbiased estimate with a term in the competing population's
/// statistic, killing the selected-component conditional bias exactly.
///
/// Two-population SMS only. For the uniform family the base estimates are
/// the MVU values u_j and the selected slot becomes
/// u_m − u_kᴺ/((N+1)·u_mᴺ⁻¹); for the exponential family the base estimates
/// are the sample means and the selected slot becomes ȳ_m − ȳ_kᴺ/ȳ_mᴺ⁻¹.
/// Unselected slots keep the base estimate.
pub fn uv_estimate(model: &ModelSpec, obs: &ObservationSet, m: usize) -> Result<EstimateResult> {
    check_selected(model, m)?;
    if model.populations() != 2 {
        return Err(Error::UnsupportedAnalytic(
            "the unbiased-under-selection estimator covers two populations".into(),
        ));
    }
    let k = 1 - m;
    let n = model.samples_per_population() as i32;
    let theta_hat = match model.family() {
        Family::Uniform => {
            let u = model.mvu_uniform(obs)?;
            let mut t = u.clone();
            t[m] = u[m] - u[k].powi(n) / (f64::from(n) + 1.0) / u[m].powi(n - 1);
            t
        }
        Family::Exponential => {
            let base = model.ml_estimate(obs)?;
            let mut t = base.clone();
            t[m] = base[m] - base[k].powi(n) / base[m].powi(n - 1);
            t
        }
        Family::Gaussian => {
            return Err(Error::UnsupportedAnalytic(
                "no augmented-statistic unbiased estimator is implemented for the \
                 Gaussian family"
                    .into(),
            ))
        }
    };
    Ok(EstimateResult {
        theta_hat,
        m,
        method: "uv".into(),
        iterations: 0,
        final_score_norm: None,
        converged: true,
    })
}

fn check_selected(model: &ModelSpec, m: usize) -> Result<()> {
    if m >= model.populations() {
        return Err(Error::DimensionMismatch(format!(
            "selected index {m} out of range for {} populations",
            model.populations()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// The conditional likelihood and its derivatives
// ---------------------------------------------------------------------------

/// Conditional log-likelihood log f(x; θ) − log Pr(Ψ=m; θ).
///
/// Returns `-inf` for out-of-domain θ and for θ under which the observed
/// selection event has zero probability (where conditioning is undefined);
/// both make rejected line-search steps compare as worse than any finite
/// objective value.
pub fn psml_objective(
    model: &ModelSpec,
    rule: &SelectionRule,
    theta: &[f64],
    obs: &ObservationSet,
    m: usize,
) -> Result<f64> {
    if theta.len() != model.populations() {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries, model has {} populations",
            theta.len(),
            model.populations()
        )));
    }
    if !model.theta_in_domain(theta) {
        return Ok(f64::NEG_INFINITY);
    }
    let log_pr = selection::log_selection_probability(model, rule, theta, m)?;
    if log_pr == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(model.log_likelihood(theta, obs)? - log_pr)
}

/// Post-selection score ∇log f(x; θ) − ∇log Pr(Ψ=m; θ).
pub fn psml_score(
    model: &ModelSpec,
    rule: &SelectionRule,
    theta: &[f64],
    obs: &ObservationSet,
    m: usize,
) -> Result<Vec<f64>> {
    let mut s = model.score(theta, obs)?;
    let g = selection::grad_log_selection_probability(model, rule, theta, m)?;
    for (si, gi) in s.iter_mut().zip(&g) {
        *si -= gi;
    }
    Ok(s)
}

/// Expected post-selection information used by Fisher scoring:
/// −E[∇²log f | Ψ=m] + ∇²log Pr, assembled analytically.
///
/// Randomized rules give the classical information. The Gaussian SMS case is
/// exact (the Hessian of log f is data-free); the exponential SMS case uses
/// the analytic conditional means of the sufficient statistics and the
/// finite-difference curvature of log Pr.
pub(crate) fn expected_information(
    model: &ModelSpec,
    rule: &SelectionRule,
    theta: &[f64],
    m: usize,
) -> Result<Matrix> {
    match rule {
        SelectionRule::Randomized { .. } => model.fim(theta),
        SelectionRule::Sms => match model.family() {
            Family::Gaussian => {
                let mut j = model.fim(theta)?;
                let sel =
                    selection::hessian_log_selection_probability(model, rule, theta, m)?;
                j.add_scaled(&sel, 1.0);
                Ok(j)
            }
            Family::Exponential => {
                // −E[∂²log f/∂θ_j² | m] = N·(θ_j + 2·E[ȳ_j−θ_j | m])/θ_j³.
                let bias = analytic_conditional_bias(model, rule, theta)?;
                let n = model.samples_per_population() as f64;
                let dim = model.populations();
                let mut j = selection::sel_hessian_or_fd(model, rule, theta, m)?;
                for l in 0..dim {
                    j[(l, l)] += n * (theta[l] + 2.0 * bias[(m, l)]) / theta[l].powi(3);
                }
                Ok(j)
            }
            Family::Uniform => Err(Error::NonRegularFamily(
                "uniform family has no Fisher information".into(),
            )),
        },
    }
}

// ---------------------------------------------------------------------------
// Newton-type solvers
// ---------------------------------------------------------------------------

/// Damped Newton-Raphson on the conditional log-likelihood: curvature is the
/// observed −∇²log f + ∇²log Pr.
pub fn psml_newton_raphson(
    model: &ModelSpec,
    rule: &SelectionRule,
    obs: &ObservationSet,
    m: usize,
    config: &SolverConfig,
) -> Result<EstimateResult> {
    drive_newton(model, rule, obs, m, config, "psml_nr", |theta| {
        let mut k = model.hessian(theta, obs)?;
        k.scale(-1.0);
        let sel = selection::sel_hessian_or_fd(model, rule, theta, m)?;
        k.add_scaled(&sel, 1.0);
        Ok(k)
    })
}

/// Fisher scoring on the conditional log-likelihood: curvature is the
/// expected post-selection information. For the Gaussian family the observed
/// and expected curvatures coincide, so this reproduces
/// [`psml_newton_raphson`] step for step.
pub fn psml_fisher_scoring(
    model: &ModelSpec,
    rule: &SelectionRule,
    obs: &ObservationSet,
    m: usize,
    config: &SolverConfig,
) -> Result<EstimateResult> {
    drive_newton(model, rule, obs, m, config, "psml_fs", |theta| {
        expected_information(model, rule, theta, m)
    })
}

fn initial_point(
    model: &ModelSpec,
    obs: &ObservationSet,
    initializer: &Initializer,
) -> Result<Vec<f64>> {
    match initializer {
        Initializer::Ml => model.ml_estimate(obs),
        Initializer::Custom(theta) => {
            model.check_theta(theta)?;
            Ok(theta.clone())
        }
    }
}

fn stepped(theta: &[f64], direction: &[f64], step: f64) -> Vec<f64> {
    theta
        .iter()
        .zip(direction)
        .map(|(t, d)| t + step * d)
        .collect()
}

/// Shared damped-Newton loop. `curvature` returns the positive-definite
/// matrix K with update direction K·d = post-selection score.
fn drive_newton(
    model: &ModelSpec,
    rule: &SelectionRule,
    obs: &ObservationSet,
    m: usize,
    config: &SolverConfig,
    method: &str,
    mut curvature: impl FnMut(&[f64]) -> Result<Matrix>,
) -> Result<EstimateResult> {
    check_selected(model, m)?;
    let mut theta = initial_point(model, obs, &config.initializer)?;
    let mut objective = psml_objective(model, rule, &theta, obs, m)?;
    let mut best = (theta.clone(), objective);
    for iteration in 0..config.max_iterations {
        let score = psml_score(model, rule, &theta, obs, m)?;
        let norm = inf_norm(&score);
        if norm <= config.score_tolerance {
            return Ok(EstimateResult {
                theta_hat: theta,
                m,
                method: method.into(),
                iterations: iteration,
                final_score_norm: Some(norm),
                converged: true,
            });
        }
        let k = curvature(&theta)?;
        let direction = k
            .solve(&score)
            .ok_or(Error::SingularHessian { iteration })?;
        // Backtrack until the conditional log-likelihood does not decrease.
        let mut step = config.step_damping;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = stepped(&theta, &direction, step);
            if model.theta_in_domain(&candidate) {
                let cand_obj = psml_objective(model, rule, &candidate, obs, m)?;
                if cand_obj.is_finite()
                    && cand_obj >= objective - 1e-12 * (1.0 + objective.abs())
                {
                    theta = candidate;
                    objective = cand_obj;
                    if cand_obj > best.1 {
                        best = (theta.clone(), cand_obj);
                    }
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            // No admissible step left: report the best iterate, unconverged.
            let norm = inf_norm(&psml_score(model, rule, &best.0, obs, m)?);
            return Ok(EstimateResult {
                theta_hat: best.0,
                m,
                method: method.into(),
                iterations: iteration + 1,
                final_score_norm: Some(norm),
                converged: false,
            });
        }
    }
    let norm = inf_norm(&psml_score(model, rule, &best.0, obs, m)?);
    Ok(EstimateResult {
        theta_hat: best.0,
        m,
        method: method.into(),
        iterations: config.max_iterations,
        final_score_norm: Some(norm),
        converged: false,
    })
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

/// Search box and refinement policy for [`psml_grid_search`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Per-coordinate lower box edges.
    pub lower: Vec<f64>,
    /// Per-coordinate upper box edges.
    pub upper: Vec<f64>,
    /// Points per dimension in the initial coarse grid.
    pub points_per_dim: usize,
    /// Cap on coordinate-refinement sweeps after the coarse pass.
    pub max_refinements: usize,
    /// Convergence test: largest coordinate move in one sweep.
    pub tolerance: f64,
}

impl GridConfig {
    /// A coarse 41-per-dim grid over `[lower, upper]` refined to 1e-9.
    pub fn over(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        GridConfig {
            lower,
            upper,
            points_per_dim: 41,
            max_refinements: 60,
            tolerance: 1e-9,
        }
    }
}

/// Derivative-free PSML solver: evaluate the conditional log-likelihood on a
/// box grid, then refine the best cell with repeated per-coordinate
/// golden-section sweeps until the iterate stops moving.
///
/// A final point pinned to the box boundary is reported `converged = false`
/// (the maximizer most likely lies outside the box).
pub fn psml_grid_search(
    model: &ModelSpec,
    rule: &SelectionRule,
    obs: &ObservationSet,
    m: usize,
    config: &GridConfig,
) -> Result<EstimateResult> {
    check_selected(model, m)?;
    let dim = model.populations();
    if config.lower.len() != dim || config.upper.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "grid box must have {dim} coordinates"
        )));
    }
    if config.points_per_dim < 4 {
        return Err(Error::InvalidConfig(
            "grid search needs at least 4 points per dimension".into(),
        ));
    }
    for (lo, hi) in config.lower.iter().zip(&config.upper) {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidConfig(format!(
                "bad grid interval [{lo}, {hi}]"
            )));
        }
    }

    // Coarse pass over the full box.
    let p = config.points_per_dim;
    let spacing: Vec<f64> = config
        .lower
        .iter()
        .zip(&config.upper)
        .map(|(lo, hi)| (hi - lo) / (p - 1) as f64)
        .collect();
    let mut best_point = vec![0.0; dim];
    let mut best_value = f64::NEG_INFINITY;
    let mut index = vec![0usize; dim];
    'grid: loop {
        let point: Vec<f64> = index
            .iter()
            .zip(&config.lower)
            .zip(&spacing)
            .map(|((&i, lo), h)| lo + i as f64 * h)
            .collect();
        let value = psml_objective(model, rule, &point, obs, m)?;
        if value > best_value {
            best_value = value;
            best_point = point;
        }
        // Odometer increment over the dim-dimensional index.
        for slot in &mut index {
            *slot += 1;
            if *slot < p {
                continue 'grid;
            }
            *slot = 0;
        }
        break;
    }
    if best_value == f64::NEG_INFINITY {
        return Err(Error::InvalidConfig(
            "conditional log-likelihood is -inf on the whole grid box".into(),
        ));
    }

    // Per-coordinate golden-section sweeps around the incumbent, each
    // followed by a line search along the sweep's total displacement
    // (Powell-style acceleration). Pure coordinate descent stalls far from
    // the maximizer when the components are strongly coupled, as they are
    // for very negative standardized gaps.
    let mut point = best_point;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < config.max_refinements {
        sweeps += 1;
        let sweep_start = point.clone();
        let mut largest_move: f64 = 0.0;
        for d in 0..dim {
            let a = (point[d] - spacing[d]).max(config.lower[d]);
            let b = (point[d] + spacing[d]).min(config.upper[d]);
            let refined = golden_section(a, b, |t| {
                let mut candidate = point.clone();
                candidate[d] = t;
                psml_objective(model, rule, &candidate, obs, m)
            })?;
            largest_move = largest_move.max((refined - point[d]).abs());
            point[d] = refined;
        }
        let displacement: Vec<f64> = point
            .iter()
            .zip(&sweep_start)
            .map(|(now, before)| now - before)
            .collect();
        if displacement.iter().any(|step| step.abs() > 0.0) {
            // Search start + t·displacement for t in [-1, 3] clipped to the
            // box (t = 1 is the sweep's own endpoint and always inside).
            let mut t_lo: f64 = -1.0;
            let mut t_hi: f64 = 3.0;
            for d in 0..dim {
                let step = displacement[d];
                if step == 0.0 {
                    continue;
                }
                let to_lower = (config.lower[d] - sweep_start[d]) / step;
                let to_upper = (config.upper[d] - sweep_start[d]) / step;
                let (lo, hi) = if step > 0.0 {
                    (to_lower, to_upper)
                } else {
                    (to_upper, to_lower)
                };
                t_lo = t_lo.max(lo);
                t_hi = t_hi.min(hi);
            }
            if t_hi - t_lo > 1e-12 {
                let along = |t: f64| -> Vec<f64> {
                    sweep_start
                        .iter()
                        .zip(&displacement)
                        .map(|(start, step)| start + t * step)
                        .collect()
                };
                let t = golden_section(t_lo, t_hi, |t| {
                    psml_objective(model, rule, &along(t), obs, m)
                })?;
                let candidate = along(t);
                // The slice need not be unimodal; only accept improvements.
                if psml_objective(model, rule, &candidate, obs, m)?
                    > psml_objective(model, rule, &point, obs, m)?
                {
                    for d in 0..dim {
                        largest_move = largest_move.max((candidate[d] - point[d]).abs());
                        point[d] = candidate[d];
                    }
                }
            }
        }
        if largest_move < config.tolerance {
            converged = true;
            break;
        }
    }
    // A maximizer sitting on the box edge means the box clipped it.
    let boundary = point.iter().enumerate().any(|(d, &x)| {
        x - config.lower[d] < 2.0 * config.tolerance
            || config.upper[d] - x < 2.0 * config.tolerance
    });
    let score_norm = psml_score(model, rule, &point, obs, m)
        .ok()
        .map(|s| inf_norm(&s));
    // `converged` keeps the strict contract (score residual at tolerance);
    // grid refinement usually stalls at its objective-evaluation noise floor
    // (~1e-7 score norm) and then reports the stalled point unconverged.
    let score_ok = score_norm.is_some_and(|s| s <= SolverConfig::default().score_tolerance);
    Ok(EstimateResult {
        theta_hat: point,
        m,
        method: "psml_grid".into(),
        iterations: sweeps,
        final_score_norm: score_norm,
        converged: converged && !boundary && score_ok,
    })
}

/// Golden-section maximization of a unimodal slice on [a, b].
fn golden_section(a: f64, b: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (a, b);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..90 {
        if b - a < 1e-12 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

// ---------------------------------------------------------------------------
// Fixed-point (corrected-ML) iteration
// ---------------------------------------------------------------------------

/// Which fixed-point map [`psml_mbp`] iterates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MbpVariant {
    /// Solve ∇log f(x; θ′) = ∇log Pr(Ψ=m; θ) for θ′ exactly per family
    /// (Gaussian: θ′ = θ̂ML − Σ·g(θ)/N; exponential: a per-component
    /// quadratic).
    Exact,
    /// One classical Newton step toward that solve:
    /// θ′ = θ + (−∇²log f)⁻¹·(post-selection score).
    NewtonRelaxed,
    /// Same with the classical Fisher information as curvature.
    FisherRelaxed,
}

impl MbpVariant {
    fn name(self) -> &'static str {
        match self {
            MbpVariant::Exact => "mbp",
            MbpVariant::NewtonRelaxed => "mbp_nr",
            MbpVariant::FisherRelaxed => "mbp_fs",
        }
    }
}

/// Fixed-point PSML iteration: repeatedly replace the data term of the ML
/// equations with the selection-gradient correction evaluated at the current
/// iterate. One `Exact` step from the ML start is the closed-form
/// "corrected ML" estimate; iterating to stationarity solves the full PSML
/// system when the information dominates the selection curvature.
///
/// Divergence — an iterate whose ∞-norm exceeds 1000·max(‖θ⁰‖∞, 1), an
/// iterate outside the parameter domain, or (exponential `Exact`) a
/// component quadratic with no real root — is reported as
/// [`Error::InformationDominanceViolated`]: the contraction condition backing
/// the iteration does not hold at this sample.
pub fn psml_mbp(
    model: &ModelSpec,
    rule: &SelectionRule,
    obs: &ObservationSet,
    m: usize,
    variant: MbpVariant,
    config: &SolverConfig,
) -> Result<EstimateResult> {
    check_selected(model, m)?;
    let ml_hat = model.ml_estimate(obs)?;
    let mut theta = match &config.initializer {
        Initializer::Ml => ml_hat.clone(),
        Initializer::Custom(t) => {
            model.check_theta(t)?;
            t.clone()
        }
    };
    let limit = 1e3 * inf_norm(&theta).max(1.0);
    let n = model.samples_per_population() as f64;
    for iteration in 0..config.max_iterations {
        let score = psml_score(model, rule, &theta, obs, m)?;
        let norm = inf_norm(&score);
        if norm <= config.score_tolerance {
            return Ok(EstimateResult {
                theta_hat: theta,
                m,
                method: variant.name().into(),
                iterations: iteration,
                final_score_norm: Some(norm),
                converged: true,
            });
        }
        let g = selection::grad_log_selection_probability(model, rule, &theta, m)?;
        let next = match variant {
            MbpVariant::Exact => match model.family() {
                Family::Gaussian => {
                    let vars = model.noise_variances().expect("gaussian model");
                    ml_hat
                        .iter()
                        .zip(vars)
                        .zip(&g)
                        .map(|((ml_j, var), g_j)| ml_j - var * g_j / n)
                        .collect::<Vec<f64>>()
                }
                Family::Exponential => {
                    let mut next = Vec::with_capacity(theta.len());
                    for (ml_j, g_j) in ml_hat.iter().zip(&g) {
                        if g_j.abs() < 1e-14 {
                            next.push(*ml_j);
                            continue;
                        }
                        // N(ȳ_j − θ)/θ² = g_j  ⇔  g_j·θ² + N·θ − N·ȳ_j = 0.
                        let discriminant = n * n + 4.0 * g_j * n * ml_j;
                        if discriminant < 0.0 {
                            return Err(Error::InformationDominanceViolated {
                                norm: f64::INFINITY,
                                limit,
                                iteration,
                            });
                        }
                        next.push((-n + discriminant.sqrt()) / (2.0 * g_j));
                    }
                    next
                }
                Family::Uniform => {
                    return Err(Error::NonRegularFamily(
                        "uniform family has no likelihood equations to correct".into(),
                    ))
                }
            },
            MbpVariant::NewtonRelaxed => {
                let mut k = model.hessian(&theta, obs)?;
                k.scale(-1.0);
                let d = k
                    .solve(&score)
                    .ok_or(Error::SingularHessian { iteration })?;
                stepped(&theta, &d, 1.0)
            }
            MbpVariant::FisherRelaxed => {
                let k = model.fim(&theta)?;
                let d = k
                    .solve(&score)
                    .ok_or(Error::SingularHessian { iteration })?;
                stepped(&theta, &d, 1.0)
            }
        };
        let next_norm = inf_norm(&next);
        if next_norm > limit || !model.theta_in_domain(&next) {
            return Err(Error::InformationDominanceViolated {
                norm: next_norm,
                limit,
                iteration,
            });
        }
        theta = next;
    }
    let norm = inf_norm(&psml_score(model, rule, &theta, obs, m)?);
    Ok(EstimateResult {
        theta_hat: theta,
        m,
        method: variant.name().into(),
        iterations: config.max_iterations,
        final_score_norm: Some(norm),
        converged: false,
    })
}

// ---------------------------------------------------------------------------
// Closed-form PSML solvers
// ---------------------------------------------------------------------------

/// Closed-form PSML for the two-population Gaussian SMS case.
///
/// The stationarity system reduces to one scalar equation in the
/// standardized gap Δ: Δ + φ(Δ)/Φ(Δ) = Δ̂ML, whose left side increases
/// strictly from 0 to ∞, so a unique root Δ̂ exists for any positive
/// observed gap. The estimate is then
/// θ̂_m = θ̂ML_m − σ_m²/(Nσ)·φ(Δ̂)/Φ(Δ̂) and
/// θ̂_k = θ̂ML_k + σ_k²/(Nσ)·φ(Δ̂)/Φ(Δ̂).
pub fn psml_gaussian_closed(
    model: &ModelSpec,
    obs: &ObservationSet,
    m: usize,
) -> Result<EstimateResult> {
    check_selected(model, m)?;
    if model.family() != Family::Gaussian || model.populations() != 2 {
        return Err(Error::UnsupportedAnalytic(
            "closed-form PSML covers the two-population Gaussian SMS case".into(),
        ));
    }
    let k = 1 - m;
    let ml_hat = model.ml_estimate(obs)?;
    let vars = model.noise_variances().expect("gaussian model");
    let n = model.samples_per_population() as f64;
    let sigma = ((vars[0] + vars[1]) / n).sqrt();
    let delta_ml = (ml_hat[m] - ml_hat[k]) / sigma;
    if delta_ml < 0.0 {
        return Err(Error::InvalidData(
            "selected index is not the sample-mean argmax".into(),
        ));
    }
    if delta_ml == 0.0 {
        return Err(Error::Degenerate(
            "tied sample means leave the standardized-gap equation without a root".into(),
        ));
    }
    let (delta_hat, iterations) = solve_gap_equation(delta_ml);
    let correction = mills_ratio(delta_hat) / (n * sigma);
    let mut theta_hat = ml_hat;
    theta_hat[m] -= vars[m] * correction;
    theta_hat[k] += vars[k] * correction;
    let norm = psml_score(model, &SelectionRule::Sms, &theta_hat, obs, m)
        .ok()
        .map(|s| inf_norm(&s));
    Ok(EstimateResult {
        theta_hat,
        m,
        method: "psml_closed".into(),
        iterations,
        final_score_norm: norm,
        converged: true,
    })
}

/// Solve Δ + φ(Δ)/Φ(Δ) = target (target > 0) by bisection; the left side is
/// strictly increasing with range (0, ∞).
fn solve_gap_equation(target: f64) -> (f64, usize) {
    let gap = |delta: f64| delta + mills_ratio(delta) - target;
    // The left side exceeds its identity part, so the root lies below the
    // target; expand downward until the sign flips.
    let mut hi = target;
    let mut step = 1.0;
    let mut lo = hi - step;
    let mut expansions = 0;
    while gap(lo) > 0.0 && expansions < 200 {
        step *= 2.0;
        lo -= step;
        expansions += 1;
    }
    let mut iterations = expansions;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // interval no longer splits at f64 resolution
        }
        iterations += 1;
        if gap(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-15 * (1.0 + hi.abs().max(lo.abs())) {
            break;
        }
    }
    (0.5 * (lo + hi), iterations)
}

/// Closed-form PSML for the two-population exponential SMS case.
///
/// The stationarity system pins the selected-fraction
/// q = θ̂_m/(θ̂_m + θ̂_k). With N=1 the root is rational in the data:
/// θ̂_m = y_m − y_k, θ̂_k = y_k(y_m − y_k)/(y_m − 2y_k), defined for any
/// y_m > y_k except y_m = 2y_k; when y_m < 2y_k the unselected component
/// is negative (formal stationary value — there is no interior maximum).
/// For N ≥ 2 the scalar equation is solved by a descending scan plus
/// bisection; when no interior root exists (nearly tied means) the
/// conditional likelihood increases toward the boundary θ_unselected → ∞
/// and [`Error::FixedPointNotBracketed`] is returned.
pub fn psml_exponential_closed(
    model: &ModelSpec,
    obs: &ObservationSet,
    m: usize,
) -> Result<EstimateResult> {
    check_selected(model, m)?;
    if model.family() != Family::Exponential || model.populations() != 2 {
        return Err(Error::UnsupportedAnalytic(
            "closed-form PSML covers the two-population exponential SMS case".into(),
        ));
    }
    let k = 1 - m;
    let ml_hat = model.ml_estimate(obs)?;
    let (y_m, y_k) = (ml_hat[m], ml_hat[k]);
    if y_m < y_k {
        return Err(Error::InvalidData(
            "selected index is not the sample-mean argmax".into(),
        ));
    }
    let n = model.samples_per_population();
    let (theta_hat, iterations) = if n == 1 {
        // Single-sample case: the stationarity conditions solve in closed
        // form as θ̂_m = y_m − y_k, θ̂_k = y_k(y_m − y_k)/(y_m − 2y_k), defined
        // for any y_m > y_k except y_m = 2y_k. When y_m < 2y_k the second
        // component is negative — the conditional likelihood has no interior
        // maximum there and the formal stationary values are reported as is
        // (only the selected component enters post-selection error).
        let denom = y_m - 2.0 * y_k;
        if denom == 0.0 {
            return Err(Error::Degenerate(
                "sample with y_selected exactly twice y_other has no defined root".into(),
            ));
        }
        if y_m == y_k {
            return Err(Error::Degenerate(
                "tied sample means put the closed form on the domain boundary".into(),
            ));
        }
        let mut t = vec![0.0; 2];
        t[m] = y_m - y_k;
        t[k] = y_k * (y_m - y_k) / denom;
        (t, 0)
    } else {
        let rho = y_m / y_k;
        let (q_hat, iterations) = solve_fraction_equation(rho, n)?;
        let f = selection::exp_sms_parts(q_hat, n).f;
        let mut t = vec![0.0; 2];
        t[m] = y_m / (1.0 - f);
        t[k] = y_k / (1.0 + f);
        (t, iterations)
    };
    let norm = psml_score(model, &SelectionRule::Sms, &theta_hat, obs, m)
        .ok()
        .map(|s| inf_norm(&s));
    Ok(EstimateResult {
        theta_hat,
        m,
        method: "psml_closed".into(),
        iterations,
        final_score_norm: norm,
        converged: true,
    })
}

/// Solve the exponential selected-fraction equation
/// ln(q/(1−q)) − ln ρ − ln(1+f(q)) + ln(1−f(q)) = 0 on (0, 1), scanning
/// downward from 1 for the largest sign change, then bisecting.
fn solve_fraction_equation(rho: f64, n: usize) -> Result<(f64, usize)> {
    let w = |q: f64| -> f64 {
        let f = selection::exp_sms_parts(q, n).f;
        (q / (1.0 - q)).ln() - rho.ln() - (1.0 + f).ln() + (1.0 - f).ln()
    };
    const SCAN_POINTS: usize = 4096;
    const EDGE: f64 = 1e-9;
    let mut hi = 1.0 - EDGE;
    let mut hi_val = w(hi);
    let mut bracket = None;
    for i in 1..=SCAN_POINTS {
        let q = 1.0 - EDGE - i as f64 * (1.0 - 2.0 * EDGE) / SCAN_POINTS as f64;
        let val = w(q);
        if val == 0.0 {
            return Ok((q, i));
        }
        if val.signum() != hi_val.signum() {
            bracket = Some((q, hi, i));
            break;
        }
        hi = q;
        hi_val = val;
    }
    let Some((mut lo, mut hi, scanned)) = bracket else {
        return Err(Error::FixedPointNotBracketed(format!(
            "no interior PSML root for mean ratio {rho:.6} with {n} samples; the \
             conditional likelihood increases toward the boundary"
        )));
    };
    let lo_sign = w(lo).signum();
    let mut iterations = scanned;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo < 1e-14 {
            break;
        }
        iterations += 1;
        if w(mid).signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), iterations))
}

// ---------------------------------------------------------------------------
// Simulation-based PSML (for models without an analytic ∇log Pr)
// ---------------------------------------------------------------------------

/// Configuration for [`ipsml`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpsmlConfig {
    /// Relative finite-difference step for the simulated ∇log Pr.
    pub fd_step: f64,
    /// Simulated datasets per finite-difference side.
    pub replications_per_side: u64,
    /// Base seed; each iteration derives its own independent stream.
    pub seed: u64,
    /// Iteration budget.
    pub max_iterations: usize,
}

impl Default for IpsmlConfig {
    fn default() -> Self {
        IpsmlConfig {
            fd_step: 0.05,
            replications_per_side: 100_000,
            seed: 0x1B5E_D0C5,
            max_iterations: 50,
        }
    }
}

/// Iterative simulation-based PSML: relaxed Fisher updates
/// θ′ = θ + J(θ)⁻¹·(∇log f − ĝ) with ĝ a Monte-Carlo finite-difference
/// estimate of ∇log Pr(Ψ=m; θ).
///
/// Stops when every update component is within one standard error of zero —
/// further iteration would chase simulation noise — or at the iteration cap
/// (`converged = false`). Per-iteration seeds derive from `config.seed`, so
/// results are reproducible for a fixed configuration.
pub fn ipsml(
    model: &ModelSpec,
    rule: &SelectionRule,
    obs: &ObservationSet,
    m: usize,
    config: &IpsmlConfig,
) -> Result<EstimateResult> {
    check_selected(model, m)?;
    if !(config.fd_step.is_finite() && config.fd_step > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step must be positive, got {}",
            config.fd_step
        )));
    }
    let dim = model.populations();
    let mut theta = model.ml_estimate(obs)?;
    let mut last_norm = None;
    for iteration in 0..config.max_iterations {
        let score = model.score(&theta, obs)?;
        let grad = selection::mc_grad_log_selection_probability(
            model,
            rule,
            &theta,
            m,
            config.fd_step,
            config.replications_per_side,
            rng::derive(config.seed, &[iteration as u64]),
        )?;
        let residual: Vec<f64> = score
            .iter()
            .zip(&grad.gradient)
            .map(|(s, g)| s - g)
            .collect();
        last_norm = Some(inf_norm(&residual));
        let j = model.fim(&theta)?;
        let j_inv = j.inverse().ok_or(Error::SingularHessian { iteration })?;
        let update = j_inv.mul_vec(&residual);
        // Noise floor of each update component, from the simulation standard
        // errors of ĝ pushed through J⁻¹.
        let update_se: Vec<f64> = (0..dim)
            .map(|l| {
                (0..dim)
                    .map(|j| j_inv[(l, j)].abs() * grad.standard_errors[j])
                    .sum()
            })
            .collect();
        if update
            .iter()
            .zip(&update_se)
            .all(|(u, se)| u.abs() <= *se)
        {
            // The remaining update is indistinguishable from noise: stop
            // without applying it.
            return Ok(EstimateResult {
                theta_hat: theta,
                m,
                method: "ipsml".into(),
                iterations: iteration,
                final_score_norm: last_norm,
                converged: true,
            });
        }
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let candidate = stepped(&theta, &update, step);
            if model.theta_in_domain(&candidate) {
                theta = candidate;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            return Ok(EstimateResult {
                theta_hat: theta,
                m,
                method: "ipsml".into(),
                iterations: iteration + 1,
                final_score_norm: last_norm,
                converged: false,
            });
        }
    }
    Ok(EstimateResult {
        theta_hat: theta,
        m,
        method: "ipsml".into(),
        iterations: config.max_iterations,
        final_score_norm: last_norm,
        converged: false,
    })
}

// ---------------------------------------------------------------------------
// Dispatcher
// ---------------------------------------------------------------------------

/// Run one parsed estimator on one dataset. `seed` feeds only the
/// simulation-based estimator; everything else is deterministic in the data.
pub fn estimate(
    model: &ModelSpec,
    rule: &SelectionRule,
    obs: &ObservationSet,
    m: usize,
    spec: &EstimatorSpec,
    seed: u64,
) -> Result<EstimateResult> {
    let config = SolverConfig::capped(spec.iteration_cap);
    let mut result = match spec.kind {
        EstimatorKind::Ml => ml(model, obs, m),
        EstimatorKind::Mvu => mvu(model, obs, m),
        EstimatorKind::Uv => uv_estimate(model, obs, m),
        EstimatorKind::PsmlGrid => {
            let (lower, upper) = default_grid_box(model, obs)?;
            psml_grid_search(model, rule, obs, m, &GridConfig::over(lower, upper))
        }
        EstimatorKind::PsmlNewton => psml_newton_raphson(model, rule, obs, m, &config),
        EstimatorKind::PsmlFisher => psml_fisher_scoring(model, rule, obs, m, &config),
        EstimatorKind::PsmlClosed => match rule {
            // Selection independent of the data: PSML is plain ML.
            SelectionRule::Randomized { .. } => ml(model, obs, m),
            SelectionRule::Sms => match model.family() {
                Family::Gaussian => psml_gaussian_closed(model, obs, m),
                Family::Exponential => psml_exponential_closed(model, obs, m),
                Family::Uniform => Err(Error::NonRegularFamily(
                    "uniform family has no likelihood equations".into(),
                )),
            },
        },
        EstimatorKind::MbpExact => psml_mbp(model, rule, obs, m, MbpVariant::Exact, &config),
        EstimatorKind::MbpNewton => {
            psml_mbp(model, rule, obs, m, MbpVariant::NewtonRelaxed, &config)
        }
        EstimatorKind::MbpFisher => {
            psml_mbp(model, rule, obs, m, MbpVariant::FisherRelaxed, &config)
        }
        EstimatorKind::Ipsml => ipsml(
            model,
            rule,
            obs,
            m,
            &IpsmlConfig {
                seed,
                max_iterations: spec.iteration_cap.unwrap_or(50),
                ..IpsmlConfig::default()
            },
        ),
    }?;
    result.method = spec.to_string();
    Ok(result)
}

/// Default search box for grid-based PSML: eight classical standard
/// deviations around the ML estimate (Gaussian), or a factor-of-ten bracket
/// around the means (positive-domain families).
fn default_grid_box(model: &ModelSpec, obs: &ObservationSet) -> Result<(Vec<f64>, Vec<f64>)> {
    let ml_hat = model.ml_estimate(obs)?;
    let n = model.samples_per_population() as f64;
    match model.family() {
        Family::Gaussian => {
            let vars = model.noise_variances().expect("gaussian model");
            let lower = ml_hat
                .iter()
                .zip(vars)
                .map(|(c, v)| c - 8.0 * (v / n).sqrt())
                .collect();
            let upper = ml_hat
                .iter()
                .zip(vars)
                .map(|(c, v)| c + 8.0 * (v / n).sqrt())
                .collect();
            Ok((lower, upper))
        }
        Family::Exponential => Ok((
            ml_hat.iter().map(|c| c / 10.0).collect(),
            ml_hat.iter().map(|c| c * 10.0).collect(),
        )),
        Family::Uniform => Err(Error::NonRegularFamily(
            "uniform family has no likelihood equations".into(),
        )),
    }
}
