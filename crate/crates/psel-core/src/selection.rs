//! Selection rules Ψ, selection probabilities Pr(Ψ=m; θ), and first and
//! second derivatives of log Pr.
//!
//! The sample-mean selection (SMS) rule picks the population with the largest
//! sufficient statistic. For two Gaussian or two exponential populations the
//! selection probability and its log-derivatives have closed forms; every
//! other rule/family combination falls back to Monte-Carlo frequencies and
//! simulated finite differences.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::mat::Matrix;
use crate::model::{Family, ModelSpec, ObservationSet};
use crate::rng;
use crate::special::{log_normal_cdf, mills_ratio, normal_cdf};

pub use crate::special::c_factor;

/// How the population to estimate is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionRule {
    /// Sample-mean selection: the population with the largest sufficient
    /// statistic (sample mean; sample maximum for the uniform family) wins.
    /// Ties break to the lowest index.
    Sms,
    /// Data-independent coin flip: population m is selected with probability
    /// `weights[m]`.
    Randomized { weights: Vec<f64> },
}

impl SelectionRule {
    /// Check the rule against a model of `populations` populations.
    pub fn validate(&self, populations: usize) -> Result<()> {
        match self {
            SelectionRule::Sms => Ok(()),
            SelectionRule::Randomized { weights } => {
                if weights.len() != populations {
                    return Err(Error::DimensionMismatch(format!(
                        "randomized rule has {} weights for {populations} populations",
                        weights.len()
                    )));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::InvalidConfig(
                        "randomized weights must be nonnegative".into(),
                    ));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidConfig(format!(
                        "randomized weights sum to {total}, expected 1 within 1e-12"
                    )));
                }
                Ok(())
            }
        }
    }

    /// True when selection depends on the data (SMS), false for the
    /// randomized rule.
    #[must_use]
    pub fn is_data_driven(&self) -> bool {
        matches!(self, SelectionRule::Sms)
    }
}

/// Options for Monte-Carlo estimation of selection functionals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McOptions {
    /// Number of simulated datasets.
    pub replications: u64,
    /// Base seed for the simulation streams.
    pub seed: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            replications: 100_000,
            seed: 0x0D5E_1EC7,
        }
    }
}

/// A probability with an optional Monte-Carlo standard error
/// (`None` for exact analytic values).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    /// The probability itself.
    pub value: f64,
    /// Binomial standard error when the value is a Monte-Carlo frequency.
    pub standard_error: Option<f64>,
}

/// Apply the selection rule to one dataset; returns the selected population
/// index (0-based).
///
/// The randomized rule consumes one draw from `rng` and errors without one.
pub fn select(
    model: &ModelSpec,
    rule: &SelectionRule,
    x: &ObservationSet,
    rng: Option<&mut dyn rand::RngCore>,
) -> Result<usize> {
    rule.validate(model.populations())?;
    match rule {
        SelectionRule::Sms => {
            let stats = model.sufficient_statistics(x)?;
            let mut best = 0;
            for (m, value) in stats.iter().enumerate().skip(1) {
                if *value > stats[best] {
                    best = m;
                }
            }
            Ok(best)
        }
        SelectionRule::Randomized { weights } => {
            let Some(rng) = rng else {
                return Err(Error::RandomizedNeedsRng);
            };
            let u: f64 = rng.gen();
            let mut cumulative = 0.0;
            for (m, w) in weights.iter().enumerate() {
                cumulative += w;
                if u < cumulative {
                    return Ok(m);
                }
            }
            Ok(weights.len() - 1)
        }
    }
}

// ---------------------------------------------------------------------------
// Closed-form helpers for the two-population SMS cases
// ---------------------------------------------------------------------------

/// Standardized quantities of the two-population Gaussian SMS rule:
/// the gap Δ_m = (θ_m − θ_k)/σ and the variance σ² = (σ₁² + σ₂²)/N of the
/// difference of sample means.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianSmsContext {
    /// Standardized parameter gap of the selected population.
    pub delta_m: f64,
    /// Variance of the difference of the two sample means.
    pub sigma_sq: f64,
}

/// Build the Gaussian SMS context for selected population `m` (0-based).
pub fn gaussian_sms_context(
    model: &ModelSpec,
    theta: &[f64],
    m: usize,
) -> Result<GaussianSmsContext> {
    require_two_population(model, Family::Gaussian, theta, m)?;
    let k = 1 - m;
    let vars = model.noise_variances().expect("gaussian model");
    let sigma_sq = (vars[0] + vars[1]) / model.samples_per_population() as f64;
    Ok(GaussianSmsContext {
        delta_m: (theta[m] - theta[k]) / sigma_sq.sqrt(),
        sigma_sq,
    })
}

/// Auxiliaries of the two-population exponential SMS rule for a selected
/// population `m`: the odds ratio q_m = θ_m/(θ_m+θ_k), the conditional-bias
/// coefficient α_m, and the gradient auxiliaries f(q_m), h(q_m).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentialSmsContext {
    /// q_m = θ_m / (θ_m + θ_k) ∈ (0, 1).
    pub q_m: f64,
    /// Conditional bias coefficient: E[θ̂_m − θ_m | Ψ=m] = θ_m·α_m.
    pub alpha_m: f64,
    /// Gradient auxiliary f(q_m) = (1−q_m)(q_m·h(q_m) − 1).
    pub f_q: f64,
    /// Ratio of truncated negative-binomial sums; 0 when N = 1.
    pub h_q: f64,
}

/// Build the exponential SMS context for selected population `m` (0-based).
pub fn exponential_sms_context(
    model: &ModelSpec,
    theta: &[f64],
    m: usize,
) -> Result<ExponentialSmsContext> {
    require_two_population(model, Family::Exponential, theta, m)?;
    let k = 1 - m;
    let q = theta[m] / (theta[m] + theta[k]);
    let parts = exp_sms_parts(q, model.samples_per_population());
    Ok(ExponentialSmsContext {
        q_m: q,
        alpha_m: parts.alpha,
        f_q: parts.f,
        h_q: parts.h,
    })
}

fn require_two_population(
    model: &ModelSpec,
    family: Family,
    theta: &[f64],
    m: usize,
) -> Result<()> {
    model.check_theta(theta)?;
    check_index(model, m)?;
    if model.family() != family {
        return Err(Error::UnsupportedAnalytic(format!(
            "expected the {family} family, got {}",
            model.family()
        )));
    }
    if model.populations() != 2 {
        return Err(Error::UnsupportedAnalytic(format!(
            "closed forms cover 2 populations, model has {}",
            model.populations()
        )));
    }
    Ok(())
}

fn check_index(model: &ModelSpec, m: usize) -> Result<()> {
    if m >= model.populations() {
        return Err(Error::DimensionMismatch(format!(
            "selected index {m} out of range for {} populations",
            model.populations()
        )));
    }
    Ok(())
}

pub(crate) struct ExpSmsParts {
    pub pr: f64,
    pub h: f64,
    pub f: f64,
    pub alpha: f64,
}

/// Exact pieces of the exponential SMS closed forms at odds q with N samples:
/// Pr(Ψ=m) = Σ_{j=0}^{N−1} C(N−1+j, j) q^N (1−q)^j (a negative-binomial cdf),
/// α = C(2N−1, N) q^N (1−q)^N / Pr, h = Σ_{j=0}^{N−2} C(N+j, j) q^N (1−q)^j / Pr,
/// f = (1−q)(q·h − 1).
///
/// Terms are built by a running product, so no binomial coefficient is ever
/// materialized and nothing overflows for any practical N.
pub(crate) fn exp_sms_parts(q: f64, n: usize) -> ExpSmsParts {
    debug_assert!(q > 0.0 && q < 1.0);
    debug_assert!(n >= 1);
    // Probability series: term_j = C(n−1+j, j) q^n (1−q)^j for j = 0..n−1;
    // one extra step of the same recurrence gives the α numerator
    // C(2n−1, n) q^n (1−q)^n.
    let mut term = q.powi(n as i32);
    let mut pr = term;
    for j in 0..n {
        term *= (1.0 - q) * (n + j) as f64 / (j + 1) as f64;
        if j < n - 1 {
            pr += term;
        }
    }
    let alpha = term / pr;
    // h numerator: term'_j = C(n+j, j) q^n (1−q)^j for j = 0..n−2 (empty for
    // N = 1, collapsing to h = 0 and f = −(1−q)).
    let mut h_num = 0.0;
    if n >= 2 {
        let mut t = q.powi(n as i32);
        h_num = t;
        for j in 0..n.saturating_sub(2) {
            t *= (1.0 - q) * (n + 1 + j) as f64 / (j + 1) as f64;
            h_num += t;
        }
    }
    let h = h_num / pr;
    let f = (1.0 - q) * (q * h - 1.0);
    ExpSmsParts { pr, h, f, alpha }
}

// ---------------------------------------------------------------------------
// Selection probability
// ---------------------------------------------------------------------------

/// Pr(Ψ = m; θ).
///
/// Analytic where a closed form exists (randomized weights; two-population
/// Gaussian SMS via Φ(Δ_m); two-population exponential SMS via the
/// negative-binomial sum); otherwise a Monte-Carlo frequency over
/// `mc.replications` simulated datasets (default [`McOptions::default`]) with
/// its binomial standard error. The Monte-Carlo fallback is total — it never
/// errors — so non-regular families like the uniform are fully supported.
pub fn selection_probability(
    model: &ModelSpec,
    rule: &SelectionRule,
    theta: &[f64],
    m: usize,
    mc: Option<&McOptions>,
) -> Result<ProbabilityEstimate> {
    model.check_theta(theta)?;
    rule.validate(model.populations())?;
    check_index(model, m)?;
    match rule {
        SelectionRule::Randomized { weights } => Ok(ProbabilityEstimate {
            value: weights[m],
            standard_error: None,
        }),
        SelectionRule::Sms => match (model.family(), model.populations()) {
            (Family::Gaussian, 2) => {
                let ctx = gaussian_sms_context(model, theta, m)?;
                Ok(ProbabilityEstimate {
                    value: normal_cdf(ctx.delta_m),
                    standard_error: None,
                })
            }
            (Family::Exponential, 2) => {
                let ctx = exponential_sms_context(model, theta, m)?;
                let parts = exp_sms_parts(ctx.q_m, model.samples_per_population());
                Ok(ProbabilityEstimate {
                    value: parts.pr,
                    standard_error: None,
                })
            }
            _ => {
                let opts = mc.copied().unwrap_or_default();
                mc_selection_probability(model, rule, theta, m, &opts)
            }
        },
    }
}

/// log Pr(Ψ = m; θ), analytic only.
///
/// Numerically stable deep into the tails for the Gaussian case (where
/// Φ(Δ_m) itself would underflow). Combinations without a closed form are
/// [`Error::UnsupportedAnalytic`]; a vanishing probability yields `-inf`.
pub fn log_selection_probability(
    model: &ModelSpec,
    rule: &SelectionRule,
    theta: &[f64],
    m: usize,
) -> Result<f64> {
    model.check_theta(theta)?;
    rule.validate(model.populations())?;
    check_index(model, m)?;
    match rule {
        SelectionRule::Randomized { weights } => Ok(weights[m].ln()),
        SelectionRule::Sms => match (model.family(), model.populations()) {
            (Family::Gaussian, 2) => {
                let ctx = gaussian_sms_context(model, theta, m)?;
                Ok(log_normal_cdf(ctx.delta_m))
            }
            (Family::Exponential, 2) => {
                let ctx = exponential_sms_context(model, theta, m)?;
                let parts = exp_sms_parts(ctx.q_m, model.samples_per_population());
                Ok(parts.pr.ln())
            }
            _ => Err(Error::UnsupportedAnalytic(format!(
                "no closed-form selection probability for {} SMS with {} populations",
                model.family(),
                model.populations()
            ))),
        },
    }
}

/// Monte-Carlo frequency of {Ψ = m} (used directly by tests; the public
/// entry point is [`selection_probability`]).
fn mc_selection_probability(
    model: &ModelSpec,
    rule: &SelectionRule,
    theta: &[f64],
    m: usize,
    opts: &McOptions,
) -> Result<ProbabilityEstimate> {
    const TAG: u64 = 0x5E1E_C7F0;
    let k = opts.replications.max(1);
    let blocks = exec::split_ranges(k, block_count(k));
    let counts = exec::map_collect_ambient(blocks.len(), |b| -> Result<u64> {
        let mut hits = 0;
        for r in blocks[b].clone() {
            let rep_seed = rng::derive(opts.seed, &[TAG, r]);
            let x = model.sample(theta, rep_seed)?;
            let mut sel_rng = rng::stream(rep_seed, &[u64::MAX]);
            if select(model, rule, &x, Some(&mut sel_rng))? == m {
                hits += 1;
            }
        }
        Ok(hits)
    });
    let mut hits = 0u64;
    for c in counts {
        hits += c?;
    }
    let p = hits as f64 / k as f64;
    Ok(ProbabilityEstimate {
        value: p,
        standard_error: Some((p * (1.0 - p) / k as f64).sqrt()),
    })
}

fn block_count(replications: u64) -> usize {
    usize::try_from(replications.div_ceil(8_192)).unwrap_or(usize::MAX).clamp(1, 1_024)
}

// ---------------------------------------------------------------------------
// Derivatives of log Pr
// ---------------------------------------------------------------------------

/// ∇_θ log Pr(Ψ=m; θ), analytic.
///
/// Randomized rules give the zero vector (the probability does not depend on
/// θ). Two-population SMS closed forms: Gaussian
/// (φ(Δ_m)/Φ(Δ_m))/σ · (e_m − e_k); exponential entries −N·f(q_m)/θ_m and
/// +N·f(q_m)/θ_k. Everything else is [`Error::UnsupportedAnalytic`] — use
/// [`mc_grad_log_selection_probability`].
pub fn grad_log_selection_probability(
    model: &ModelSpec,
    rule: &SelectionRule,
    theta: &[f64],
    m: usize,
) -> Result<Vec<f64>> {
    model.check_theta(theta)?;
    rule.validate(model.populations())?;
    check_index(model, m)?;
    match rule {
        SelectionRule::Randomized { .. } => Ok(vec![0.0; model.populations()]),
        SelectionRule::Sms => match (model.family(), model.populations()) {
            (Family::Gaussian, 2) => {
                let ctx = gaussian_sms_context(model, theta, m)?;
                let r = mills_ratio(ctx.delta_m) / ctx.sigma_sq.sqrt();
                let mut g = vec![0.0; 2];
                g[m] = r;
                g[1 - m] = -r;
                Ok(g)
            }
            (Family::Exponential, 2) => {
                let ctx = exponential_sms_context(model, theta, m)?;
                let n = model.samples_per_population() as f64;
                let k = 1 - m;
                let mut g = vec![0.0; 2];
                g[m] = -n * ctx.f_q / theta[m];
                g[k] = n * ctx.f_q / theta[k];
                Ok(g)
            }
            _ => Err(Error::UnsupportedAnalytic(format!(
                "no analytic selection-probability gradient for {} SMS with {} populations; \
                 use the simulated finite-difference gradient",
                model.family(),
                model.populations()
            ))),
        },
    }
}

/// ∇²_θ log Pr(Ψ=m; θ), analytic.
///
/// Randomized rules give the zero matrix. The two-population Gaussian SMS
/// closed form is c(Δ_m)/σ² on the diagonal and −c(Δ_m)/σ² off it, with
/// c the [`c_factor`]. Other combinations are [`Error::UnsupportedAnalytic`].
pub fn hessian_log_selection_probability(
    model: &ModelSpec,
    rule: &SelectionRule,
    theta: &[f64],
    m: usize,
) -> Result<Matrix> {
    model.check_theta(theta)?;
    rule.validate(model.populations())?;
    check_index(model, m)?;
    match rule {
        SelectionRule::Randomized { .. } => Ok(Matrix::zeros(model.populations())),
        SelectionRule::Sms => match (model.family(), model.populations()) {
            (Family::Gaussian, 2) => {
                let ctx = gaussian_sms_context(model, theta, m)?;
                let c = c_factor(ctx.delta_m) / ctx.sigma_sq;
                let mut h = Matrix::zeros(2);
                h[(0, 0)] = c;
                h[(1, 1)] = c;
                h[(0, 1)] = -c;
                h[(1, 0)] = -c;
                Ok(h)
            }
            _ => Err(Error::UnsupportedAnalytic(format!(
                "no analytic selection-probability Hessian for {} SMS with {} populations",
                model.family(),
                model.populations()
            ))),
        },
    }
}

/// ∇² log Pr with a deterministic fallback: analytic where available,
/// otherwise a central finite difference of the *analytic gradient* (step
/// 1e-5-scaled, symmetrized). Covers the exponential SMS case needed by the
/// Hessian-form information matrix and Fisher scoring.
pub(crate) fn sel_hessian_or_fd(
    model: &ModelSpec,
    rule: &SelectionRule,
    theta: &[f64],
    m: usize,
) -> Result<Matrix> {
    match hessian_log_selection_probability(model, rule, theta, m) {
        Err(Error::UnsupportedAnalytic(_)) => {
            // Requires the analytic gradient to exist.
            grad_log_selection_probability(model, rule, theta, m)?;
            let dim = model.populations();
            let positive_domain = matches!(model.family(), Family::Exponential | Family::Uniform);
            let mut h = Matrix::zeros(dim);
            for j in 0..dim {
                let mut step = 1e-5 * (1.0 + theta[j].abs());
                if positive_domain {
                    step = step.min(0.5 * theta[j]);
                }
                let mut up = theta.to_vec();
                up[j] += step;
                let mut dn = theta.to_vec();
                dn[j] -= step;
                let gu = grad_log_selection_probability(model, rule, &up, m)?;
                let gd = grad_log_selection_probability(model, rule, &dn, m)?;
                for i in 0..dim {
                    h[(i, j)] = (gu[i] - gd[i]) / (2.0 * step);
                }
            }
            h.symmetrize();
            Ok(h)
        }
        other => other,
    }
}

// ---------------------------------------------------------------------------
// Simulated finite-difference gradient
// ---------------------------------------------------------------------------

/// Simulated finite-difference estimate of ∇ log Pr(Ψ=m; θ).
#[derive(Clone, Debug, PartialEq)]
pub struct McGradient {
    /// Central-difference estimates of ∂ log Pr / ∂θ_l.
    pub gradient: Vec<f64>,
    /// Delta-method standard error of each component.
    pub standard_errors: Vec<f64>,
    /// Replications per side and component.
    pub replications: u64,
    /// Base finite-difference step (scaled per component by 1 + |θ_l|).
    pub fd_step: f64,
}

/// Estimate ∇ log Pr(Ψ=m; θ) by simulated central differences: for each
/// component l, Pr is estimated at θ ± (step_l/2)·e_l from `replications`
/// simulated datasets per side (step_l = `fd_step`·(1+|θ_l|)), and the
/// log-difference quotient is returned with its delta-method standard error.
///
/// Deterministic given (`seed`, `replications`, `fd_step`); works for any
/// family/rule combination the model can sample, including non-regular ones.
pub fn mc_grad_log_selection_probability(
    model: &ModelSpec,
    rule: &SelectionRule,
    theta: &[f64],
    m: usize,
    fd_step: f64,
    replications: u64,
    seed: u64,
) -> Result<McGradient> {
    model.check_theta(theta)?;
    rule.validate(model.populations())?;
    check_index(model, m)?;
    if !(fd_step.is_finite() && fd_step > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step must be positive, got {fd_step}"
        )));
    }
    let k = replications.max(1);
    let dim = model.populations();
    let mut gradient = vec![0.0; dim];
    let mut standard_errors = vec![0.0; dim];
    for l in 0..dim {
        let step = fd_step * (1.0 + theta[l].abs());
        let mut freq = [0.0f64; 2];
        for (side, sign) in [(0usize, -1.0), (1usize, 1.0)] {
            let mut shifted = theta.to_vec();
            shifted[l] += sign * 0.5 * step;
            if !model.theta_in_domain(&shifted) {
                return Err(Error::InvalidParameter(format!(
                    "finite-difference point θ_{l} {} {} leaves the parameter domain; \
                     reduce fd_step",
                    if sign < 0.0 { "-" } else { "+" },
                    0.5 * step
                )));
            }
            let blocks = exec::split_ranges(k, block_count(k));
            let counts = exec::map_collect_ambient(blocks.len(), |b| -> Result<u64> {
                let mut hits = 0;
                for r in blocks[b].clone() {
                    let rep_seed = rng::derive(seed, &[l as u64, side as u64, r]);
                    let x = model.sample(&shifted, rep_seed)?;
                    let mut sel_rng = rng::stream(rep_seed, &[u64::MAX]);
                    if select(model, rule, &x, Some(&mut sel_rng))? == m {
                        hits += 1;
                    }
                }
                Ok(hits)
            });
            let mut hits = 0u64;
            for c in counts {
                hits += c?;
            }
            if hits == 0 {
                return Err(Error::ZeroFrequency {
                    component: l,
                    side: if sign < 0.0 { "lower" } else { "upper" },
                });
            }
            freq[side] = hits as f64 / k as f64;
        }
        gradient[l] = (freq[1].ln() - freq[0].ln()) / step;
        // Var(ln p̂) ≈ (1−p)/(p·K) per side, sides independent.
        let var = (1.0 - freq[1]) / (freq[1] * k as f64) + (1.0 - freq[0]) / (freq[0] * k as f64);
        standard_errors[l] = var.sqrt() / step;
    }
    Ok(McGradient {
        gradient,
        standard_errors,
        replications: k,
        fd_step,
    })
}

#[cfg(test)]
// Reference constants keep every digit of their oracle derivation, beyond
// f64 round-trip precision.
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fig_gaussian(n: usize) -> (ModelSpec, Vec<f64>) {
        (
            ModelSpec::gaussian(2, n, vec![1.0, 0.1]).unwrap(),
            vec![0.0, 0.1],
        )
    }

    #[test]
    fn sms_picks_largest_statistic_and_breaks_ties_low() {
        let model = ModelSpec::gaussian(2, 2, vec![1.0, 1.0]).unwrap();
        let x = ObservationSet::new(&model, vec![vec![1.0, 1.4], vec![0.6, 0.8]]).unwrap();
        assert_eq!(select(&model, &SelectionRule::Sms, &x, None).unwrap(), 0);

        let unif = ModelSpec::uniform(2, 2).unwrap();
        let tie = ObservationSet::new(&unif, vec![vec![3.0, 1.0], vec![2.0, 3.0]]).unwrap();
        assert_eq!(select(&unif, &SelectionRule::Sms, &tie, None).unwrap(), 0);
    }

    #[test]
    fn randomized_rule_needs_rng_and_respects_degenerate_weights() {
        let model = ModelSpec::gaussian(2, 1, vec![1.0, 1.0]).unwrap();
        let x = model.sample(&[0.0, 0.0], 3).unwrap();
        let rule = SelectionRule::Randomized {
            weights: vec![1.0, 0.0],
        };
        assert!(matches!(
            select(&model, &rule, &x, None),
            Err(Error::RandomizedNeedsRng)
        ));
        let mut r = rng::stream(9, &[]);
        for _ in 0..32 {
            assert_eq!(select(&model, &rule, &x, Some(&mut r)).unwrap(), 0);
        }
    }

    #[test]
    fn randomized_weight_validation() {
        assert!(SelectionRule::Randomized {
            weights: vec![0.5, 0.5]
        }
        .validate(2)
        .is_ok());
        assert!(SelectionRule::Randomized {
            weights: vec![0.6, 0.6]
        }
        .validate(2)
        .is_err());
        assert!(SelectionRule::Randomized {
            weights: vec![-0.1, 1.1]
        }
        .validate(2)
        .is_err());
        assert!(SelectionRule::Randomized {
            weights: vec![1.0]
        }
        .validate(2)
        .is_err());
    }

    #[test]
    fn gaussian_probability_closed_form() {
        // Symmetric case: Φ(0) = 1/2.
        let (model, _) = fig_gaussian(10);
        let p = selection_probability(&model, &SelectionRule::Sms, &[0.3, 0.3], 0, None).unwrap();
        assert_relative_eq!(p.value, 0.5, max_relative = 1e-15);
        assert!(p.standard_error.is_none());

        // Reference config: Δ₂ = 0.1/√0.11, Φ(Δ₂) from 40-digit arithmetic.
        let p2 = selection_probability(&model, &SelectionRule::Sms, &[0.0, 0.1], 1, None).unwrap();
        assert_relative_eq!(p2.value, 0.618_487_699_723_502_484, max_relative = 1e-14);
        let ctx = gaussian_sms_context(&model, &[0.0, 0.1], 1).unwrap();
        assert_relative_eq!(ctx.delta_m, 0.301_511_344_577_763_623, max_relative = 1e-14);
        assert_relative_eq!(ctx.sigma_sq, 0.11, max_relative = 1e-15);

        // The two probabilities partition the sample space.
        let p1 = selection_probability(&model, &SelectionRule::Sms, &[0.0, 0.1], 0, None).unwrap();
        assert_relative_eq!(p1.value + p2.value, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn exponential_probability_closed_form() {
        // θ = (3, 2), N = 3 ⇒ q = 0.6: reference values from exact rationals.
        let model = ModelSpec::exponential(2, 3).unwrap();
        let p = selection_probability(&model, &SelectionRule::Sms, &[3.0, 2.0], 0, None).unwrap();
        assert_relative_eq!(p.value, 0.68256, max_relative = 1e-14);
        let ctx = exponential_sms_context(&model, &[3.0, 2.0], 0).unwrap();
        assert_relative_eq!(ctx.q_m, 0.6, max_relative = 1e-15);
        assert_relative_eq!(ctx.h_q, 0.822_784_810_126_582_278, max_relative = 1e-13);
        assert_relative_eq!(ctx.f_q, -0.202_531_645_569_620_253, max_relative = 1e-13);
        assert_relative_eq!(ctx.alpha_m, 0.202_531_645_569_620_253, max_relative = 1e-13);

        // N = 1 collapses to Pr = q_m.
        let n1 = ModelSpec::exponential(2, 1).unwrap();
        let p = selection_probability(&n1, &SelectionRule::Sms, &[5.0, 1.0], 0, None).unwrap();
        assert_relative_eq!(p.value, 5.0 / 6.0, max_relative = 1e-15);
        let ctx = exponential_sms_context(&n1, &[5.0, 1.0], 0).unwrap();
        assert_relative_eq!(ctx.alpha_m, 1.0 / 6.0, max_relative = 1e-14);
        assert_relative_eq!(ctx.h_q, 0.0);
        assert_relative_eq!(ctx.f_q, -(1.0 / 6.0), max_relative = 1e-14);

        // More exact references: N=2, q=0.75 and N=10, q=0.5.
        let n2 = exp_sms_parts(0.75, 2);
        assert_relative_eq!(n2.pr, 0.84375, max_relative = 1e-14);
        assert_relative_eq!(n2.h, 2.0 / 3.0, max_relative = 1e-13);
        assert_relative_eq!(n2.f, -0.125, max_relative = 1e-13);
        let n10 = exp_sms_parts(0.5, 10);
        assert_relative_eq!(n10.pr, 0.5, max_relative = 1e-13);
        assert_relative_eq!(n10.h, 1.295_211_791_992_187_5, max_relative = 1e-12);
        assert_relative_eq!(n10.f, -0.176_197_052_001_953_125, max_relative = 1e-12);
    }

    #[test]
    fn exponential_probabilities_partition_for_many_n() {
        let theta = [4.2, 1.5];
        for n in [1usize, 2, 3, 7, 25, 120] {
            let model = ModelSpec::exponential(2, n).unwrap();
            let p0 =
                selection_probability(&model, &SelectionRule::Sms, &theta, 0, None).unwrap();
            let p1 =
                selection_probability(&model, &SelectionRule::Sms, &theta, 1, None).unwrap();
            assert_relative_eq!(p0.value + p1.value, 1.0, max_relative = 1e-12);
            assert!(p0.value > 0.5, "larger mean should win more often");
        }
    }

    #[test]
    fn alpha_equals_minus_f() {
        // Both α and f come from the derivative of log Pr; the identity
        // α(q, N) = −f(q, N) holds for all q, N.
        for n in [1usize, 2, 3, 5, 10, 40] {
            for q in [0.05, 0.3, 0.5, 0.62, 0.9] {
                let parts = exp_sms_parts(q, n);
                assert_relative_eq!(parts.alpha, -parts.f, max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn exponential_f_matches_probability_derivative() {
        // f(q) = −q(1−q)·(d log Pr/d q)/N: finite-difference check in q.
        for n in [1usize, 3, 10] {
            for q in [0.35, 0.5, 0.7] {
                let h = 1e-6;
                let up = exp_sms_parts(q + h, n).pr.ln();
                let dn = exp_sms_parts(q - h, n).pr.ln();
                let dlogpr = (up - dn) / (2.0 * h);
                let f = exp_sms_parts(q, n).f;
                assert_relative_eq!(
                    f,
                    -q * (1.0 - q) * dlogpr / n as f64,
                    max_relative = 1e-6
                );
            }
        }
    }

    #[test]
    fn mc_probability_matches_uniform_hand_value() {
        // Uniform family has no closed form; for θ=(2,1), N=1:
        // Pr(2U₁ > U₂) = 1 − ∫₀^½ (1−2u) du = 3/4.
        let model = ModelSpec::uniform(2, 1).unwrap();
        let opts = McOptions {
            replications: 200_000,
            seed: 11,
        };
        let p =
            selection_probability(&model, &SelectionRule::Sms, &[2.0, 1.0], 0, Some(&opts))
                .unwrap();
        let se = p.standard_error.expect("MC path reports a standard error");
        assert!(
            (p.value - 0.75).abs() < 4.0 * se,
            "MC frequency {} vs exact 0.75 (se {se})",
            p.value
        );
        // Same options ⇒ same estimate (deterministic).
        let again =
            selection_probability(&model, &SelectionRule::Sms, &[2.0, 1.0], 0, Some(&opts))
                .unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn randomized_probability_is_exact() {
        let model = ModelSpec::uniform(2, 3).unwrap();
        let rule = SelectionRule::Randomized {
            weights: vec![0.3, 0.7],
        };
        let p = selection_probability(&model, &rule, &[1.0, 1.0], 1, None).unwrap();
        assert_eq!(p.value, 0.7);
        assert!(p.standard_error.is_none());
    }

    #[test]
    fn gaussian_gradient_closed_form_and_fd() {
        // Equal means, σ² = (1+1)/1 = 2: gradient entry is r(0)/√2.
        let model = ModelSpec::gaussian(2, 1, vec![1.0, 1.0]).unwrap();
        let g = grad_log_selection_probability(&model, &SelectionRule::Sms, &[0.0, 0.0], 0)
            .unwrap();
        assert_relative_eq!(g[0], 0.564_189_583_547_756_287, max_relative = 1e-13);
        assert_relative_eq!(g[1], -g[0], max_relative = 1e-15);

        // Finite differences of the analytic log-probability.
        let (model, theta) = fig_gaussian(10);
        for m in 0..2 {
            let g =
                grad_log_selection_probability(&model, &SelectionRule::Sms, &theta, m).unwrap();
            for l in 0..2 {
                let h = 1e-6;
                let mut up = theta.clone();
                up[l] += h;
                let mut dn = theta.clone();
                dn[l] -= h;
                let fd = (selection_probability(&model, &SelectionRule::Sms, &up, m, None)
                    .unwrap()
                    .value
                    .ln()
                    - selection_probability(&model, &SelectionRule::Sms, &dn, m, None)
                        .unwrap()
                        .value
                        .ln())
                    / (2.0 * h);
                assert_relative_eq!(g[l], fd, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn exponential_gradient_closed_form_and_fd() {
        let model = ModelSpec::exponential(2, 3).unwrap();
        let theta = [3.0, 2.0];
        let g =
            grad_log_selection_probability(&model, &SelectionRule::Sms, &theta, 0).unwrap();
        // g_m = −N f/θ_m with f(0.6, 3) = −0.20253…
        assert_relative_eq!(g[0], 3.0 * 0.202_531_645_569_620_253 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(g[1], -3.0 * 0.202_531_645_569_620_253 / 2.0, max_relative = 1e-12);
        for m in 0..2 {
            let g =
                grad_log_selection_probability(&model, &SelectionRule::Sms, &theta, m).unwrap();
            for l in 0..2 {
                let h = 1e-6 * theta[l];
                let mut up = theta.to_vec();
                up[l] += h;
                let mut dn = theta.to_vec();
                dn[l] -= h;
                let fd = (selection_probability(&model, &SelectionRule::Sms, &up, m, None)
                    .unwrap()
                    .value
                    .ln()
                    - selection_probability(&model, &SelectionRule::Sms, &dn, m, None)
                        .unwrap()
                        .value
                        .ln())
                    / (2.0 * h);
                assert_relative_eq!(g[l], fd, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn gradient_is_conditional_expected_score() {
        // Identity: ∇ log Pr(Ψ=m) = E[∇ log f(x;θ) | Ψ=m].
        // Rejection-sample the conditional expectation and compare at 3 SE.
        let cases: Vec<(ModelSpec, Vec<f64>)> = vec![
            (ModelSpec::gaussian(2, 10, vec![1.0, 0.1]).unwrap(), vec![0.0, 0.1]),
            (ModelSpec::exponential(2, 3).unwrap(), vec![3.0, 2.0]),
        ];
        for (model, theta) in cases {
            let m = 0;
            let g =
                grad_log_selection_probability(&model, &SelectionRule::Sms, &theta, m).unwrap();
            let mut sums = [0.0; 2];
            let mut sq = [0.0; 2];
            let mut kept = 0u64;
            for r in 0..120_000u64 {
                let x = model.sample(&theta, rng::derive(4242, &[r])).unwrap();
                if select(&model, &SelectionRule::Sms, &x, None).unwrap() != m {
                    continue;
                }
                kept += 1;
                let s = model.score(&theta, &x).unwrap();
                for l in 0..2 {
                    sums[l] += s[l];
                    sq[l] += s[l] * s[l];
                }
            }
            assert!(kept > 10_000);
            for l in 0..2 {
                let mean = sums[l] / kept as f64;
                let var = sq[l] / kept as f64 - mean * mean;
                let se = (var / kept as f64).sqrt();
                assert!(
                    (mean - g[l]).abs() < 3.0 * se,
                    "{} family, component {l}: conditional score mean {mean} vs gradient {} (se {se})",
                    model.family(),
                    g[l]
                );
            }
        }
    }

    #[test]
    fn gaussian_hessian_closed_form_matches_gradient_fd() {
        let (model, theta) = fig_gaussian(10);
        for m in 0..2 {
            let h =
                hessian_log_selection_probability(&model, &SelectionRule::Sms, &theta, m).unwrap();
            // Sign pattern: negative diagonal (c < 0), positive off-diagonal.
            assert!(h[(0, 0)] < 0.0 && h[(1, 1)] < 0.0 && h[(0, 1)] > 0.0);
            assert_relative_eq!(h[(0, 0)], h[(1, 1)], max_relative = 1e-15);
            for j in 0..2 {
                let step = 1e-6;
                let mut up = theta.clone();
                up[j] += step;
                let mut dn = theta.clone();
                dn[j] -= step;
                let gu =
                    grad_log_selection_probability(&model, &SelectionRule::Sms, &up, m).unwrap();
                let gd =
                    grad_log_selection_probability(&model, &SelectionRule::Sms, &dn, m).unwrap();
                for i in 0..2 {
                    let fd = (gu[i] - gd[i]) / (2.0 * step);
                    assert_relative_eq!(h[(i, j)], fd, max_relative = 1e-5, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn randomized_derivatives_vanish() {
        let model = ModelSpec::exponential(2, 4).unwrap();
        let rule = SelectionRule::Randomized {
            weights: vec![0.25, 0.75],
        };
        let g = grad_log_selection_probability(&model, &rule, &[1.0, 2.0], 1).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        let h = hessian_log_selection_probability(&model, &rule, &[1.0, 2.0], 1).unwrap();
        assert_eq!(h.max_abs(), 0.0);
    }

    #[test]
    fn exponential_hessian_is_fd_only() {
        let model = ModelSpec::exponential(2, 3).unwrap();
        assert!(matches!(
            hessian_log_selection_probability(&model, &SelectionRule::Sms, &[4.2, 1.5], 0),
            Err(Error::UnsupportedAnalytic(_))
        ));
        // The deterministic fallback matches 40-digit reference values of
        // ∇² log Pr at θ = (4.2, 1.5), N = 3.
        let h = sel_hessian_or_fd(&model, &SelectionRule::Sms, &[4.2, 1.5], 0).unwrap();
        assert_relative_eq!(h[(0, 0)], -0.037_515_873_727_346_8, max_relative = 1e-6);
        assert_relative_eq!(h[(0, 1)], 0.065_687_259_499_378_9, max_relative = 1e-6);
        assert_relative_eq!(h[(1, 1)], -0.073_724_203_174_122_6, max_relative = 1e-6);
        assert!(h.is_symmetric(1e-12));
    }

    #[test]
    fn mc_gradient_matches_analytic() {
        let (model, theta) = fig_gaussian(10);
        let mc = mc_grad_log_selection_probability(
            &model,
            &SelectionRule::Sms,
            &theta,
            1,
            0.05,
            200_000,
            7,
        )
        .unwrap();
        let exact =
            grad_log_selection_probability(&model, &SelectionRule::Sms, &theta, 1).unwrap();
        for (l, exact_l) in exact.iter().enumerate() {
            assert!(
                (mc.gradient[l] - exact_l).abs() < 3.0 * mc.standard_errors[l],
                "component {l}: {} vs {} (se {})",
                mc.gradient[l],
                exact_l,
                mc.standard_errors[l]
            );
        }
        // Deterministic reruns.
        let again = mc_grad_log_selection_probability(
            &model,
            &SelectionRule::Sms,
            &theta,
            1,
            0.05,
            200_000,
            7,
        )
        .unwrap();
        assert_eq!(mc, again);
    }

    #[test]
    fn mc_gradient_zero_frequency_is_typed() {
        // Population 1 essentially never wins: frequency 0 on both sides.
        let model = ModelSpec::gaussian(2, 1, vec![1.0, 1.0]).unwrap();
        let err = mc_grad_log_selection_probability(
            &model,
            &SelectionRule::Sms,
            &[0.0, 100.0],
            0,
            0.05,
            2_000,
            5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ZeroFrequency { .. }));
    }

    #[test]
    fn selection_rule_serde_round_trip() {
        let sms = SelectionRule::Sms;
        let json = serde_json::to_string(&sms).unwrap();
        assert_eq!(json, r#"{"kind":"sms"}"#);
        assert_eq!(serde_json::from_str::<SelectionRule>(&json).unwrap(), sms);
        let rnd = SelectionRule::Randomized {
            weights: vec![0.3, 0.7],
        };
        let json = serde_json::to_string(&rnd).unwrap();
        assert_eq!(serde_json::from_str::<SelectionRule>(&json).unwrap(), rnd);
    }
}
