//! Post-selection Fisher information and Cramér-Rao-type lower bounds.
//!
//! For a selection rule Ψ and selected index m, the post-selection Fisher
//! information matrix (PSFIM) is the Fisher information of the conditional
//! likelihood f(x | Ψ=m; θ) = f(x; θ)/Pr(Ψ=m; θ). Three equivalent
//! computations exist:
//!
//! - **Definition**: E[(∇log f − ∇log Pr)(∇log f − ∇log Pr)ᵀ | Ψ=m],
//! - **ScoreForm**: E[∇log f ∇log fᵀ | Ψ=m] − ∇log Pr ∇log Prᵀ,
//! - **HessianForm**: −E[∇²log f | Ψ=m] + ∇²log Pr,
//!
//! all using the identity ∇log Pr(Ψ=m;θ) = E[∇log f(x;θ) | Ψ=m]. The
//! selected-component bound Pr(Ψ=m)·[J_m⁻¹]_mm summed over m lower-bounds the
//! post-selection MSE of any estimator whose selected-component conditional
//! bias vanishes; a bias-corrected variant covers estimators with known
//! conditional bias gradients.
//!
//! Closed forms are implemented for the two-population Gaussian
//! sample-mean-selection case (and the exponential single-sample bound); the
//! conditional expectations are otherwise estimated by rejection sampling
//! with jackknife standard errors over 32 sub-batches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::mat::Matrix;
use crate::model::{Family, ModelSpec};
use crate::rng;
use crate::selection::{self, gaussian_sms_context, McOptions, SelectionRule};
use crate::special::{c_factor, mills_ratio, normal_cdf};

/// Condition-number threshold above which an information matrix is treated
/// as singular.
const CONDITION_LIMIT: f64 = 1e12;
/// Number of jackknife sub-batches for Monte-Carlo standard errors.
const JACKKNIFE_BATCHES: usize = 32;

/// Which computation of the post-selection information matrix to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsfimMethod {
    /// Conditional outer product of the centered score (Monte-Carlo).
    Definition,
    /// Conditional score outer product minus the gradient outer product
    /// (Monte-Carlo).
    ScoreForm,
    /// Minus the conditional Hessian plus ∇²log Pr (Monte-Carlo expectation,
    /// analytic or finite-difference ∇²log Pr).
    HessianForm,
    /// Exact closed form (two-population Gaussian SMS; any regular family
    /// under a randomized rule, where the PSFIM is the classical
    /// information).
    ClosedForm,
}

impl std::fmt::Display for PsfimMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PsfimMethod::Definition => write!(f, "definition"),
            PsfimMethod::ScoreForm => write!(f, "score_form"),
            PsfimMethod::HessianForm => write!(f, "hessian_form"),
            PsfimMethod::ClosedForm => write!(f, "closed_form"),
        }
    }
}

/// A post-selection information matrix for one selected index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsfimResult {
    /// Selected population (0-based).
    pub m: usize,
    /// The M×M information matrix J_m. Monte-Carlo estimates are
    /// symmetrized; they are positive semidefinite up to Monte-Carlo error.
    pub matrix: Matrix,
    /// How it was computed.
    pub method: PsfimMethod,
    /// Entrywise jackknife standard errors (Monte-Carlo methods only).
    pub mc_standard_error: Option<Matrix>,
    /// Conditional draws retained by the rejection sampler (MC only).
    pub accepted: Option<u64>,
}

/// One component of a post-selection bound report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentBound {
    /// Selected population (0-based).
    pub m: usize,
    /// Pr(Ψ = m; θ).
    pub probability: f64,
    /// Standard error of the probability when it was simulated.
    pub probability_se: Option<f64>,
    /// The component bound ([J_m⁻¹]_mm, or the quadratic form for the
    /// bias-corrected variant).
    pub bound: f64,
    /// First-order standard error of the bound (Monte-Carlo methods only).
    pub bound_se: Option<f64>,
}

/// A full post-selection Cramér-Rao-type bound: per-component pieces and the
/// probability-weighted aggregate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiCrbReport {
    /// Information-matrix computation used for the components.
    pub method: PsfimMethod,
    /// Per-selected-index terms.
    pub components: Vec<ComponentBound>,
    /// Σ_m Pr(Ψ=m)·bound_m.
    pub aggregate: f64,
    /// Propagated standard error of the aggregate (Monte-Carlo paths only).
    pub aggregate_se: Option<f64>,
}

fn check_inputs(model: &ModelSpec, rule: &SelectionRule, theta: &[f64], m: usize) -> Result<()> {
    model.check_theta(theta)?;
    rule.validate(model.populations())?;
    if m >= model.populations() {
        return Err(Error::DimensionMismatch(format!(
            "selected index {m} out of range for {} populations",
            model.populations()
        )));
    }
    if !model.family().is_regular() {
        return Err(Error::NonRegularFamily(format!(
            "{} family has no Fisher information, so no post-selection information exists",
            model.family()
        )));
    }
    Ok(())
}

/// Invert an information matrix, flagging ill-conditioning as
/// [`Error::SingularPsfim`].
pub(crate) fn invert_information(j: &Matrix) -> Result<Matrix> {
    let condition = j.condition_one_norm().unwrap_or(f64::INFINITY);
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(Error::SingularPsfim { condition });
    }
    j.inverse().ok_or(Error::SingularPsfim { condition })
}

// ---------------------------------------------------------------------------
// PSFIM
// ---------------------------------------------------------------------------

/// Compute the post-selection Fisher information matrix J_m.
///
/// `ClosedForm` is exact and ignores `mc`; the other three methods estimate
/// conditional expectations by rejection sampling `mc.replications` raw draws
/// (default [`McOptions::default`]) and carry entrywise jackknife standard
/// errors. The uniform family errors with [`Error::NonRegularFamily`].
pub fn psfim(
    model: &ModelSpec,
    rule: &SelectionRule,
    theta: &[f64],
    m: usize,
    method: PsfimMethod,
    mc: Option<&McOptions>,
) -> Result<PsfimResult> {
    check_inputs(model, rule, theta, m)?;
    match method {
        PsfimMethod::ClosedForm => closed_form_psfim(model, rule, theta, m),
        _ => mc_psfim(model, rule, theta, m, method, &mc.copied().unwrap_or_default()),
    }
}

fn closed_form_psfim(
    model: &ModelSpec,
    rule: &SelectionRule,
    theta: &[f64],
    m: usize,
) -> Result<PsfimResult> {
    let matrix = match rule {
        // Selection independent of the data: conditioning changes nothing
        // and the PSFIM is the classical Fisher information.
        SelectionRule::Randomized { .. } => model.fim(theta)?,
        SelectionRule::Sms => match (model.family(), model.populations()) {
            (Family::Gaussian, 2) => {
                // J_m = N·Σ⁻¹ + ∇²log Pr(Ψ=m;θ), the Hessian form with the
                // constant Gaussian Hessian.
                let mut j = model.fim(theta)?;
                let sel =
                    selection::hessian_log_selection_probability(model, rule, theta, m)?;
                j.add_scaled(&sel, 1.0);
                j
            }
            _ => {
                return Err(Error::UnsupportedClosedForm(format!(
                    "no closed-form post-selection information for {} SMS with {} populations; \
                     use a Monte-Carlo method",
                    model.family(),
                    model.populations()
                )))
            }
        },
    };
    Ok(PsfimResult {
        m,
        matrix,
        method: PsfimMethod::ClosedForm,
        mc_standard_error: None,
        accepted: None,
    })
}

fn mc_psfim(
    model: &ModelSpec,
    rule: &SelectionRule,
    theta: &[f64],
    m: usize,
    method: PsfimMethod,
    opts: &McOptions,
) -> Result<PsfimResult> {
    let dim = model.populations();
    // The centered forms need the analytic gradient; the Hessian form needs
    // ∇²log Pr. Resolve both up front so unsupported combinations fail fast.
    let grad = selection::grad_log_selection_probability(model, rule, theta, m)?;
    let sel_hess = match method {
        PsfimMethod::HessianForm => Some(selection::sel_hessian_or_fd(model, rule, theta, m)?),
        _ => None,
    };

    let method_tag = match method {
        PsfimMethod::Definition => 0xD1u64,
        PsfimMethod::ScoreForm => 0x5C,
        PsfimMethod::HessianForm => 0x4E,
        PsfimMethod::ClosedForm => unreachable!("closed form handled separately"),
    };
    let total = opts.replications.max(1);
    let chunks = exec::split_ranges(total, JACKKNIFE_BATCHES);
    let partials = exec::map_collect_ambient(chunks.len(), |b| -> Result<(u64, Matrix)> {
        let mut accepted = 0u64;
        let mut sum = Matrix::zeros(dim);
        for r in chunks[b].clone() {
            let rep_seed = rng::derive(opts.seed, &[method_tag, m as u64, r]);
            let x = model.sample(theta, rep_seed)?;
            let mut sel_rng = rng::stream(rep_seed, &[u64::MAX]);
            if selection::select(model, rule, &x, Some(&mut sel_rng))? != m {
                continue;
            }
            accepted += 1;
            match method {
                PsfimMethod::Definition => {
                    let s = model.score(theta, &x)?;
                    for i in 0..dim {
                        for j in 0..dim {
                            sum[(i, j)] += (s[i] - grad[i]) * (s[j] - grad[j]);
                        }
                    }
                }
                PsfimMethod::ScoreForm => {
                    let s = model.score(theta, &x)?;
                    for i in 0..dim {
                        for j in 0..dim {
                            sum[(i, j)] += s[i] * s[j];
                        }
                    }
                }
                PsfimMethod::HessianForm => {
                    let h = model.hessian(theta, &x)?;
                    sum.add_scaled(&h, 1.0);
                }
                PsfimMethod::ClosedForm => unreachable!(),
            }
        }
        Ok((accepted, sum))
    });

    let mut counts = Vec::with_capacity(chunks.len());
    let mut sums = Vec::with_capacity(chunks.len());
    let mut total_count = 0u64;
    let mut total_sum = Matrix::zeros(dim);
    for partial in partials {
        let (count, sum) = partial?;
        total_count += count;
        total_sum.add_scaled(&sum, 1.0);
        counts.push(count);
        sums.push(sum);
    }
    if total_count < 64 {
        return Err(Error::Degenerate(format!(
            "selection event m={m} occurred only {total_count} times in {total} draws; \
             increase replications"
        )));
    }

    // Conditional mean and its jackknife standard error over sub-batches.
    let mut mean = total_sum.clone();
    mean.scale(1.0 / total_count as f64);
    let se = jackknife_se(&total_sum, total_count, &sums, &counts);

    // Close out each form.
    let mut matrix = mean;
    match method {
        PsfimMethod::Definition => {}
        PsfimMethod::ScoreForm => {
            for i in 0..dim {
                for j in 0..dim {
                    matrix[(i, j)] -= grad[i] * grad[j];
                }
            }
        }
        PsfimMethod::HessianForm => {
            matrix.scale(-1.0);
            matrix.add_scaled(sel_hess.as_ref().expect("resolved above"), 1.0);
        }
        PsfimMethod::ClosedForm => unreachable!(),
    }
    matrix.symmetrize();
    Ok(PsfimResult {
        m,
        matrix,
        method,
        mc_standard_error: Some(se),
        accepted: Some(total_count),
    })
}

/// Delete-one-batch jackknife standard errors for a ratio-of-sums matrix
/// estimate (Σ terms)/(Σ counts).
fn jackknife_se(total_sum: &Matrix, total_count: u64, sums: &[Matrix], counts: &[u64]) -> Matrix {
    let dim = total_sum.dim();
    let b = sums.len();
    let mut leave_outs = Vec::with_capacity(b);
    for (sum_b, &count_b) in sums.iter().zip(counts) {
        let denom = total_count - count_b;
        debug_assert!(denom > 0, "jackknife needs accepted draws outside every batch");
        let mut x = total_sum.clone();
        x.add_scaled(sum_b, -1.0);
        x.scale(1.0 / denom as f64);
        leave_outs.push(x);
    }
    let mut mean = Matrix::zeros(dim);
    for x in &leave_outs {
        mean.add_scaled(x, 1.0);
    }
    mean.scale(1.0 / b as f64);
    let mut var = Matrix::zeros(dim);
    for x in &leave_outs {
        for i in 0..dim {
            for j in 0..dim {
                let d = x[(i, j)] - mean[(i, j)];
                var[(i, j)] += d * d;
            }
        }
    }
    var.scale((b as f64 - 1.0) / b as f64);
    Matrix::from_fn(dim, |i, j| var[(i, j)].sqrt())
}

// ---------------------------------------------------------------------------
// Gaussian closed forms
// ---------------------------------------------------------------------------

/// Relative bound factor ζ(Δ, κ) = 1 − κ·c(Δ)/(1 + c(Δ)).
///
/// Multiplies the classical per-component bound σ_m²/N; ζ ≥ 1 always (the
/// post-selection bound dominates the classical one), ζ → 1 as Δ → +∞
/// (selection nearly certain) and grows as Δ decreases or κ increases.
#[must_use]
pub fn zeta_factor(delta: f64, kappa: f64) -> f64 {
    let c = c_factor(delta);
    1.0 - kappa * c / (1.0 + c)
}

/// Closed-form inverse PSFIM for the two-population Gaussian SMS case:
/// J_m⁻¹ = (1/N)(Σ − c(Δ_m)/(N σ²(c(Δ_m)+1)) · D) with
/// D = [[σ₁⁴, −σ₁²σ₂²], [−σ₁²σ₂², σ₂⁴]].
pub fn psfim_inverse_gaussian(model: &ModelSpec, theta: &[f64], m: usize) -> Result<Matrix> {
    let ctx = gaussian_sms_context(model, theta, m)?;
    let vars = model.noise_variances().expect("gaussian model");
    let n = model.samples_per_population() as f64;
    let c = c_factor(ctx.delta_m);
    // c ∈ (−1, 0], so 1 + c > 0; it underflows only for astronomically
    // separated populations, where the matrix is singular in f64.
    if 1.0 + c <= f64::MIN_POSITIVE * 16.0 {
        return Err(Error::SingularPsfim {
            condition: f64::INFINITY,
        });
    }
    let coeff = c / (n * ctx.sigma_sq * (c + 1.0));
    let mut inv = Matrix::zeros(2);
    inv[(0, 0)] = (vars[0] - coeff * vars[0] * vars[0]) / n;
    inv[(1, 1)] = (vars[1] - coeff * vars[1] * vars[1]) / n;
    let off = coeff * vars[0] * vars[1] / n;
    inv[(0, 1)] = off;
    inv[(1, 0)] = off;
    Ok(inv)
}

/// Exact Ψ-selection Cramér-Rao-type bound for the two-population Gaussian
/// SMS case: components Pr(Ψ=m)·(σ_m²/N)·ζ(Δ_m, κ_m) with
/// κ_m = σ_m²/(σ₁²+σ₂²).
pub fn psi_crb_gaussian_closed(model: &ModelSpec, theta: &[f64]) -> Result<PsiCrbReport> {
    let vars = {
        gaussian_sms_context(model, theta, 0)?;
        model.noise_variances().expect("gaussian model").to_vec()
    };
    let n = model.samples_per_population() as f64;
    let var_sum = vars[0] + vars[1];
    let mut components = Vec::with_capacity(2);
    let mut aggregate = 0.0;
    for (m, &var_m) in vars.iter().enumerate() {
        let ctx = gaussian_sms_context(model, theta, m)?;
        let probability = normal_cdf(ctx.delta_m);
        let kappa = var_m / var_sum;
        let bound = var_m / n * zeta_factor(ctx.delta_m, kappa);
        aggregate += probability * bound;
        components.push(ComponentBound {
            m,
            probability,
            probability_se: None,
            bound,
            bound_se: None,
        });
    }
    Ok(PsiCrbReport {
        method: PsfimMethod::ClosedForm,
        components,
        aggregate,
        aggregate_se: None,
    })
}

/// Exact bound for the two-population exponential SMS case with a single
/// sample per population (N=1): components Pr(Ψ=m)·θ_m² with Pr(Ψ=m) = q_m,
/// so the aggregate is (θ₁³+θ₂³)/(θ₁+θ₂).
pub fn psi_crb_exponential_n1(model: &ModelSpec, theta: &[f64]) -> Result<PsiCrbReport> {
    model.check_theta(theta)?;
    if model.family() != Family::Exponential || model.populations() != 2 {
        return Err(Error::UnsupportedClosedForm(
            "the single-sample bound covers two exponential populations".into(),
        ));
    }
    if model.samples_per_population() != 1 {
        return Err(Error::UnsupportedClosedForm(format!(
            "the exact exponential bound needs N=1, got N={}; use a Monte-Carlo method",
            model.samples_per_population()
        )));
    }
    let mut components = Vec::with_capacity(2);
    let mut aggregate = 0.0;
    for m in 0..2 {
        let q = theta[m] / (theta[0] + theta[1]);
        let bound = theta[m] * theta[m];
        aggregate += q * bound;
        components.push(ComponentBound {
            m,
            probability: q,
            probability_se: None,
            bound,
            bound_se: None,
        });
    }
    Ok(PsiCrbReport {
        method: PsfimMethod::ClosedForm,
        components,
        aggregate,
        aggregate_se: None,
    })
}

// ---------------------------------------------------------------------------
// General bound assembly
// ---------------------------------------------------------------------------

/// The post-selection Cramér-Rao-type bound Σ_m Pr(Ψ=m)·[J_m⁻¹]_mm.
///
/// With `ClosedForm` this delegates to the exact expressions where they
/// exist: the two-population Gaussian SMS form (bit-identical to
/// [`psi_crb_gaussian_closed`]), the exponential N=1 form, and the
/// randomized-rule reduction Σ_m p_m·[J⁻¹]_mm with the classical information
/// J. Monte-Carlo methods assemble the same sum from simulated PSFIMs and
/// simulated probabilities where no analytic Pr exists.
pub fn psi_crb(
    model: &ModelSpec,
    rule: &SelectionRule,
    theta: &[f64],
    method: PsfimMethod,
    mc: Option<&McOptions>,
) -> Result<PsiCrbReport> {
    check_inputs(model, rule, theta, 0)?;
    if method == PsfimMethod::ClosedForm && matches!(rule, SelectionRule::Sms) {
        match (model.family(), model.populations()) {
            (Family::Gaussian, 2) => return psi_crb_gaussian_closed(model, theta),
            (Family::Exponential, 2) if model.samples_per_population() == 1 => {
                return psi_crb_exponential_n1(model, theta)
            }
            _ => {
                return Err(Error::UnsupportedClosedForm(format!(
                    "no closed-form bound for {} SMS with {} populations and N={}",
                    model.family(),
                    model.populations(),
                    model.samples_per_population()
                )))
            }
        }
    }
    let opts = mc.copied().unwrap_or_default();
    let mut components = Vec::with_capacity(model.populations());
    let mut aggregate = 0.0;
    let mut var_aggregate = 0.0;
    let mut any_mc = false;
    for m in 0..model.populations() {
        let pr_opts = McOptions {
            replications: opts.replications,
            seed: rng::derive(opts.seed, &[PROB_TAG, m as u64]),
        };
        let probability =
            selection::selection_probability(model, rule, theta, m, Some(&pr_opts))?;
        let j = psfim(
            model,
            rule,
            theta,
            m,
            method,
            Some(&McOptions {
                replications: opts.replications,
                seed: rng::derive(opts.seed, &[INFO_TAG, m as u64]),
            }),
        )?;
        let inv = invert_information(&j.matrix)?;
        let bound = inv[(m, m)];
        let bound_se = j
            .mc_standard_error
            .as_ref()
            .map(|se| propagate_inverse_se(&inv, se, m));
        aggregate += probability.value * bound;
        if probability.standard_error.is_some() || bound_se.is_some() {
            any_mc = true;
            let pse = probability.standard_error.unwrap_or(0.0);
            let bse = bound_se.unwrap_or(0.0);
            var_aggregate +=
                (probability.value * bse).powi(2) + (bound * pse).powi(2);
        }
        components.push(ComponentBound {
            m,
            probability: probability.value,
            probability_se: probability.standard_error,
            bound,
            bound_se,
        });
    }
    Ok(PsiCrbReport {
        method,
        components,
        aggregate,
        aggregate_se: any_mc.then(|| var_aggregate.sqrt()),
    })
}

/// First-order standard error of [J⁻¹]_mm from entrywise SEs of J:
/// ∂[J⁻¹]_mm/∂J_ij = −[J⁻¹]_mi·[J⁻¹]_jm, entries treated as independent.
fn propagate_inverse_se(inv: &Matrix, se: &Matrix, m: usize) -> f64 {
    let dim = inv.dim();
    let mut var = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let sensitivity = inv[(m, i)] * inv[(j, m)];
            var += (sensitivity * se[(i, j)]).powi(2);
        }
    }
    var.sqrt()
}

/// Bias-corrected bound for an estimator with known selected-component
/// conditional bias b_m(θ): Σ_m Pr(Ψ=m)·(∇b_m + e_m)ᵀ J_m⁻¹ (∇b_m + e_m).
///
/// `bias_gradients[m]` is ∇_θ b_m, one length-M gradient per selected index.
/// With all-zero gradients this reduces to [`psi_crb`] (the quadratic form
/// collapses to [J_m⁻¹]_mm).
pub fn biased_psi_crb(
    model: &ModelSpec,
    rule: &SelectionRule,
    theta: &[f64],
    bias_gradients: &[Vec<f64>],
    method: PsfimMethod,
    mc: Option<&McOptions>,
) -> Result<PsiCrbReport> {
    check_inputs(model, rule, theta, 0)?;
    let dim = model.populations();
    if bias_gradients.len() != dim || bias_gradients.iter().any(|g| g.len() != dim) {
        return Err(Error::DimensionMismatch(format!(
            "need {dim} bias gradients of length {dim}"
        )));
    }
    let opts = mc.copied().unwrap_or_default();
    let mut components = Vec::with_capacity(dim);
    let mut aggregate = 0.0;
    for m in 0..dim {
        let pr_opts = McOptions {
            replications: opts.replications,
            seed: rng::derive(opts.seed, &[PROB_TAG, m as u64]),
        };
        let probability =
            selection::selection_probability(model, rule, theta, m, Some(&pr_opts))?;
        let j = psfim(
            model,
            rule,
            theta,
            m,
            method,
            Some(&McOptions {
                replications: opts.replications,
                seed: rng::derive(opts.seed, &[INFO_TAG, m as u64]),
            }),
        )?;
        let inv = invert_information(&j.matrix)?;
        let mut v = bias_gradients[m].clone();
        v[m] += 1.0;
        let bound = inv.quadratic_form(&v);
        aggregate += probability.value * bound;
        components.push(ComponentBound {
            m,
            probability: probability.value,
            probability_se: probability.standard_error,
            bound,
            bound_se: None,
        });
    }
    Ok(PsiCrbReport {
        method,
        components,
        aggregate,
        aggregate_se: None,
    })
}

const fn tag(bytes: [u8; 4]) -> u64 {
    u32::from_le_bytes(bytes) as u64
}

// Seed-path tags keeping the probability and information sub-streams apart.
const PROB_TAG: u64 = tag(*b"prob");
const INFO_TAG: u64 = tag(*b"info");

// ---------------------------------------------------------------------------
// Analytic conditional biases of the ML estimator
// ---------------------------------------------------------------------------

/// Analytic conditional biases of the maximum-likelihood estimator:
/// entry (m, j) is E[θ̂_j − θ_j | Ψ = m].
///
/// Closed forms: two-population Gaussian SMS
/// (selected: +σ_m²/(Nσ)·φ(Δ_m)/Φ(Δ_m); unselected: −σ_k²/(Nσ)·φ(Δ_m)/Φ(Δ_m)),
/// two-population exponential SMS (selected: +θ_m·α_m; unselected:
/// −θ_k·α_m), and randomized rules over regular families (all zeros — the
/// sample mean is unbiased and independent of the coin flip).
pub fn analytic_conditional_bias(
    model: &ModelSpec,
    rule: &SelectionRule,
    theta: &[f64],
) -> Result<Matrix> {
    check_inputs(model, rule, theta, 0)?;
    match rule {
        SelectionRule::Randomized { .. } => Ok(Matrix::zeros(model.populations())),
        SelectionRule::Sms => match (model.family(), model.populations()) {
            (Family::Gaussian, 2) => {
                let vars = model.noise_variances().expect("gaussian model");
                let n = model.samples_per_population() as f64;
                let mut bias = Matrix::zeros(2);
                for m in 0..2 {
                    let k = 1 - m;
                    let ctx = gaussian_sms_context(model, theta, m)?;
                    let scale = mills_ratio(ctx.delta_m) / (n * ctx.sigma_sq.sqrt());
                    bias[(m, m)] = vars[m] * scale;
                    bias[(m, k)] = -vars[k] * scale;
                }
                Ok(bias)
            }
            (Family::Exponential, 2) => {
                let mut bias = Matrix::zeros(2);
                for m in 0..2 {
                    let k = 1 - m;
                    let ctx = selection::exponential_sms_context(model, theta, m)?;
                    bias[(m, m)] = theta[m] * ctx.alpha_m;
                    bias[(m, k)] = -theta[k] * ctx.alpha_m;
                }
                Ok(bias)
            }
            _ => Err(Error::UnsupportedAnalytic(format!(
                "no analytic conditional ML bias for {} SMS with {} populations",
                model.family(),
                model.populations()
            ))),
        },
    }
}

/// Gradients ∇_θ b_m of the Gaussian SMS selected-component ML bias
/// b_m(θ) = σ_m²/(Nσ)·φ(Δ_m)/Φ(Δ_m), for use with [`biased_psi_crb`]:
/// ∇b_m = σ_m²·c(Δ_m)/(Nσ²)·(e_m − e_k).
pub fn gaussian_ml_bias_gradients(model: &ModelSpec, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
    let vars = {
        gaussian_sms_context(model, theta, 0)?;
        model.noise_variances().expect("gaussian model").to_vec()
    };
    let n = model.samples_per_population() as f64;
    let mut grads = Vec::with_capacity(2);
    for m in 0..2 {
        let k = 1 - m;
        let ctx = gaussian_sms_context(model, theta, m)?;
        let coeff = vars[m] * c_factor(ctx.delta_m) / (n * ctx.sigma_sq);
        let mut g = vec![0.0; 2];
        g[m] = coeff;
        g[k] = -coeff;
        grads.push(g);
    }
    Ok(grads)
}
