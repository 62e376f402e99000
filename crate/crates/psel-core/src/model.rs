//! Population models: M independent populations, N samples each.
//!
//! Three observation families cover the closed-form theory:
//! Gaussian populations with known (possibly unequal) noise variances,
//! exponential populations parameterized by their mean, and uniform
//! populations on [0, θ_m]. The uniform family is non-regular — it has no
//! score function or Fisher information — and the corresponding operations
//! fail fast instead of returning garbage.

use rand::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::rng;

/// Observation family of every population in the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Gaussian with known per-population noise variance; mean is the
    /// unknown parameter.
    Gaussian,
    /// Exponential parameterized by its mean θ_m > 0.
    Exponential,
    /// Uniform on [0, θ_m], θ_m > 0 (non-regular).
    Uniform,
}

impl Family {
    /// Whether the family satisfies the regularity conditions needed for
    /// score functions and information matrices.
    #[must_use]
    pub fn is_regular(self) -> bool {
        !matches!(self, Family::Uniform)
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Gaussian => write!(f, "gaussian"),
            Family::Exponential => write!(f, "exponential"),
            Family::Uniform => write!(f, "uniform"),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawModelSpec {
    family: Family,
    populations: usize,
    samples_per_population: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_variances: Option<Vec<f64>>,
}

/// Immutable description of the sampling model: family, number of populations
/// M ≥ 2, common per-population sample count N ≥ 1, and (Gaussian only) the
/// known noise variances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModelSpec", into = "RawModelSpec")]
pub struct ModelSpec {
    family: Family,
    populations: usize,
    samples_per_population: usize,
    noise_variances: Option<Vec<f64>>,
}

impl TryFrom<RawModelSpec> for ModelSpec {
    type Error = Error;

    fn try_from(raw: RawModelSpec) -> Result<Self> {
        ModelSpec::new(
            raw.family,
            raw.populations,
            raw.samples_per_population,
            raw.noise_variances,
        )
    }
}

impl From<ModelSpec> for RawModelSpec {
    fn from(spec: ModelSpec) -> Self {
        RawModelSpec {
            family: spec.family,
            populations: spec.populations,
            samples_per_population: spec.samples_per_population,
            noise_variances: spec.noise_variances,
        }
    }
}

impl ModelSpec {
    /// General constructor; the family-specific helpers below are usually
    /// more convenient.
    pub fn new(
        family: Family,
        populations: usize,
        samples_per_population: usize,
        noise_variances: Option<Vec<f64>>,
    ) -> Result<Self> {
        if populations < 2 {
            return Err(Error::InvalidModel(format!(
                "need at least 2 populations, got {populations}"
            )));
        }
        if samples_per_population == 0 {
            return Err(Error::InvalidModel(
                "samples_per_population must be at least 1".into(),
            ));
        }
        match family {
            Family::Gaussian => {
                let Some(vars) = &noise_variances else {
                    return Err(Error::InvalidModel(
                        "gaussian model requires noise_variances".into(),
                    ));
                };
                if vars.len() != populations {
                    return Err(Error::DimensionMismatch(format!(
                        "noise_variances has length {}, expected {populations}",
                        vars.len()
                    )));
                }
                if vars.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                    return Err(Error::InvalidModel(
                        "noise variances must be finite and positive".into(),
                    ));
                }
            }
            Family::Exponential | Family::Uniform => {
                if noise_variances.is_some() {
                    return Err(Error::InvalidModel(format!(
                        "{family} model takes no noise_variances"
                    )));
                }
            }
        }
        Ok(Self {
            family,
            populations,
            samples_per_population,
            noise_variances,
        })
    }

    /// Gaussian model with known per-population noise variances.
    pub fn gaussian(
        populations: usize,
        samples_per_population: usize,
        noise_variances: Vec<f64>,
    ) -> Result<Self> {
        Self::new(
            Family::Gaussian,
            populations,
            samples_per_population,
            Some(noise_variances),
        )
    }

    /// Exponential model (mean parameterization).
    pub fn exponential(populations: usize, samples_per_population: usize) -> Result<Self> {
        Self::new(Family::Exponential, populations, samples_per_population, None)
    }

    /// Uniform-on-[0, θ] model.
    pub fn uniform(populations: usize, samples_per_population: usize) -> Result<Self> {
        Self::new(Family::Uniform, populations, samples_per_population, None)
    }

    /// Observation family.
    #[must_use]
    pub fn family(&self) -> Family {
        self.family
    }

    /// Number of populations M.
    #[must_use]
    pub fn populations(&self) -> usize {
        self.populations
    }

    /// Samples per population N (common to all populations).
    #[must_use]
    pub fn samples_per_population(&self) -> usize {
        self.samples_per_population
    }

    /// Known noise variances (Gaussian family only).
    #[must_use]
    pub fn noise_variances(&self) -> Option<&[f64]> {
        self.noise_variances.as_deref()
    }

    /// Noise variance of population `m`; panics if not Gaussian.
    pub(crate) fn variance(&self, m: usize) -> f64 {
        self.noise_variances
            .as_ref()
            .expect("variance() requires the gaussian family")[m]
    }

    /// Returns a copy with a different per-population sample count
    /// (used by sweeps over N).
    pub fn with_samples_per_population(&self, n: usize) -> Result<Self> {
        Self::new(self.family, self.populations, n, self.noise_variances.clone())
    }

    fn check_theta_shape(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.populations {
            return Err(Error::DimensionMismatch(format!(
                "parameter vector has length {}, expected {}",
                theta.len(),
                self.populations
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter(
                "parameter vector must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Whether `theta` lies in the family's parameter domain
    /// (scale families require strictly positive entries).
    #[must_use]
    pub fn theta_in_domain(&self, theta: &[f64]) -> bool {
        theta.len() == self.populations
            && theta.iter().all(|t| t.is_finite())
            && match self.family {
                Family::Gaussian => true,
                Family::Exponential | Family::Uniform => theta.iter().all(|t| *t > 0.0),
            }
    }

    /// Shape + domain validation with a typed error.
    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        self.check_theta_shape(theta)?;
        if !self.theta_in_domain(theta) {
            return Err(Error::InvalidParameter(format!(
                "{} family requires strictly positive parameters",
                self.family
            )));
        }
        Ok(())
    }

    fn check_observations(&self, x: &ObservationSet) -> Result<()> {
        if x.samples.len() != self.populations
            || x.samples.iter().any(|row| row.len() != self.samples_per_population)
        {
            return Err(Error::DimensionMismatch(format!(
                "observations are {}x{:?}, model expects {}x{}",
                x.samples.len(),
                x.samples.first().map(Vec::len),
                self.populations,
                self.samples_per_population
            )));
        }
        Ok(())
    }

    /// Log-likelihood log f(x; θ).
    ///
    /// Total over the parameter space: θ outside the family domain, or
    /// observations outside the support (uniform samples above θ_m,
    /// negative exponential samples), give −∞ rather than an error, so grid
    /// searches and backtracking line searches can probe freely. Shape
    /// mismatches and non-finite inputs are still errors.
    pub fn log_likelihood(&self, theta: &[f64], x: &ObservationSet) -> Result<f64> {
        self.check_theta_shape(theta)?;
        self.check_observations(x)?;
        let n = self.samples_per_population as f64;
        let mut total = 0.0;
        match self.family {
            Family::Gaussian => {
                for (m, (theta_m, row)) in theta.iter().zip(&x.samples).enumerate() {
                    let var = self.variance(m);
                    let sq: f64 = row.iter().map(|y| (y - theta_m).powi(2)).sum();
                    total += -0.5 * n * (2.0 * std::f64::consts::PI * var).ln() - sq / (2.0 * var);
                }
            }
            Family::Exponential => {
                for (theta_m, row) in theta.iter().zip(&x.samples) {
                    if *theta_m <= 0.0 {
                        return Ok(f64::NEG_INFINITY);
                    }
                    if row.iter().any(|y| *y < 0.0) {
                        return Ok(f64::NEG_INFINITY);
                    }
                    let sum: f64 = row.iter().sum();
                    total += -n * theta_m.ln() - sum / theta_m;
                }
            }
            Family::Uniform => {
                for (theta_m, row) in theta.iter().zip(&x.samples) {
                    if *theta_m <= 0.0 {
                        return Ok(f64::NEG_INFINITY);
                    }
                    if row.iter().any(|y| *y < 0.0 || *y > *theta_m) {
                        return Ok(f64::NEG_INFINITY);
                    }
                    total += -n * theta_m.ln();
                }
            }
        }
        Ok(total)
    }

    /// Score vector ∇_θ log f(x; θ).
    ///
    /// Errors with [`Error::NonRegularFamily`] for the uniform family and
    /// [`Error::InvalidParameter`] outside the domain.
    pub fn score(&self, theta: &[f64], x: &ObservationSet) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        self.check_observations(x)?;
        let n = self.samples_per_population as f64;
        let means = x.population_means();
        match self.family {
            Family::Gaussian => Ok((0..self.populations)
                .map(|m| n * (means[m] - theta[m]) / self.variance(m))
                .collect()),
            Family::Exponential => Ok((0..self.populations)
                .map(|m| n * (means[m] - theta[m]) / (theta[m] * theta[m]))
                .collect()),
            Family::Uniform => Err(Error::NonRegularFamily(
                "uniform family has no score function".into(),
            )),
        }
    }

    /// Hessian ∇²_θ log f(x; θ) (diagonal for independent populations).
    pub fn hessian(&self, theta: &[f64], x: &ObservationSet) -> Result<Matrix> {
        self.check_theta(theta)?;
        self.check_observations(x)?;
        let n = self.samples_per_population as f64;
        let means = x.population_means();
        let mut h = Matrix::zeros(self.populations);
        match self.family {
            Family::Gaussian => {
                for m in 0..self.populations {
                    h[(m, m)] = -n / self.variance(m);
                }
            }
            Family::Exponential => {
                for m in 0..self.populations {
                    h[(m, m)] = n * (theta[m] - 2.0 * means[m]) / theta[m].powi(3);
                }
            }
            Family::Uniform => {
                return Err(Error::NonRegularFamily(
                    "uniform family has no log-likelihood Hessian".into(),
                ))
            }
        }
        Ok(h)
    }

    /// Classical (unconditional) Fisher information matrix of the model.
    pub fn fim(&self, theta: &[f64]) -> Result<Matrix> {
        self.check_theta(theta)?;
        let n = self.samples_per_population as f64;
        let mut j = Matrix::zeros(self.populations);
        match self.family {
            Family::Gaussian => {
                for m in 0..self.populations {
                    j[(m, m)] = n / self.variance(m);
                }
            }
            Family::Exponential => {
                for m in 0..self.populations {
                    j[(m, m)] = n / (theta[m] * theta[m]);
                }
            }
            Family::Uniform => {
                return Err(Error::NonRegularFamily(
                    "uniform family has no Fisher information".into(),
                ))
            }
        }
        Ok(j)
    }

    /// Per-population sufficient statistic of the selection rule: sample
    /// mean for Gaussian/exponential populations, sample maximum for uniform.
    pub fn sufficient_statistics(&self, x: &ObservationSet) -> Result<Vec<f64>> {
        self.check_observations(x)?;
        Ok(match self.family {
            Family::Gaussian | Family::Exponential => x.population_means(),
            Family::Uniform => x.population_maxima(),
        })
    }

    /// Maximum-likelihood estimate: per-population sample mean
    /// (Gaussian/exponential) or maximum (uniform).
    pub fn ml_estimate(&self, x: &ObservationSet) -> Result<Vec<f64>> {
        self.sufficient_statistics(x)
    }

    /// Minimum-variance-unbiased estimate for the uniform family:
    /// (N+1)/N times the sample maximum.
    pub fn mvu_uniform(&self, x: &ObservationSet) -> Result<Vec<f64>> {
        if self.family != Family::Uniform {
            return Err(Error::InvalidModel(format!(
                "the (N+1)/N·max estimator applies to the uniform family, not {}",
                self.family
            )));
        }
        self.check_observations(x)?;
        let scale = (self.samples_per_population as f64 + 1.0) / self.samples_per_population as f64;
        Ok(x.population_maxima().into_iter().map(|m| scale * m).collect())
    }

    /// Draw one observation set at `theta`.
    ///
    /// Each population uses its own stream derived from `seed`, so samples
    /// are reproducible and independent of evaluation order.
    pub fn sample(&self, theta: &[f64], seed: u64) -> Result<ObservationSet> {
        self.check_theta(theta)?;
        let n = self.samples_per_population;
        let mut samples = Vec::with_capacity(self.populations);
        for (m, theta_m) in theta.iter().enumerate() {
            let mut rng = rng::stream(seed, &[m as u64]);
            let mut row = Vec::with_capacity(n);
            match self.family {
                Family::Gaussian => {
                    let dist = rand_distr::Normal::new(*theta_m, self.variance(m).sqrt())
                        .expect("validated variance");
                    row.extend((0..n).map(|_| dist.sample(&mut rng)));
                }
                Family::Exponential => {
                    let dist =
                        rand_distr::Exp::new(1.0 / theta_m).expect("validated positive mean");
                    row.extend((0..n).map(|_| dist.sample(&mut rng)));
                }
                Family::Uniform => {
                    let dist = rand::distributions::Uniform::new(0.0, *theta_m);
                    row.extend((0..n).map(|_| dist.sample(&mut rng)));
                }
            }
            samples.push(row);
        }
        Ok(ObservationSet {
            samples,
            seed: Some(seed),
        })
    }
}

/// Parameter vector validated against a model: right length, finite, inside
/// the family domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    /// Validate `values` against `model`.
    pub fn new(model: &ModelSpec, values: Vec<f64>) -> Result<Self> {
        model.check_theta(&values)?;
        Ok(Self(values))
    }

    /// Entries as a slice.
    #[must_use]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Consume into the raw vector.
    #[must_use]
    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for ParameterVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// One dataset: M rows of N samples, plus the seed that generated it
/// (when it came from [`ModelSpec::sample`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    samples: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl ObservationSet {
    /// Build from raw rows, validating shape against the model. Sample
    /// *values* are only checked for finiteness — support violations are the
    /// likelihood's business (−∞), not a construction error.
    pub fn new(model: &ModelSpec, samples: Vec<Vec<f64>>) -> Result<Self> {
        if samples.len() != model.populations()
            || samples
                .iter()
                .any(|row| row.len() != model.samples_per_population())
        {
            return Err(Error::DimensionMismatch(format!(
                "observations are {}x{:?}, model expects {}x{}",
                samples.len(),
                samples.first().map(Vec::len),
                model.populations(),
                model.samples_per_population()
            )));
        }
        if samples.iter().flatten().any(|y| !y.is_finite()) {
            return Err(Error::InvalidData("observations must be finite".into()));
        }
        Ok(Self {
            samples,
            seed: None,
        })
    }

    /// Sample rows (one per population).
    #[must_use]
    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    /// Seed that generated this set, if drawn by [`ModelSpec::sample`].
    #[must_use]
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Per-population sample means.
    #[must_use]
    pub fn population_means(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len() as f64)
            .collect()
    }

    /// Per-population sample maxima.
    #[must_use]
    pub fn population_maxima(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }
}
