//! Estimation after parameter selection.
//!
//! A selection rule picks one of `M` populations from the data (for example,
//! the one with the largest sample mean) and only the selected parameter is
//! then estimated. Naive estimators such as maximum likelihood are biased
//! under this two-stage scheme (the winner's curse). This crate implements:
//!
//! - the post-selection squared-error framework: selected-component error
//!   weighted by selection probability ([`montecarlo`]),
//! - selection rules, selection probabilities, and derivatives of their
//!   logarithms ([`selection`]),
//! - the post-selection Fisher information matrix, Cramér-Rao-type lower
//!   bounds for selection-aware estimators, and their Gaussian/exponential
//!   closed forms ([`bounds`]),
//! - selection-aware estimators: the post-selection maximum likelihood
//!   fixed point with several solvers, maximization-by-parts iterations, a
//!   simulation-based variant, and closed-form unbiased estimators
//!   ([`estimators`]),
//! - a reproducible Monte-Carlo experiment harness with named presets
//!   ([`montecarlo`]).
//!
//! Monte-Carlo execution is data-parallel via rayon when the default
//! `parallel` feature is enabled; the sequential fallback accumulates the
//! same fixed batches in the same order, so results are bit-identical for
//! any worker count and with the feature disabled.

pub mod bounds;
pub mod error;
pub mod estimators;
mod exec;
pub mod mat;
pub mod model;
pub mod montecarlo;
pub mod rng;
pub mod selection;
pub mod special;

pub use error::{Error, Result};
pub use model::{Family, ModelSpec, ObservationSet, ParameterVector};
pub use selection::{McOptions, SelectionRule};
