//! End-to-end acceptance checks for the whole toolkit: the headline
//! statistical claims (bound attainment, analytic biases, estimator
//! orderings, solver agreement) and the operational contracts (determinism,
//! runtime). One test per numbered criterion; each prints a single
//! `ACCEPTANCE NN PASS` line on success (visible with `--nocapture`).
//!
//! The three simulation presets are each run once at full scale and shared
//! between the criteria that read them.

use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use psel_core::bounds::{self, PsfimMethod, PsfimResult};
use psel_core::estimators::{
    self, ipsml, EstimatorSpec, IpsmlConfig, MbpVariant, SolverConfig,
};
use psel_core::montecarlo::{
    self, zeta_surface, EstimatorSummary, ExperimentConfig, McSummary, Preset, SweepPoint,
};
use psel_core::{
    rng, selection, Error, Family, McOptions, ModelSpec, ObservationSet, SelectionRule,
};

/// Worker threads for the shared experiment runs. Results are identical for
/// any value; two exercises the pooled execution path.
const WORKERS: usize = 2;

// ---------------------------------------------------------------------------
// Shared full-scale preset runs
// ---------------------------------------------------------------------------

fn run_full_preset(preset: Preset) -> McSummary {
    let config = montecarlo::preset_experiment_config(preset, false)
        .expect("simulation preset has an experiment config");
    montecarlo::run_experiment(&config, WORKERS).expect("preset experiment runs")
}

/// Uniform sweep over N = 1..=10 with ML, MVU, and the unbiased-under-
/// selection estimator (250 000 replications per point).
fn uniform_sweep() -> &'static McSummary {
    static RUN: OnceLock<McSummary> = OnceLock::new();
    RUN.get_or_init(|| run_full_preset(Preset::Fig3Uniform))
}

/// Gaussian sweep over N ∈ {1,2,5,10,20,50} with ML, one-step
/// Newton-corrected PSML, and one-step MBP (20 000 replications per point).
fn gaussian_sweep() -> &'static McSummary {
    static RUN: OnceLock<McSummary> = OnceLock::new();
    RUN.get_or_init(|| run_full_preset(Preset::Fig56Gaussian))
}

/// Exponential N=1 sweep over θ₂ ∈ {1,…,9} with ML and closed-form PSML
/// (100 000 replications per point), plus its wall-clock time in seconds.
fn exponential_sweep() -> &'static (McSummary, f64) {
    static RUN: OnceLock<(McSummary, f64)> = OnceLock::new();
    RUN.get_or_init(|| {
        let started = Instant::now();
        let summary = run_full_preset(Preset::Fig78Exponential);
        (summary, started.elapsed().as_secs_f64())
    })
}

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

fn estimator<'a>(point: &'a SweepPoint, name: &str) -> &'a EstimatorSummary {
    point
        .estimators
        .iter()
        .find(|e| e.estimator == name)
        .unwrap_or_else(|| panic!("estimator {name} present at the sweep point"))
}

fn point_with_samples(summary: &McSummary, n: usize) -> &SweepPoint {
    summary
        .points
        .iter()
        .find(|p| p.samples_per_population == n)
        .unwrap_or_else(|| panic!("sweep point with N={n}"))
}

fn point_with_sweep_value(summary: &McSummary, value: f64) -> &SweepPoint {
    summary
        .points
        .iter()
        .find(|p| p.sweep_value == Some(value))
        .unwrap_or_else(|| panic!("sweep point at {value}"))
}

/// One-sided paired z-score that the per-batch values in `higher` exceed
/// those in `lower` on average: mean(d)/se(mean(d)) for d = higher − lower.
fn paired_gap_z(higher: &[f64], lower: &[f64]) -> f64 {
    assert_eq!(higher.len(), lower.len());
    let batches = higher.len();
    assert!(batches >= 2, "paired comparison needs batch values");
    let diffs: Vec<f64> = higher.iter().zip(lower).map(|(h, l)| h - l).collect();
    let mean = diffs.iter().sum::<f64>() / batches as f64;
    let ss: f64 = diffs.iter().map(|d| (d - mean).powi(2)).sum();
    let se = (ss / (batches as f64 - 1.0) / batches as f64).sqrt();
    mean / se
}

fn abs_values(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| v.abs()).collect()
}

/// Deterministic U(0,1) draw from the tag-derived seed chain.
fn unit_from_tags(base: u64, tags: &[u64]) -> f64 {
    (rng::derive(base, tags) >> 11) as f64 / (1u64 << 53) as f64
}

// ---------------------------------------------------------------------------
// 1. Exponential N=1: PSML attains the post-selection bound
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_exponential_psml_attains_the_bound() {
    let (summary, seconds) = exponential_sweep();
    for point in &summary.points {
        let bound = point.psi_crb.expect("closed-form bound column");
        let psml = estimator(point, "psml_closed");
        let gap = (psml.psmse - bound).abs();
        assert!(
            gap <= 3.0 * psml.psmse_se,
            "θ₂={:?}: PSML PSMSE {} vs bound {} differs by {} > 3·SE = {}",
            point.sweep_value,
            psml.psmse,
            bound,
            gap,
            3.0 * psml.psmse_se
        );
    }
    let tie = point_with_sweep_value(summary, 5.0);
    let psml = estimator(tie, "psml_closed");
    assert!(
        (24.5..=25.5).contains(&psml.psmse),
        "tie-point PSML PSMSE {} outside [24.5, 25.5]",
        psml.psmse
    );
    assert!(
        *seconds < 120.0,
        "nine-point sweep took {seconds:.1}s, budget is 120s"
    );
    println!(
        "ACCEPTANCE 01 PASS — exponential N=1 PSML attains the bound: tie PSMSE {:.4} ∈ [24.5, 25.5], all 9 grid points within 3 SE of the closed-form bound, run took {:.1}s < 120s",
        psml.psmse, seconds
    );
}

// ---------------------------------------------------------------------------
// 2. Gaussian ML conditional biases match the analytic expressions
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_gaussian_ml_conditional_bias_matches_analytic() {
    let summary = gaussian_sweep();
    let theta = [0.0, 0.1];
    for &n in &[5usize, 10, 20, 50] {
        let point = point_with_samples(summary, n);
        let model = ModelSpec::gaussian(2, n, vec![1.0, 0.1]).unwrap();
        let analytic =
            bounds::analytic_conditional_bias(&model, &SelectionRule::Sms, &theta).unwrap();
        let ml = estimator(point, "ml");
        for m in 0..2 {
            for j in 0..2 {
                let observed = ml.bias.conditional[m][j];
                let se = ml.bias.conditional_se[m][j];
                assert!(se.is_finite() && se > 0.0, "N={n}: usable SE at ({m},{j})");
                assert!(
                    (observed - analytic[(m, j)]).abs() <= 3.0 * se,
                    "N={n}: conditional bias[{m}][{j}] = {observed} vs analytic {} (3·SE = {})",
                    analytic[(m, j)],
                    3.0 * se
                );
            }
            let k = 1 - m;
            assert!(analytic[(m, m)] > 0.0 && analytic[(m, k)] < 0.0);
            assert!(
                ml.bias.conditional[m][m] > 0.0,
                "N={n}: selected-component ML bias must be positive"
            );
            assert!(
                ml.bias.conditional[m][k] < 0.0,
                "N={n}: unselected-component ML bias must be negative"
            );
        }
    }
    println!(
        "ACCEPTANCE 02 PASS — Gaussian ML conditional biases match the analytic expressions within 3 SE at N ∈ {{5,10,20,50}}, with positive selected and negative unselected signs"
    );
}

// ---------------------------------------------------------------------------
// 3. Exponential tie: ML selected-component conditional bias is θ/2
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_exponential_tie_ml_bias_is_half_theta() {
    let (summary, _) = exponential_sweep();
    let tie = point_with_sweep_value(summary, 5.0);
    let ml = estimator(tie, "ml");
    for m in 0..2 {
        let observed = ml.bias.conditional[m][m];
        let se = ml.bias.conditional_se[m][m];
        assert!(
            (observed - 2.5).abs() <= 3.0 * se,
            "event {m}: conditional ML bias {observed} vs θ/2 = 2.5 (3·SE = {})",
            3.0 * se
        );
    }
    println!(
        "ACCEPTANCE 03 PASS — exponential N=1 tie: ML selected-component conditional bias matches θ/2 = 2.5 within 3 SE on both selection events"
    );
}

// ---------------------------------------------------------------------------
// 4. The three Monte-Carlo information forms agree; closed form inverts exactly
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_information_matrix_forms_agree() {
    let model = ModelSpec::gaussian(2, 10, vec![1.0, 0.1]).unwrap();
    let theta = [0.0, 0.1];
    let rule = SelectionRule::Sms;
    let mc_methods = [
        PsfimMethod::Definition,
        PsfimMethod::ScoreForm,
        PsfimMethod::HessianForm,
    ];
    for m in 0..2 {
        let results: Vec<PsfimResult> = mc_methods
            .iter()
            .enumerate()
            .map(|(index, &method)| {
                let mc = McOptions {
                    replications: 200_000,
                    seed: rng::derive(0xACC0_0004, &[m as u64, index as u64]),
                };
                bounds::psfim(&model, &rule, &theta, m, method, Some(&mc)).unwrap()
            })
            .collect();
        for a in 0..mc_methods.len() {
            for b in (a + 1)..mc_methods.len() {
                for i in 0..2 {
                    for j in 0..2 {
                        let va = results[a].matrix[(i, j)];
                        let vb = results[b].matrix[(i, j)];
                        let sa = results[a].mc_standard_error.as_ref().unwrap()[(i, j)];
                        let sb = results[b].mc_standard_error.as_ref().unwrap()[(i, j)];
                        let tolerance = 3.0 * sa.hypot(sb);
                        assert!(
                            (va - vb).abs() <= tolerance,
                            "m={m}: {} vs {} entry ({i},{j}): {va} vs {vb} (3·SE = {tolerance})",
                            results[a].method,
                            results[b].method
                        );
                    }
                }
            }
        }
        let closed = bounds::psfim(&model, &rule, &theta, m, PsfimMethod::ClosedForm, None)
            .unwrap();
        let inverted = closed.matrix.inverse().expect("closed form inverts");
        let reference = bounds::psfim_inverse_gaussian(&model, &theta, m).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (inverted[(i, j)] - reference[(i, j)]).abs() <= 1e-10,
                    "m={m}: inverse entry ({i},{j}): {} vs closed-form {}",
                    inverted[(i, j)],
                    reference[(i, j)]
                );
            }
        }
    }
    println!(
        "ACCEPTANCE 04 PASS — definition/score/Hessian information estimates agree pairwise within 3 MC SE on both selection events, and the closed form matches its analytic inverse to 1e-10"
    );
}

// ---------------------------------------------------------------------------
// 5. Randomized selection: classical reductions are exact
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_randomized_rule_reduces_to_classical_estimation() {
    let rule = SelectionRule::Randomized {
        weights: vec![0.3, 0.7],
    };

    // Bound reduction: the aggregate equals Σ_m p_m · [FIM⁻¹]_mm exactly.
    let gaussian = ModelSpec::gaussian(2, 10, vec![1.0, 0.1]).unwrap();
    let theta = [0.0, 0.1];
    let report =
        bounds::psi_crb(&gaussian, &rule, &theta, PsfimMethod::ClosedForm, None).unwrap();
    let fim_inverse = gaussian.fim(&theta).unwrap().inverse().unwrap();
    let expected = 0.3 * fim_inverse[(0, 0)] + 0.7 * fim_inverse[(1, 1)];
    assert_eq!(
        report.aggregate, expected,
        "aggregate bound must equal the probability-weighted classical bound exactly"
    );

    // Estimator reduction: every PSML variant returns the ML estimate bit
    // for bit, on Gaussian and exponential data alike.
    let exponential = ModelSpec::exponential(2, 5).unwrap();
    let cases: [(&ModelSpec, Vec<f64>); 2] =
        [(&gaussian, vec![0.0, 0.1]), (&exponential, vec![5.0, 3.0])];
    let variants = ["psml_nr", "psml_fs", "psml_closed", "mbp"];
    let mut checked = 0usize;
    for (case, (model, truth)) in cases.into_iter().enumerate() {
        for draw in 0..25u64 {
            let data_seed = rng::derive(0xACC0_0005, &[case as u64, draw]);
            let obs = model.sample(&truth, data_seed).unwrap();
            let mut rule_rng = rng::stream(data_seed, &[u64::MAX]);
            let m = selection::select(model, &rule, &obs, Some(&mut rule_rng)).unwrap();
            let ml = estimators::ml(model, &obs, m).unwrap();
            for name in variants {
                let spec: EstimatorSpec = name.parse().unwrap();
                let result =
                    estimators::estimate(model, &rule, &obs, m, &spec, data_seed).unwrap();
                assert_eq!(
                    result.theta_hat, ml.theta_hat,
                    "{name} must equal ML exactly under a data-independent rule"
                );
                checked += 1;
            }
        }
    }

    // Mean-unbiasedness of ML survives data-independent selection.
    let config = ExperimentConfig {
        model: gaussian.clone(),
        theta_true: theta.to_vec(),
        rule: rule.clone(),
        estimators: vec!["ml".parse().unwrap()],
        replications: 100_000,
        seed: Some(0xACC0_0055),
        sweep: None,
    };
    let summary = montecarlo::run_experiment(&config, WORKERS).unwrap();
    let ml = estimator(&summary.points[0], "ml");
    for m in 0..2 {
        for j in 0..2 {
            let bias = ml.bias.indicator[m][j];
            let se = ml.bias.indicator_se[m][j];
            assert!(
                bias.abs() <= 3.0 * se,
                "indicator bias[{m}][{j}] = {bias} should be 0 within 3·SE = {}",
                3.0 * se
            );
        }
    }
    println!(
        "ACCEPTANCE 05 PASS — randomized rule: aggregate bound equals Σ p_m·[FIM⁻¹]_mm exactly, {checked} PSML/MBP runs equal ML bit-for-bit, ML indicator bias is 0 within 3 SE"
    );
}

// ---------------------------------------------------------------------------
// 6. The augmented-statistic estimator is indicator-unbiased; ML/MVU are not
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_uv_estimator_is_indicator_unbiased_where_baselines_are_not() {
    let summary = uniform_sweep();
    for point in &summary.points {
        let n = point.samples_per_population;
        let uv = estimator(point, "uv");
        for m in 0..2 {
            let bias = uv.bias.indicator[m][m];
            let se = uv.bias.indicator_se[m][m];
            assert!(
                bias.abs() <= 3.0 * se,
                "uniform N={n}: uv indicator bias[{m}] = {bias} exceeds 3·SE = {}",
                3.0 * se
            );
            for name in ["ml", "mvu"] {
                let baseline = estimator(point, name);
                let bias = baseline.bias.indicator[m][m];
                let se = baseline.bias.indicator_se[m][m];
                assert!(
                    bias.abs() > 3.0 * se,
                    "uniform N={n}: {name} indicator bias[{m}] = {bias} should exceed 3·SE = {}",
                    3.0 * se
                );
            }
        }
    }

    let config = ExperimentConfig {
        model: ModelSpec::exponential(2, 1).unwrap(),
        theta_true: vec![5.0, 5.0],
        rule: SelectionRule::Sms,
        estimators: vec!["ml".parse().unwrap(), "uv".parse().unwrap()],
        replications: 100_000,
        seed: Some(0xACC0_0006),
        sweep: None,
    };
    let exp_summary = montecarlo::run_experiment(&config, WORKERS).unwrap();
    let point = &exp_summary.points[0];
    for m in 0..2 {
        let uv = estimator(point, "uv");
        assert!(
            uv.bias.indicator[m][m].abs() <= 3.0 * uv.bias.indicator_se[m][m],
            "exponential N=1: uv indicator bias[{m}] = {} exceeds 3·SE",
            uv.bias.indicator[m][m]
        );
        let ml = estimator(point, "ml");
        assert!(
            ml.bias.indicator[m][m].abs() > 3.0 * ml.bias.indicator_se[m][m],
            "exponential N=1: ml indicator bias[{m}] should exceed 3·SE"
        );
    }
    println!(
        "ACCEPTANCE 06 PASS — augmented-statistic estimator has zero indicator bias within 3 SE on uniform N=1..10 and exponential N=1, while ML/MVU biases exceed 3 SE everywhere"
    );
}

// ---------------------------------------------------------------------------
// 7. Benchmark orderings: lower PSMSE / lower bias with > 3 SE gaps
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_estimator_orderings_reproduce_the_benchmarks() {
    // Uniform sweep: the unbiased-under-selection estimator beats MVU in
    // PSMSE at every N and beats ML for N ≥ 2. At N = 1 its selected-slot
    // error (2x_m − x_k − θ_m) has exactly the same conditional MSE as ML's
    // (x_m − θ_m) on each selection event — the cross term integrates to
    // θ⁴(1/12 + 1/4 − 1/3) = 0 — so the curves coincide there and only a
    // statistical tie can be asserted.
    for point in &uniform_sweep().points {
        let n = point.samples_per_population;
        let uv = estimator(point, "uv");
        for name in ["ml", "mvu"] {
            let baseline = estimator(point, name);
            let z = paired_gap_z(&baseline.batch_psmse, &uv.batch_psmse);
            if n == 1 && name == "ml" {
                assert!(
                    z.abs() <= 3.0,
                    "uniform N=1: uv and ml PSMSE must tie (theoretically equal), z={z:.1}"
                );
                continue;
            }
            assert!(
                uv.psmse < baseline.psmse,
                "uniform N={n}: uv PSMSE {} should be below {name} PSMSE {}",
                uv.psmse,
                baseline.psmse
            );
            assert!(
                z > 3.0,
                "uniform N={n}: {name}−uv PSMSE gap z={z:.1} should exceed 3"
            );
        }
    }

    // Gaussian sweep: both corrected estimators have lower absolute
    // selected-component bias than ML at every N; one-step MBP has the
    // lowest PSMSE at every N; the one-step Newton correction wins on PSMSE
    // once N is large (asymptotic regime N ∈ {20, 50}).
    let summary = gaussian_sweep();
    for point in &summary.points {
        let n = point.samples_per_population;
        let ml = estimator(point, "ml");
        let nr = estimator(point, "psml_nr:1");
        let mbp = estimator(point, "mbp:1");
        for corrected in [nr, mbp] {
            assert!(
                corrected.bias.indicator[0][0].abs() + corrected.bias.indicator[1][1].abs()
                    < ml.bias.indicator[0][0].abs() + ml.bias.indicator[1][1].abs(),
                "gaussian N={n}: {} |indicator bias| should be below ML",
                corrected.estimator
            );
            let z = paired_gap_z(
                &abs_values(&ml.batch_selected_bias),
                &abs_values(&corrected.batch_selected_bias),
            );
            assert!(
                z > 3.0,
                "gaussian N={n}: |bias| gap ML−{} z={z:.1} should exceed 3",
                corrected.estimator
            );
        }
        for other in [ml, nr] {
            assert!(
                mbp.psmse < other.psmse,
                "gaussian N={n}: mbp:1 PSMSE {} should be below {} PSMSE {}",
                mbp.psmse,
                other.estimator,
                other.psmse
            );
            let z = paired_gap_z(&other.batch_psmse, &mbp.batch_psmse);
            assert!(
                z > 3.0,
                "gaussian N={n}: PSMSE gap {}−mbp:1 z={z:.1} should exceed 3",
                other.estimator
            );
        }
    }
    for &n in &[20usize, 50] {
        let point = point_with_samples(summary, n);
        let ml = estimator(point, "ml");
        let nr = estimator(point, "psml_nr:1");
        assert!(nr.psmse < ml.psmse, "gaussian N={n}: psml_nr:1 beats ML");
        let z = paired_gap_z(&ml.batch_psmse, &nr.batch_psmse);
        assert!(
            z > 3.0,
            "gaussian N={n}: PSMSE gap ML−psml_nr:1 z={z:.1} should exceed 3"
        );
    }
    println!(
        "ACCEPTANCE 07 PASS — orderings hold with paired gaps > 3 SE: uniform uv < MVU at every N and < ML for N ≥ 2 (exact tie at N = 1); gaussian one-step MBP lowest PSMSE at every N, both corrections less biased than ML at every N, one-step Newton below ML PSMSE at N ∈ {{20,50}}"
    );
}

// ---------------------------------------------------------------------------
// 8. Solver cross-validation on random fixtures
// ---------------------------------------------------------------------------

/// Interior-solution detector plus the four solvers, shared by both families.
///
/// Returns `false` (fixture skipped, not counted) when exact
/// maximization-by-parts reports that its information-dominance precondition
/// fails at this sample: the fixed-point map is only contractive — and its
/// convergence theory only applies — when the information dominates the
/// selection curvature along the iteration path. Any other solver error is a
/// genuine defect and still panics.
fn cross_validate_solvers(
    model: &ModelSpec,
    obs: &ObservationSet,
    m: usize,
    label: &str,
) -> bool {
    let rule = SelectionRule::Sms;
    let grid_spec: EstimatorSpec = "psml_grid".parse().unwrap();
    let grid = estimators::estimate(model, &rule, obs, m, &grid_spec, 0)
        .unwrap_or_else(|e| panic!("{label}: grid search failed: {e}"));
    let nr = estimators::psml_newton_raphson(model, &rule, obs, m, &SolverConfig::default())
        .unwrap_or_else(|e| panic!("{label}: Newton-Raphson failed: {e}"));
    let fs = estimators::psml_fisher_scoring(model, &rule, obs, m, &SolverConfig::default())
        .unwrap_or_else(|e| panic!("{label}: Fisher scoring failed: {e}"));
    let mbp_config = SolverConfig {
        max_iterations: 5_000,
        ..SolverConfig::default()
    };
    let mbp = match estimators::psml_mbp(model, &rule, obs, m, MbpVariant::Exact, &mbp_config) {
        Ok(result) => result,
        Err(Error::InformationDominanceViolated { .. }) => return false,
        Err(e) => panic!("{label}: maximization-by-parts failed: {e}"),
    };
    assert!(nr.converged, "{label}: Newton-Raphson converges");
    assert!(fs.converged, "{label}: Fisher scoring converges");
    assert!(mbp.converged, "{label}: maximization-by-parts converges");
    let all = [&grid, &nr, &fs, &mbp];
    for a in 0..all.len() {
        for b in (a + 1)..all.len() {
            for j in 0..model.populations() {
                let va = all[a].theta_hat[j];
                let vb = all[b].theta_hat[j];
                assert!(
                    (va - vb).abs() <= 1e-6 * (1.0 + va.abs()),
                    "{label}: {} vs {} component {j}: {va} vs {vb}",
                    all[a].method,
                    all[b].method
                );
            }
        }
    }
    // For the Gaussian family the observed and expected curvature are the
    // same matrix, so Newton-Raphson and Fisher scoring take identical steps;
    // for other families they only share the root, not the iterates.
    if model.family() == Family::Gaussian {
        for j in 0..model.populations() {
            let (va, vb) = (nr.theta_hat[j], fs.theta_hat[j]);
            assert!(
                (va - vb).abs() <= 1e-12 * (1.0 + va.abs()),
                "{label}: Newton and Fisher iterates must coincide: {va} vs {vb}"
            );
        }
    }
    for result in all {
        if result.converged {
            let score = result.final_score_norm.expect("converged results carry a score");
            assert!(
                score <= 1e-10,
                "{label}: {} converged with score residual {score}",
                result.method
            );
        }
    }
    true
}

#[test]
fn criterion_08_solvers_agree_on_random_fixtures() {
    let base = 0xACC0_0008u64;
    let mut gaussian_kept = 0usize;
    let mut dominance_skips = 0usize;
    let mut attempt = 0u64;
    while gaussian_kept < 50 {
        attempt += 1;
        assert!(attempt < 3_000, "enough Gaussian fixtures with interior solutions");
        let tags = |slot: u64| [1u64, attempt, slot];
        let theta = [
            -2.0 + 4.0 * unit_from_tags(base, &tags(0)),
            -2.0 + 4.0 * unit_from_tags(base, &tags(1)),
        ];
        let vars = vec![
            0.2 + 1.8 * unit_from_tags(base, &tags(2)),
            0.2 + 1.8 * unit_from_tags(base, &tags(3)),
        ];
        let n = 1 + (rng::derive(base, &tags(4)) % 20) as usize;
        let model = ModelSpec::gaussian(2, n, vars.clone()).unwrap();
        let obs = model.sample(&theta, rng::derive(base, &tags(5))).unwrap();
        let m = selection::select(&model, &SelectionRule::Sms, &obs, None).unwrap();
        let closed = estimators::psml_gaussian_closed(&model, &obs, m).unwrap();
        let ml = model.ml_estimate(&obs).unwrap();
        // Keep fixtures whose stationary point is tame: inside the default
        // search box with margin, and with a standardized gap that keeps
        // every solver in its fast regime.
        let sigma = ((vars[0] + vars[1]) / n as f64).sqrt();
        let k = 1 - m;
        let gap = (closed.theta_hat[m] - closed.theta_hat[k]) / sigma;
        let boxed = (0..2).all(|j| {
            (closed.theta_hat[j] - ml[j]).abs() <= 6.0 * (vars[j] / n as f64).sqrt()
        });
        if !(closed.converged && gap >= -5.0 && boxed) {
            continue;
        }
        if cross_validate_solvers(&model, &obs, m, &format!("gaussian fixture {attempt}")) {
            gaussian_kept += 1;
        } else {
            dominance_skips += 1;
        }
    }

    let mut exponential_kept = 0usize;
    attempt = 0;
    while exponential_kept < 50 {
        attempt += 1;
        assert!(attempt < 3_000, "enough exponential fixtures with interior solutions");
        let tags = |slot: u64| [2u64, attempt, slot];
        let theta = [
            0.5 + 5.5 * unit_from_tags(base, &tags(0)),
            0.5 + 5.5 * unit_from_tags(base, &tags(1)),
        ];
        let n = 1 + (rng::derive(base, &tags(2)) % 10) as usize;
        let model = ModelSpec::exponential(2, n).unwrap();
        let obs = model.sample(&theta, rng::derive(base, &tags(3))).unwrap();
        let m = selection::select(&model, &SelectionRule::Sms, &obs, None).unwrap();
        let Ok(closed) = estimators::psml_exponential_closed(&model, &obs, m) else {
            continue;
        };
        let ml = model.ml_estimate(&obs).unwrap();
        let interior = closed.converged
            && (0..2).all(|j| {
                closed.theta_hat[j] > 0.0
                    && closed.theta_hat[j] >= ml[j] / 8.0
                    && closed.theta_hat[j] <= ml[j] * 8.0
            });
        if !interior {
            continue;
        }
        if cross_validate_solvers(&model, &obs, m, &format!("exponential fixture {attempt}")) {
            exponential_kept += 1;
        } else {
            dominance_skips += 1;
        }
    }
    println!(
        "ACCEPTANCE 08 PASS — grid, Newton-Raphson, Fisher scoring, and maximization-by-parts agree within 1e-6 on {gaussian_kept}+{exponential_kept} random fixtures ({dominance_skips} skipped where the maximization-by-parts dominance precondition fails); Gaussian Newton ≡ Fisher to 1e-12; every converged result has score residual ≤ 1e-10"
    );
}

// ---------------------------------------------------------------------------
// 9. Simulation-based solver matches the analytic-gradient solver
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_simulated_gradient_solver_matches_analytic() {
    let model = ModelSpec::gaussian(2, 10, vec![1.0, 0.1]).unwrap();
    let theta = [0.0, 0.1];
    let rule = SelectionRule::Sms;
    let obs = model.sample(&theta, 0xACC0_0009).unwrap();
    let m = selection::select(&model, &rule, &obs, None).unwrap();

    let analytic =
        estimators::psml_fisher_scoring(&model, &rule, &obs, m, &SolverConfig::default())
            .unwrap();
    assert!(analytic.converged);
    let config = IpsmlConfig {
        fd_step: 0.05,
        replications_per_side: 1_000_000,
        seed: 0x1ACC_0009,
        max_iterations: 50,
    };
    let simulated = ipsml(&model, &rule, &obs, m, &config).unwrap();
    assert!(simulated.converged, "simulation-based solver reaches its noise floor");

    // Delta method: solution noise ≈ J⁻¹ × gradient noise at the solution.
    let gradient_noise = selection::mc_grad_log_selection_probability(
        &model,
        &rule,
        &simulated.theta_hat,
        m,
        config.fd_step,
        config.replications_per_side,
        0xD1F0_0009,
    )
    .unwrap();
    let info_inverse =
        bounds::psfim(&model, &rule, &analytic.theta_hat, m, PsfimMethod::ClosedForm, None)
            .unwrap()
            .matrix
            .inverse()
            .unwrap();
    for j in 0..2 {
        let se: f64 = (0..2)
            .map(|l| info_inverse[(j, l)].abs() * gradient_noise.standard_errors[l])
            .sum();
        let gap = (simulated.theta_hat[j] - analytic.theta_hat[j]).abs();
        assert!(
            gap <= 3.0 * se,
            "component {j}: simulated {} vs analytic {} differs by {gap} > 3·SE = {}",
            simulated.theta_hat[j],
            analytic.theta_hat[j],
            3.0 * se
        );
    }

    // The simulated gradient itself matches the analytic gradient.
    let ml = model.ml_estimate(&obs).unwrap();
    let exact = selection::grad_log_selection_probability(&model, &rule, &ml, m).unwrap();
    let estimated = selection::mc_grad_log_selection_probability(
        &model,
        &rule,
        &ml,
        m,
        config.fd_step,
        config.replications_per_side,
        0xD1F1_0009,
    )
    .unwrap();
    for (j, exact_j) in exact.iter().enumerate() {
        let gap = (estimated.gradient[j] - exact_j).abs();
        assert!(
            gap <= 3.0 * estimated.standard_errors[j],
            "gradient component {j}: {} vs analytic {} (3·SE = {})",
            estimated.gradient[j],
            exact_j,
            3.0 * estimated.standard_errors[j]
        );
    }
    println!(
        "ACCEPTANCE 09 PASS — simulation-based solver (10⁶ replications per side, step 0.05) matches the analytic-gradient solution within 3 MC SE, and the simulated gradient matches the analytic gradient within 3 SE"
    );
}

// ---------------------------------------------------------------------------
// 10. Correction-factor surface shape
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_correction_factor_surface_shape() {
    let surface = zeta_surface();
    let rows = surface.deltas.len();
    let cols = surface.sigma1_sqs.len();
    for j in 0..cols {
        for i in 0..rows - 1 {
            if surface.deltas[i + 1] <= 0.0 {
                assert!(
                    surface.values[i][j] > surface.values[i + 1][j],
                    "ζ must grow as the gap decreases below 0 (σ₁² column {j}, rows {i},{})",
                    i + 1
                );
            }
        }
    }
    for i in 0..rows {
        for j in 0..cols - 1 {
            assert!(
                surface.values[i][j + 1] > surface.values[i][j],
                "ζ must grow with σ₁² (row {i}, columns {j},{})",
                j + 1
            );
        }
    }
    let last = rows - 1;
    assert!((surface.deltas[last] - 5.0).abs() < 1e-12);
    for j in 0..cols {
        assert!(
            (surface.values[last][j] - 1.0).abs() < 0.01,
            "ζ({}, σ₁²={}) = {} should be within 0.01 of 1",
            surface.deltas[last],
            surface.sigma1_sqs[j],
            surface.values[last][j]
        );
    }
    println!(
        "ACCEPTANCE 10 PASS — correction factor rises as the gap decreases below 0, rises with σ₁², and is within 0.01 of 1 at gap +5 across all {cols} variance columns"
    );
}

// ---------------------------------------------------------------------------
// 11. Preset reruns are byte-identical
// ---------------------------------------------------------------------------

fn run_preset_cli(dir: &Path, name: &str) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_psel"))
        .args([
            "preset", name, "--fast", "--seed", "11", "--workers", "2", "--out",
        ])
        .arg(dir)
        .env_remove("PSEL_SEED")
        .output()
        .expect("run the CLI binary")
}

#[test]
fn criterion_11_preset_reruns_are_byte_identical() {
    let presets = [
        ("fig3_uniform", "summary.csv"),
        ("fig4_zeta_surface", "surface.csv"),
        ("fig56_gaussian", "summary.csv"),
        ("fig78_exponential", "summary.csv"),
    ];
    let mut timings = Vec::new();
    for (name, file) in presets {
        let first_dir = tempfile::tempdir().unwrap();
        let second_dir = tempfile::tempdir().unwrap();
        let started = Instant::now();
        let first = run_preset_cli(first_dir.path(), name);
        let seconds = started.elapsed().as_secs_f64();
        let second = run_preset_cli(second_dir.path(), name);
        for output in [&first, &second] {
            assert!(
                output.status.success(),
                "{name}: CLI run failed: {}",
                String::from_utf8_lossy(&output.stderr)
            );
        }
        let first_bytes = std::fs::read(first_dir.path().join(file)).unwrap();
        let second_bytes = std::fs::read(second_dir.path().join(file)).unwrap();
        assert!(
            first_bytes == second_bytes,
            "{name}: reruns with identical seed/reps/workers must produce byte-identical {file}"
        );
        assert!(!first_bytes.is_empty());
        if name == "fig3_uniform" {
            assert!(
                seconds < 60.0,
                "quick uniform preset took {seconds:.1}s, budget is 60s"
            );
        }
        timings.push(format!("{name} {seconds:.1}s"));
    }
    println!(
        "ACCEPTANCE 11 PASS — all four presets rerun byte-identically at fixed seed/reps/workers ({})",
        timings.join(", ")
    );
}
