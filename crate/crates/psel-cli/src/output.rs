//! CSV and manifest writers for the `psel` command-line tool.
//!
//! Every numeric field is written with Rust's shortest round-trip float
//! formatting, so re-parsing a file recovers the exact binary values and
//! identical runs produce byte-identical files. Records are terminated with
//! `\n` and fields never need quoting (numbers and identifier strings only).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use psel_core::bounds::PsiCrbReport;
use psel_core::estimators::EstimateResult;
use psel_core::montecarlo::{McSummary, ZetaSurface};

use crate::{io_error, CliResult};

/// Shortest round-trip decimal representation of one value. `NaN`, `inf`,
/// and `-inf` are written literally; empty cells are handled by callers.
pub fn fmt_f64(value: f64) -> String {
    format!("{value:?}")
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(fmt_f64).unwrap_or_default()
}

/// Serialize rows of ready-made fields as CSV bytes (`\n` line endings).
fn csv_bytes(rows: &[Vec<String>]) -> Vec<u8> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        writer.write_record(row).expect("in-memory CSV write");
    }
    writer.into_inner().expect("in-memory CSV flush")
}

/// `psi_crb.csv`: one row per selected index (1-based `m`) and a final
/// aggregate row. `se` is empty for exact (closed-form) values.
pub fn psi_crb_csv(report: &PsiCrbReport) -> Vec<u8> {
    let mut rows = vec![vec![
        "m".to_string(),
        "pr_select".to_string(),
        "component_bound".to_string(),
        "se".to_string(),
    ]];
    for component in &report.components {
        rows.push(vec![
            (component.m + 1).to_string(),
            fmt_f64(component.probability),
            fmt_f64(component.bound),
            fmt_opt(component.bound_se),
        ]);
    }
    rows.push(vec![
        "aggregate".to_string(),
        String::new(),
        fmt_f64(report.aggregate),
        fmt_opt(report.aggregate_se),
    ]);
    csv_bytes(&rows)
}

/// `estimate.csv`: one row per estimator run on a single observation set.
/// `m_selected` is 1-based; failed estimators carry NaN estimates and
/// `converged = false`.
pub fn estimate_csv(populations: usize, rows_in: &[(String, usize, EstimateResult)]) -> Vec<u8> {
    let mut header = vec!["estimator".to_string(), "m_selected".to_string()];
    for j in 1..=populations {
        header.push(format!("theta_hat_{j}"));
    }
    header.extend(["iterations", "score_norm", "converged"].map(str::to_string));
    let mut rows = vec![header];
    for (name, m, result) in rows_in {
        let mut row = vec![name.clone(), (m + 1).to_string()];
        row.extend(result.theta_hat.iter().map(|&v| fmt_f64(v)));
        row.push(result.iterations.to_string());
        row.push(fmt_f64(result.final_score_norm.unwrap_or(f64::NAN)));
        row.push(result.converged.to_string());
        rows.push(row);
    }
    csv_bytes(&rows)
}

/// `summary.csv`: one row per estimator × sweep point. `bias_sel` is the
/// total selected-component indicator-weighted bias Σ_m b_m[m], `bias_unsel`
/// the total off-component one Σ_m Σ_{j≠m} b_m[j]; `freq_m` and `cmse_m`
/// reassemble the PSMSE decomposition Σ_m freq_m · cmse_m. Empty cells mean
/// "not applicable" (no sweep axis, no closed-form bound).
pub fn summary_csv(summary: &McSummary, populations: usize) -> Vec<u8> {
    let mut header = vec![
        "sweep_value".to_string(),
        "estimator".to_string(),
        "psmse".to_string(),
        "psmse_se".to_string(),
        "bias_sel".to_string(),
        "bias_unsel".to_string(),
    ];
    for j in 1..=populations {
        header.push(format!("freq_{j}"));
    }
    for j in 1..=populations {
        header.push(format!("cmse_{j}"));
    }
    header.push("psi_crb".to_string());
    header.push("biased_psi_crb".to_string());
    let mut rows = vec![header];
    for point in &summary.points {
        for estimator in &point.estimators {
            let mut bias_sel = 0.0;
            let mut bias_unsel = 0.0;
            for (m, row) in estimator.bias.indicator.iter().enumerate() {
                for (j, &value) in row.iter().enumerate() {
                    if j == m {
                        bias_sel += value;
                    } else {
                        bias_unsel += value;
                    }
                }
            }
            let mut row = vec![
                fmt_opt(point.sweep_value),
                estimator.estimator.clone(),
                fmt_f64(estimator.psmse),
                fmt_f64(estimator.psmse_se),
                fmt_f64(bias_sel),
                fmt_f64(bias_unsel),
            ];
            row.extend(point.selection_freq.iter().map(|&v| fmt_f64(v)));
            row.extend(estimator.conditional_mse.iter().map(|&v| fmt_f64(v)));
            row.push(fmt_opt(point.psi_crb));
            row.push(fmt_opt(point.biased_psi_crb));
            rows.push(row);
        }
    }
    csv_bytes(&rows)
}

/// `surface.csv`: the correction-factor table in long form, one row per
/// (gap, first-population variance) grid node.
pub fn surface_csv(surface: &ZetaSurface) -> Vec<u8> {
    let mut rows = vec![vec![
        "delta".to_string(),
        "sigma1_sq".to_string(),
        "zeta".to_string(),
    ]];
    for (i, &delta) in surface.deltas.iter().enumerate() {
        for (j, &sigma1_sq) in surface.sigma1_sqs.iter().enumerate() {
            rows.push(vec![
                fmt_f64(delta),
                fmt_f64(sigma1_sq),
                fmt_f64(surface.values[i][j]),
            ]);
        }
    }
    csv_bytes(&rows)
}

/// One output file as recorded in the manifest.
#[derive(Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

/// `manifest.json`: what ran, with what inputs, and checksums of every data
/// file the run wrote.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub wall_time_seconds: f64,
    pub config: serde_json::Value,
    pub outputs: Vec<OutputRecord>,
}

/// Write one output file into `dir`, returning its manifest record.
pub fn write_output(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<OutputRecord> {
    fs::create_dir_all(dir).map_err(|e| io_error(format!("create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| io_error(format!("write {}: {e}", path.display())))?;
    let digest = Sha256::digest(bytes);
    let mut sha256 = String::with_capacity(2 * digest.len());
    for byte in digest {
        write!(sha256, "{byte:02x}").expect("hex digest");
    }
    Ok(OutputRecord {
        file: name.to_string(),
        bytes: bytes.len() as u64,
        sha256,
    })
}

/// Serialize and write `manifest.json` alongside the data files it lists.
pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(manifest)
        .map_err(|e| io_error(format!("serialize manifest: {e}")))?;
    text.push('\n');
    let path = dir.join("manifest.json");
    fs::write(&path, text).map_err(|e| io_error(format!("write {}: {e}", path.display())))
}
