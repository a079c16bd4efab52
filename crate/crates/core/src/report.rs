//! Consolidated run report: one document aggregating the entropy report,
//! extractor manifest, battery results and the analysis tables. Missing
//! stage outputs are listed by name instead of being glossed over.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::entropy::EntropyReport;
use crate::error::Error;
use crate::extractor::ExtractionManifest;
use crate::pipeline::{files, unix_now, CmrrOutput, RunManifest};
use crate::stats::{AutocorrResult, BatteryReport};
use crate::Result;

/// Compact autocorrelation summary carried in the report (the full tables
/// stay in their own files).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutocorrSummary {
    pub n: usize,
    pub max_lag: usize,
    pub confidence_bound: f64,
    pub max_abs_coefficient: f64,
    pub mean_coefficient: f64,
    pub mean_abs_coefficient: f64,
    /// Lags whose coefficient exceeds the confidence bound.
    pub significant_lags: Vec<usize>,
}

impl From<&AutocorrResult> for AutocorrSummary {
    fn from(ac: &AutocorrResult) -> Self {
        let max_abs = ac.coefficients.iter().map(|c| c.abs()).fold(0.0, f64::max);
        let significant = ac
            .coefficients
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() > ac.confidence_bound)
            .map(|(i, _)| i + 1)
            .collect();
        Self {
            n: ac.n,
            max_lag: ac.coefficients.len(),
            confidence_bound: ac.confidence_bound,
            max_abs_coefficient: max_abs,
            mean_coefficient: ac.mean_coefficient,
            mean_abs_coefficient: ac.mean_abs_coefficient,
            significant_lags: significant,
        }
    }
}

/// The consolidated report document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsolidatedReport {
    pub config_hash: String,
    pub master_seed: u64,
    pub stage_version: String,
    /// Isolated timestamp; clear it when comparing runs for determinism.
    pub generated_at: u64,
    pub entropy: EntropyReport,
    pub extraction: ExtractionManifest,
    pub battery: BatteryReport,
    pub autocorr_raw: AutocorrSummary,
    pub autocorr_extracted: AutocorrSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cmrr: Option<CmrrOutput>,
}

fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(
        dir.join(name),
    )?)?)
}

/// Assemble the report from a completed run directory.
pub fn assemble(dir: &Path) -> Result<ConsolidatedReport> {
    let required = [
        files::RUN_MANIFEST,
        files::ENTROPY_REPORT,
        files::EXTRACT_MANIFEST,
        files::BATTERY,
        files::AUTOCORR_RAW_JSON,
        files::AUTOCORR_EXTRACTED_JSON,
    ];
    let missing: Vec<String> = required
        .iter()
        .filter(|name| !dir.join(name).exists())
        .map(|name| name.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingStages(missing));
    }

    let run: RunManifest = read_json(dir, files::RUN_MANIFEST)?;
    let entropy: EntropyReport = read_json(dir, files::ENTROPY_REPORT)?;
    let extraction: ExtractionManifest = read_json(dir, files::EXTRACT_MANIFEST)?;
    let battery: BatteryReport = read_json(dir, files::BATTERY)?;
    let ac_raw: AutocorrResult = read_json(dir, files::AUTOCORR_RAW_JSON)?;
    let ac_ext: AutocorrResult = read_json(dir, files::AUTOCORR_EXTRACTED_JSON)?;
    let cmrr: Option<CmrrOutput> = if dir.join(files::CMRR).exists() {
        Some(read_json(dir, files::CMRR)?)
    } else {
        None
    };

    Ok(ConsolidatedReport {
        config_hash: run.config_hash,
        master_seed: run.master_seed,
        stage_version: run.stage_version,
        generated_at: unix_now(),
        entropy,
        extraction,
        battery,
        autocorr_raw: AutocorrSummary::from(&ac_raw),
        autocorr_extracted: AutocorrSummary::from(&ac_ext),
        cmrr,
    })
}

/// Assemble and write `report.json` into the run directory.
pub fn assemble_and_write(dir: &Path) -> Result<ConsolidatedReport> {
    let report = assemble(dir)?;
    std::fs::write(
        dir.join(files::REPORT),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(report)
}
