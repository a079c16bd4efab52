//! Pipeline stages: solve, simulate (with shot-noise calibration), certify,
//! extract, analyze. Every stage works through files in a run directory so
//! stages can run standalone or chained, and every artifact is traceable to
//! the config hash, master seed and stage version.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::entropy::{
    certify, cross_covariance_diagnostic, EntropyReport, QuadratureHistogram, SnuCalibration,
};
use crate::error::Error;
use crate::extractor::{ExtractionManifest, ExtractorConfig, StreamExtractor, ToeplitzHasher};
use crate::optical::{
    cmrr_from_spectra, compute_coefficients, gain_aggregates, quadrature_coefficients_at,
    solve_routine, DerivedCoefficients, RoutineConfig, SystemParams,
};
use crate::rng::{substream, Stage};
use crate::stats::{
    autocorrelation, autocorrelation_bits, randomness_battery, welch_psd, AutocorrResult,
    BatteryReport, PsdResult,
};
use crate::synth::{quantize, synth_analog_from, BlockMeta, NoiseSpec, Quadrature, RawSidecar};
use crate::Result;

pub const STAGE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod files {
    pub const RUN_MANIFEST: &str = "run.json";
    pub const SOLVE: &str = "solve.json";
    pub const RAW_X: &str = "raw_x.bin";
    pub const RAW_P: &str = "raw_p.bin";
    pub const RAW_META: &str = "raw_meta.json";
    pub const ENTROPY_REPORT: &str = "entropy_report.json";
    pub const BITS: &str = "bits.bin";
    pub const EXTRACT_MANIFEST: &str = "extract_manifest.json";
    pub const BATTERY: &str = "battery.json";
    pub const AUTOCORR_RAW_JSON: &str = "autocorr_raw.json";
    pub const AUTOCORR_RAW_TSV: &str = "autocorr_raw.tsv";
    pub const AUTOCORR_EXTRACTED_JSON: &str = "autocorr_extracted.json";
    pub const AUTOCORR_EXTRACTED_TSV: &str = "autocorr_extracted.tsv";
    pub const PSD_RAW_TSV: &str = "psd_raw.tsv";
    pub const PSD_DIFF_TSV: &str = "psd_diff.tsv";
    pub const PSD_COMMON_TSV: &str = "psd_common.tsv";
    pub const CMRR: &str = "cmrr.json";
    pub const REPORT: &str = "report.json";
}

/// Run-level manifest written at the start of every pipeline run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub master_seed: u64,
    pub stage_version: String,
    /// Seconds since the Unix epoch; kept separate so determinism checks
    /// can exclude it.
    pub generated_at: u64,
    pub config: PipelineConfig,
}

impl RunManifest {
    pub fn new(cfg: &PipelineConfig) -> Self {
        Self {
            config_hash: cfg.config_hash(),
            master_seed: cfg.master_seed,
            stage_version: STAGE_VERSION.to_string(),
            generated_at: unix_now(),
            config: cfg.clone(),
        }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(files::RUN_MANIFEST);
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Output of the solve stage: gain aggregates, the routine's operating
/// points, and the concrete parameter/coefficient sets for both quadrature
/// settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOutput {
    pub a_coef: f64,
    pub b_coef: f64,
    pub c_coef: f64,
    pub routine_config: RoutineConfig,
    pub x_params: SystemParams,
    pub p_params: SystemParams,
    pub x_coefficients: DerivedCoefficients,
    pub p_coefficients: DerivedCoefficients,
    pub config_hash: String,
    pub master_seed: u64,
    pub stage_version: String,
}

/// Solve the configured routine's bias-free operating points.
pub fn stage_solve(cfg: &PipelineConfig) -> Result<SolveOutput> {
    cfg.validate()?;
    let (a, b, c) = gain_aggregates(&cfg.system);
    let routine_config = solve_routine(cfg.routine, a, b, c)?;
    let x_params = cfg.system.with_setting(&routine_config.x);
    let p_params = cfg.system.with_setting(&routine_config.p);
    let x_coefficients = compute_coefficients(&x_params)?;
    let p_coefficients = compute_coefficients(&p_params)?;
    Ok(SolveOutput {
        a_coef: a,
        b_coef: b,
        c_coef: c,
        routine_config,
        x_params,
        p_params,
        x_coefficients,
        p_coefficients,
        config_hash: cfg.config_hash(),
        master_seed: cfg.master_seed,
        stage_version: STAGE_VERSION.to_string(),
    })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    std::fs::write(dir.join(name), serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Shot-noise calibration: the plain variance (in volts^2) of a quantized
/// vacuum run at the operating LO power, electronic noise included.
///
/// The blocked PBS port delivers true vacuum regardless of what the
/// untrusted source does later, so the calibration always draws
/// unit-variance quadratures.
fn calibrate_snu(
    params: &SystemParams,
    coefs: &DerivedCoefficients,
    cfg: &PipelineConfig,
    stage: Stage,
) -> Result<f64> {
    let cal_noise = NoiseSpec {
        vacuum_var_x: 1.0,
        vacuum_var_p: 1.0,
        ..cfg.noise.clone()
    };
    let seed = crate::rng::derive_seed(cfg.master_seed, stage);
    let total = cfg.run.calibration_samples;
    let block_len = cfg.run.block_len;
    let mut count = 0u64;
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    let delta = cfg.adc.full_scale_volts / (1u64 << cfg.adc.bits) as f64;
    let mut start = 0u64;
    while start < total {
        let len = (total - start).min(block_len) as usize;
        let trace = synth_analog_from(params, coefs, &cal_noise, cfg.adc.rate_hz, len, seed, start);
        let block = quantize(
            &trace,
            cfg.adc.bits,
            cfg.adc.full_scale_volts,
            BlockMeta {
                rate_hz: cfg.adc.rate_hz,
                quadrature: Quadrature::X,
                block_seed: seed,
            },
        )?;
        for &code in &block.codes {
            let v = code as f64 * delta;
            sum += v;
            sum_sq += v * v;
            count += 1;
        }
        start += len as u64;
    }
    let mean = sum / count as f64;
    let var = sum_sq / count as f64 - mean * mean;
    if var <= 0.0 {
        return Err(Error::DegenerateInput(
            "calibration run produced zero variance".into(),
        ));
    }
    Ok(var)
}

/// Simulation stage: calibration runs, seeded quadrature switching, the data
/// run, raw files and the metadata sidecar.
pub fn stage_simulate(cfg: &PipelineConfig, dir: &Path) -> Result<RawSidecar> {
    let solve = stage_solve(cfg)?;
    write_json(dir, files::SOLVE, &solve)?;

    let snu_x = calibrate_snu(
        &solve.x_params,
        &solve.x_coefficients,
        cfg,
        Stage::CalibrationX,
    )?;
    let snu_p = calibrate_snu(
        &solve.p_params,
        &solve.p_coefficients,
        cfg,
        Stage::CalibrationP,
    )?;

    // Seeded random subset of sample indices measuring the check quadrature.
    let n_tot = cfg.run.n_tot;
    let n_c = cfg.run.n_c;
    let mut switch_rng = substream(cfg.master_seed, Stage::Switching, 0);
    let mut check_indices: Vec<u64> =
        rand::seq::index::sample(&mut switch_rng, n_tot as usize, n_c as usize)
            .into_iter()
            .map(|i| i as u64)
            .collect();
    check_indices.sort_unstable();

    let data_seed = crate::rng::derive_seed(cfg.master_seed, Stage::Data);
    let delta = cfg.adc.full_scale_volts / (1u64 << cfg.adc.bits) as f64;
    let mut hist_x = QuadratureHistogram::new(cfg.adc.bits, delta, Quadrature::X);
    let mut hist_p = QuadratureHistogram::new(cfg.adc.bits, delta, Quadrature::P);

    let mut x_file = std::io::BufWriter::new(std::fs::File::create(dir.join(files::RAW_X))?);
    let mut p_file = std::io::BufWriter::new(std::fs::File::create(dir.join(files::RAW_P))?);
    let mut saturated = 0u64;
    let mut schedule_cursor = 0usize;
    let mut start = 0u64;
    while start < n_tot {
        let len = (n_tot - start).min(cfg.run.block_len) as usize;
        // Both settings are driven by the same substream, so the selected
        // sample sees exactly the field fluctuations it would have seen had
        // the switch been thrown in hardware.
        let trace_x = synth_analog_from(
            &solve.x_params,
            &solve.x_coefficients,
            &cfg.noise,
            cfg.adc.rate_hz,
            len,
            data_seed,
            start,
        );
        let trace_p = synth_analog_from(
            &solve.p_params,
            &solve.p_coefficients,
            &cfg.noise,
            cfg.adc.rate_hz,
            len,
            data_seed,
            start,
        );
        let mut mixed = Vec::with_capacity(len);
        let mut is_check = vec![false; len];
        for i in 0..len {
            let global = start + i as u64;
            let check =
                schedule_cursor < check_indices.len() && check_indices[schedule_cursor] == global;
            if check {
                schedule_cursor += 1;
            }
            is_check[i] = check;
            mixed.push(if check { trace_p[i] } else { trace_x[i] });
        }
        let block = quantize(
            &mixed,
            cfg.adc.bits,
            cfg.adc.full_scale_volts,
            BlockMeta {
                rate_hz: cfg.adc.rate_hz,
                quadrature: Quadrature::X,
                block_seed: data_seed,
            },
        )?;
        saturated += block.saturated;
        for (i, &code) in block.codes.iter().enumerate() {
            if is_check[i] {
                hist_p.record(code);
                p_file.write_all(&code.to_le_bytes())?;
            } else {
                hist_x.record(code);
                x_file.write_all(&code.to_le_bytes())?;
            }
        }
        start += len as u64;
    }
    x_file.flush()?;
    p_file.flush()?;

    let sidecar = RawSidecar {
        rate_hz: cfg.adc.rate_hz,
        bits: cfg.adc.bits,
        delta_volts: delta,
        full_scale_volts: cfg.adc.full_scale_volts,
        quadrature_schedule: format!(
            "seeded random subset of {n_c} of {n_tot} samples measures P \
             (switching substream of master seed {})",
            cfg.master_seed
        ),
        n_tot,
        n_c,
        master_seed: cfg.master_seed,
        config_hash: cfg.config_hash(),
        saturated,
        snu_x_volts2: snu_x,
        snu_p_volts2: snu_p,
        snu_provenance: format!(
            "plain variance of {} quantized samples per quadrature at the \
             operating LO power with true-vacuum input; electronic noise \
             included (not subtracted)",
            cfg.run.calibration_samples
        ),
    };
    sidecar.write(&dir.join(files::RAW_META))?;
    Ok(sidecar)
}

fn read_codes(dir: &Path, name: &str) -> Result<Vec<i16>> {
    crate::synth::read_raw_samples(&dir.join(name))
}

/// Certification stage: histograms from the raw files, worst-cased
/// variances against the calibrated shot-noise units, entropy report.
pub fn stage_entropy(dir: &Path) -> Result<EntropyReport> {
    let sidecar = RawSidecar::read(&dir.join(files::RAW_META))?;
    let x_codes = read_codes(dir, files::RAW_X)?;
    let p_codes = read_codes(dir, files::RAW_P)?;
    let mut hist_x = QuadratureHistogram::new(sidecar.bits, sidecar.delta_volts, Quadrature::X);
    let mut hist_p = QuadratureHistogram::new(sidecar.bits, sidecar.delta_volts, Quadrature::P);
    for &c in &x_codes {
        hist_x.record(c);
    }
    for &c in &p_codes {
        hist_p.record(c);
    }
    let snu = SnuCalibration {
        x_volts2_per_snu: sidecar.snu_x_volts2,
        p_volts2_per_snu: sidecar.snu_p_volts2,
        provenance: sidecar.snu_provenance.clone(),
    };
    let mut report = certify(&hist_x, &hist_p, sidecar.n_tot, sidecar.n_c, snu)?;
    report.empirical_cross_covariance =
        cross_covariance_diagnostic(&x_codes, &p_codes, sidecar.delta_volts);
    report.write(&dir.join(files::ENTROPY_REPORT))?;
    Ok(report)
}

/// Extraction stage: size the output against the certified rate, stream the
/// data-quadrature codes through the Toeplitz hasher, write packed bits and
/// the manifest.
pub fn stage_extract(cfg: &PipelineConfig, dir: &Path) -> Result<ExtractionManifest> {
    let report = EntropyReport::read(&dir.join(files::ENTROPY_REPORT))?;
    if !report.certifiable {
        return Err(Error::NoExtractableOutput(format!(
            "certification yields no extractable randomness (r_dis_avg = {:.6})",
            report.r_dis_avg
        )));
    }
    let ext = &cfg.extractor;
    let config = match &ext.seed_hex {
        Some(hex_seed) => {
            let bytes = hex::decode(hex_seed)
                .map_err(|e| Error::Config(format!("extractor.seed_hex: {e}")))?;
            let seed = crate::bitstream::BitBuffer::from_bytes(&bytes, ext.k + ext.j - 1);
            ExtractorConfig::new(ext.k, ext.j, ext.epsilon_log2, seed)?
        }
        None => ExtractorConfig::with_random_seed(ext.k, ext.j, ext.epsilon_log2, cfg.master_seed)?,
    };
    let hasher = ToeplitzHasher::new(config);
    let mut stream = StreamExtractor::new(hasher, report.r_dis_avg, cfg.adc.bits)?;
    let x_codes = read_codes(dir, files::RAW_X)?;
    for chunk in x_codes.chunks(cfg.run.block_len as usize) {
        stream.push_codes(chunk);
    }
    let (bits, mut manifest) = stream.finish();
    manifest.config_hash = cfg.config_hash();
    manifest.master_seed = cfg.master_seed;
    std::fs::write(dir.join(files::BITS), bits.to_bytes())?;
    manifest.write(&dir.join(files::EXTRACT_MANIFEST))?;
    Ok(manifest)
}

fn write_autocorr_tsv(dir: &Path, name: &str, ac: &AutocorrResult) -> Result<()> {
    let mut out = String::with_capacity(ac.coefficients.len() * 24);
    out.push_str(&format!(
        "# n={} confidence_bound={:.6e}\n# lag\tcoefficient\n",
        ac.n, ac.confidence_bound
    ));
    for (i, c) in ac.coefficients.iter().enumerate() {
        out.push_str(&format!("{}\t{:.6e}\n", i + 1, c));
    }
    std::fs::write(dir.join(name), out)?;
    Ok(())
}

fn write_psd_tsv(dir: &Path, name: &str, psd: &PsdResult) -> Result<()> {
    let mut out = String::with_capacity(psd.freq_hz.len() * 24);
    out.push_str(&format!(
        "# segment_len={} overlap={} window={} enbw_hz={:.6e}\n# frequency_hz\tpower_db\n",
        psd.segment_len, psd.overlap, psd.window, psd.enbw_hz
    ));
    for (f, p) in psd.freq_hz.iter().zip(&psd.power_db) {
        out.push_str(&format!("{:.6e}\t{:.6e}\n", f, p));
    }
    std::fs::write(dir.join(name), out)?;
    Ok(())
}

/// CMRR simulation summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CmrrOutput {
    pub tone_hz: f64,
    pub cmrr_db: f64,
    pub segment_len: usize,
    pub samples: usize,
}

/// Maximum autocorrelation lag analyzed.
pub const ANALYZE_MAX_LAG: usize = 100;

/// Analysis stage: battery over the extracted bits, autocorrelation of raw
/// and extracted data, raw-trace spectrum, and (when a probe tone is
/// configured) the differential-vs-common-mode CMRR experiment.
pub fn stage_analyze(cfg: &PipelineConfig, dir: &Path) -> Result<BatteryReport> {
    let manifest = ExtractionManifest::read(&dir.join(files::EXTRACT_MANIFEST))?;
    let bit_bytes = std::fs::read(dir.join(files::BITS))?;
    let bits = crate::bitstream::BitBuffer::from_bytes(&bit_bytes, manifest.output_bits as usize);

    let battery = randomness_battery(&bits)?;
    write_json(dir, files::BATTERY, &battery)?;

    let sidecar = RawSidecar::read(&dir.join(files::RAW_META))?;
    let x_codes = read_codes(dir, files::RAW_X)?;
    let raw_trace: Vec<f64> = x_codes
        .iter()
        .map(|&c| c as f64 * sidecar.delta_volts)
        .collect();

    let ac_raw = autocorrelation(&raw_trace, ANALYZE_MAX_LAG)?;
    write_json(dir, files::AUTOCORR_RAW_JSON, &ac_raw)?;
    write_autocorr_tsv(dir, files::AUTOCORR_RAW_TSV, &ac_raw)?;

    let ac_bits = autocorrelation_bits(&bits, ANALYZE_MAX_LAG)?;
    write_json(dir, files::AUTOCORR_EXTRACTED_JSON, &ac_bits)?;
    write_autocorr_tsv(dir, files::AUTOCORR_EXTRACTED_TSV, &ac_bits)?;

    let seg = 4096usize
        .min(raw_trace.len().next_power_of_two() / 2)
        .max(64);
    let psd_raw = welch_psd(&raw_trace, sidecar.rate_hz, seg, 0.5)?;
    write_psd_tsv(dir, files::PSD_RAW_TSV, &psd_raw)?;

    if cfg.noise.lo_tone_hz.is_some() {
        let cmrr = run_cmrr_experiment(cfg)?;
        write_json(dir, files::CMRR, &cmrr.0)?;
        write_psd_tsv(dir, files::PSD_DIFF_TSV, &cmrr.1)?;
        write_psd_tsv(dir, files::PSD_COMMON_TSV, &cmrr.2)?;
    }
    Ok(battery)
}

/// Differential vs common-mode probe-tone experiment: the differential
/// output comes from the solved bias-free chain, the common-mode output from
/// the same chain with one photodiode blocked.
pub fn run_cmrr_experiment(cfg: &PipelineConfig) -> Result<(CmrrOutput, PsdResult, PsdResult)> {
    let tone_hz = cfg
        .noise
        .lo_tone_hz
        .ok_or_else(|| Error::Config("CMRR experiment needs noise.lo_tone_hz".into()))?;
    let solve = stage_solve(cfg)?;
    // Long segments push the per-bin vacuum floor well below the probe
    // line; the tone residual of a solved chain sits at numerical zero, so
    // the floor is what limits the measured rejection.
    let n = 1usize << 22;
    let seg = 1usize << 20;
    let seed = crate::rng::derive_seed(cfg.master_seed, Stage::Adhoc(100));

    let diff_trace = synth_analog_from(
        &solve.x_params,
        &solve.x_coefficients,
        &cfg.noise,
        cfg.adc.rate_hz,
        n,
        seed,
        0,
    );
    // One PD blocked: recompute the chain with a zeroed gain (skipping
    // validation, which rightly rejects dead detectors for normal runs).
    let cm_params = solve.x_params.common_mode();
    let abc = gain_aggregates(&cm_params);
    let (dc, cx, cp) =
        quadrature_coefficients_at(&cm_params, abc, cm_params.phi, cm_params.delta_phi);
    let cm_coefs = DerivedCoefficients {
        a_coef: abc.0,
        b_coef: abc.1,
        c_coef: abc.2,
        coef_dc: dc,
        coef_x: cx,
        coef_p: cp,
    };
    let common_trace = synth_analog_from(
        &cm_params,
        &cm_coefs,
        &cfg.noise,
        cfg.adc.rate_hz,
        n,
        seed,
        0,
    );

    let psd_diff = welch_psd(&diff_trace, cfg.adc.rate_hz, seg, 0.5)?;
    let psd_common = welch_psd(&common_trace, cfg.adc.rate_hz, seg, 0.5)?;
    let cmrr_db = cmrr_from_spectra(&psd_diff, &psd_common, tone_hz)?;
    Ok((
        CmrrOutput {
            tone_hz,
            cmrr_db,
            segment_len: seg,
            samples: n,
        },
        psd_diff,
        psd_common,
    ))
}

/// Outcome of a full pipeline run.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum PipelineOutcome {
    /// All stages ran; battery verdict attached.
    Completed {
        entropy: EntropyReport,
        extraction: ExtractionManifest,
        battery: BatteryReport,
    },
    /// Certification refused to continue: no extractable randomness.
    Refused { reason: String },
}

/// Run every stage in order, halting cleanly when certification yields no
/// extractable randomness.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir)?;
    write_json(&dir, files::RUN_MANIFEST, &RunManifest::new(cfg))?;

    stage_simulate(cfg, &dir)?;
    let entropy = match stage_entropy(&dir) {
        Ok(report) => report,
        Err(Error::DegenerateInput(msg)) | Err(Error::InvalidState(msg)) => {
            return Ok(PipelineOutcome::Refused {
                reason: format!("uncertifiable run: {msg}"),
            });
        }
        Err(e) => return Err(e),
    };
    if !entropy.certifiable {
        return Ok(PipelineOutcome::Refused {
            reason: format!(
                "no certifiable randomness: r_dis_avg = {:.6} <= 0",
                entropy.r_dis_avg
            ),
        });
    }
    let extraction = match stage_extract(cfg, &dir) {
        Ok(manifest) => manifest,
        Err(Error::NoExtractableOutput(msg)) => {
            return Ok(PipelineOutcome::Refused {
                reason: format!("extraction refused: {msg}"),
            });
        }
        Err(e) => return Err(e),
    };
    let battery = stage_analyze(cfg, &dir)?;
    crate::report::assemble_and_write(&dir)?;
    Ok(PipelineOutcome::Completed {
        entropy,
        extraction,
        battery,
    })
}
