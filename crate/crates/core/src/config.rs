//! Pipeline configuration: one structured-text file holding every physics
//! parameter, with environment overrides for the seed and output directory
//! only (`SIQRNG_SEED`, `SIQRNG_OUT`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::optical::{Routine, SystemParams};
use crate::synth::NoiseSpec;
use crate::Result;

/// ADC front-end settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdcSettings {
    pub bits: u32,
    pub full_scale_volts: f64,
    pub rate_hz: f64,
}

impl Default for AdcSettings {
    fn default() -> Self {
        Self {
            bits: 12,
            full_scale_volts: 15.0,
            rate_hz: 6.0e8,
        }
    }
}

/// Run lengths and blocking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    /// Total measurements in the data run.
    pub n_tot: u64,
    /// Check-quadrature measurements among them.
    pub n_c: u64,
    /// Samples per quadrature used for the shot-noise calibration run.
    pub calibration_samples: u64,
    /// Samples per synthesis block.
    pub block_len: u64,
}

impl Default for RunSettings {
    fn default() -> Self {
        // n_c is sized so the check-quadrature variance estimate fluctuates
        // well below the worst-casing margin that keeps lambda >= 1;
        // sqrt(n_tot) check samples are too few at desk-scale run lengths.
        Self {
            n_tot: 1 << 22,
            n_c: 32768,
            calibration_samples: 1 << 20,
            block_len: 1 << 16,
        }
    }
}

/// Extractor sizing; the seed is either supplied as hex-packed bits or drawn
/// from the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorSettings {
    pub k: usize,
    pub j: usize,
    pub epsilon_log2: u32,
    /// Optional explicit seed, hex-encoded packed bits of length `k + j - 1`
    /// (MSB-first). Absent means: derive from the master seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_hex: Option<String>,
}

impl Default for ExtractorSettings {
    fn default() -> Self {
        Self {
            k: crate::extractor::DEFAULT_K,
            j: crate::extractor::DEFAULT_J,
            epsilon_log2: crate::extractor::DEFAULT_EPSILON_LOG2,
            seed_hex: None,
        }
    }
}

/// Resolved configuration of a full pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub master_seed: u64,
    pub routine: Routine,
    pub system: SystemParams,
    pub noise: NoiseSpec,
    pub adc: AdcSettings,
    pub run: RunSettings,
    pub extractor: ExtractorSettings,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            master_seed: 1,
            routine: Routine::Two,
            system: default_system(),
            noise: default_noise(),
            adc: AdcSettings::default(),
            run: RunSettings::default(),
            extractor: ExtractorSettings::default(),
            output_dir: PathBuf::from("siqrng-run"),
        }
    }
}

/// Mildly asymmetric chain standing in for a calibrated bench: the ADC full
/// scale puts the vacuum trace near 71 quantization steps of standard
/// deviation, so the code entropy lands close to the reference system's.
fn default_system() -> SystemParams {
    SystemParams {
        t_13: 0.515,
        t_24: 0.495,
        r_14: 0.485,
        r_23: 0.505,
        t_ac: 0.5,
        r_ad: 0.5,
        r_bc: 0.5,
        t_bd: 0.5,
        eta_pm0: 0.98,
        eta_pm1: 0.97,
        eta_pm2: 0.96,
        g_pd1: 1.0,
        g_pd2: 0.95,
        e_lo: 0.02f64.sqrt(),
        phi: 0.0,
        delta_phi: 0.0,
    }
}

fn default_noise() -> NoiseSpec {
    NoiseSpec {
        elec_noise_var: 4.4e-3,
        lo_fluct_var: 0.05,
        ..NoiseSpec::default()
    }
}

/// TOML-facing view: every section optional, mode-b PBS fractions optional
/// within the system table.
#[derive(Debug, Default, Deserialize)]
struct RawConfig {
    master_seed: Option<u64>,
    routine: Option<u8>,
    output_dir: Option<String>,
    system: Option<RawSystem>,
    noise: Option<NoiseSpec>,
    adc: Option<AdcSettings>,
    run: Option<RunSettings>,
    extractor: Option<ExtractorSettings>,
}

#[derive(Debug, Deserialize)]
struct RawSystem {
    t_13: f64,
    t_24: f64,
    r_14: f64,
    r_23: f64,
    t_ac: f64,
    r_ad: f64,
    /// Default: mirror `r_ad` (honest polarization).
    r_bc: Option<f64>,
    /// Default: mirror `t_ac`.
    t_bd: Option<f64>,
    eta_pm0: f64,
    eta_pm1: f64,
    eta_pm2: f64,
    g_pd1: f64,
    g_pd2: f64,
    e_lo: f64,
    #[serde(default)]
    phi: f64,
    #[serde(default)]
    delta_phi: f64,
}

impl PipelineConfig {
    /// Load from a TOML file; absent sections fall back to the defaults.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let raw: RawConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = PipelineConfig::default();
        if let Some(seed) = raw.master_seed {
            cfg.master_seed = seed;
        }
        if let Some(id) = raw.routine {
            cfg.routine = Routine::from_id(id)?;
        }
        if let Some(dir) = raw.output_dir {
            cfg.output_dir = PathBuf::from(dir);
        }
        if let Some(s) = raw.system {
            cfg.system = SystemParams {
                t_13: s.t_13,
                t_24: s.t_24,
                r_14: s.r_14,
                r_23: s.r_23,
                t_ac: s.t_ac,
                r_ad: s.r_ad,
                r_bc: s.r_bc.unwrap_or(s.r_ad),
                t_bd: s.t_bd.unwrap_or(s.t_ac),
                eta_pm0: s.eta_pm0,
                eta_pm1: s.eta_pm1,
                eta_pm2: s.eta_pm2,
                g_pd1: s.g_pd1,
                g_pd2: s.g_pd2,
                e_lo: s.e_lo,
                phi: s.phi,
                delta_phi: s.delta_phi,
            };
        }
        if let Some(n) = raw.noise {
            cfg.noise = n;
        }
        if let Some(a) = raw.adc {
            cfg.adc = a;
        }
        if let Some(r) = raw.run {
            cfg.run = r;
        }
        if let Some(e) = raw.extractor {
            cfg.extractor = e;
        }
        cfg.apply_env_overrides()?;
        Ok(cfg)
    }

    /// Environment overrides: seed and output directory only.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(seed) = std::env::var("SIQRNG_SEED") {
            self.master_seed = seed
                .parse()
                .map_err(|_| Error::Config(format!("SIQRNG_SEED = {seed:?} is not a u64")))?;
        }
        if let Ok(dir) = std::env::var("SIQRNG_OUT") {
            self.output_dir = PathBuf::from(dir);
        }
        Ok(())
    }

    /// Referential consistency across sections.
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.noise.validate()?;
        if !(2..=16).contains(&self.adc.bits) {
            return Err(Error::Config(format!(
                "adc.bits = {} outside supported range 2..=16",
                self.adc.bits
            )));
        }
        if !(self.adc.full_scale_volts > 0.0 && self.adc.rate_hz > 0.0) {
            return Err(Error::Config(
                "adc.full_scale_volts and adc.rate_hz must be positive".into(),
            ));
        }
        if !self.extractor.k.is_multiple_of(self.adc.bits as usize) {
            return Err(Error::Config(format!(
                "extractor.k = {} must be a multiple of adc.bits = {}",
                self.extractor.k, self.adc.bits
            )));
        }
        if !(self.extractor.j >= 1 && self.extractor.j < self.extractor.k) {
            return Err(Error::Config(format!(
                "extractor dimensions must satisfy 1 <= j < k, got k = {}, j = {}",
                self.extractor.k, self.extractor.j
            )));
        }
        if !(self.run.n_c >= 1 && self.run.n_c < self.run.n_tot) {
            return Err(Error::Config(format!(
                "run lengths must satisfy 1 <= n_c < n_tot, got n_tot = {}, n_c = {}",
                self.run.n_tot, self.run.n_c
            )));
        }
        if self.run.block_len == 0 || self.run.calibration_samples < 2 {
            return Err(Error::Config(
                "run.block_len must be >= 1 and run.calibration_samples >= 2".into(),
            ));
        }
        if let Some(hex_seed) = &self.extractor.seed_hex {
            let need_bits = self.extractor.k + self.extractor.j - 1;
            let bytes = hex::decode(hex_seed)
                .map_err(|e| Error::Config(format!("extractor.seed_hex: {e}")))?;
            if bytes.len() * 8 < need_bits {
                return Err(Error::Config(format!(
                    "extractor.seed_hex holds {} bits but k + j - 1 = {need_bits}",
                    bytes.len() * 8
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form (seed included, output directory
    /// excluded), so an identical hash implies an identical run.
    pub fn config_hash(&self) -> String {
        let mut normalized = self.clone();
        normalized.output_dir = PathBuf::new();
        let json = serde_json::to_string(&normalized).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
