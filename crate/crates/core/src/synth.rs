//! Stochastic synthesis of homodyne output traces and ADC quantization.
//!
//! Stands in for the physical apparatus: draws vacuum quadrature noise, LO
//! amplitude fluctuation (optionally band-limited, optionally tone
//! modulated), and electronic noise, maps them through the chain
//! coefficients, and quantizes the result mid-tread with clip counting.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::optical::{quadrature_coefficients_at, DerivedCoefficients, SystemParams};
use crate::rng::{substream, Stage};
use crate::Result;

/// Quadrature measured by a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrature {
    X,
    P,
}

impl std::fmt::Display for Quadrature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Quadrature::X => write!(f, "X"),
            Quadrature::P => write!(f, "P"),
        }
    }
}

/// One tick of field fluctuations, in shot-noise units.
///
/// The signal-field mean is identically zero: the source is an untrusted
/// zero-mean quantum state.
#[derive(Debug, Clone, Copy, Default)]
pub struct FieldState {
    pub delta_x_s: f64,
    pub delta_p_s: f64,
    pub delta_x_l: f64,
}

impl FieldState {
    pub const E_S: f64 = 0.0;
}

/// Noise and disturbance configuration for a synthesis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Vacuum X-quadrature variance, shot-noise units (1 = pure vacuum).
    pub vacuum_var_x: f64,
    /// Vacuum P-quadrature variance, shot-noise units.
    pub vacuum_var_p: f64,
    /// Variance of the LO amplitude-quadrature fluctuation.
    pub lo_fluct_var: f64,
    /// Single-pole bandwidth of the LO fluctuation; `None` leaves it white.
    /// Classical LO intensity noise is band-limited, which is what makes a
    /// biased chain show lag correlation.
    pub lo_fluct_cutoff_hz: Option<f64>,
    /// Deterministic LO intensity modulation tone, for CMRR probing.
    pub lo_tone_hz: Option<f64>,
    /// Tone modulation depth in [0, 1].
    pub lo_tone_depth: f64,
    /// Electronic noise variance, volts^2.
    pub elec_noise_var: f64,
    /// Slow compensation-phase drift, radians per second.
    pub phase_drift_rad_per_s: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            vacuum_var_x: 1.0,
            vacuum_var_p: 1.0,
            lo_fluct_var: 0.0,
            lo_fluct_cutoff_hz: None,
            lo_tone_hz: None,
            lo_tone_depth: 0.0,
            elec_noise_var: 0.0,
            phase_drift_rad_per_s: 0.0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("vacuum_var_x", self.vacuum_var_x),
            ("vacuum_var_p", self.vacuum_var_p),
            ("lo_fluct_var", self.lo_fluct_var),
            ("elec_noise_var", self.elec_noise_var),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "variance {name} = {v} must be nonnegative"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.lo_tone_depth) {
            return Err(Error::InvalidParameter(format!(
                "lo_tone_depth = {} must lie in [0, 1]",
                self.lo_tone_depth
            )));
        }
        Ok(())
    }
}

/// A block of quantized homodyne samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBlock {
    pub codes: Vec<i16>,
    /// Quantization interval, volts.
    pub delta: f64,
    /// ADC precision, bits.
    pub bits: u32,
    pub rate_hz: f64,
    pub quadrature: Quadrature,
    /// Randomness-stream identifier that produced this block.
    pub block_seed: u64,
    /// Samples clipped to the extreme codes.
    pub saturated: u64,
}

/// Metadata attached to a quantized block.
#[derive(Debug, Clone, Copy)]
pub struct BlockMeta {
    pub rate_hz: f64,
    pub quadrature: Quadrature,
    pub block_seed: u64,
}

/// Synthesize `n` analog output samples starting at trace index 0.
pub fn synth_analog(
    params: &SystemParams,
    coefs: &DerivedCoefficients,
    noise: &NoiseSpec,
    rate_hz: f64,
    n: usize,
    seed: u64,
) -> Vec<f64> {
    synth_analog_from(params, coefs, noise, rate_hz, n, seed, 0)
}

/// Synthesize `n` analog samples beginning at global trace index `start`.
///
/// The tone and drift phases follow the global index so that consecutive
/// blocks form one coherent trace; the noise draws come from the block's own
/// substream, so blocks are independent and may be generated in parallel.
pub fn synth_analog_from(
    params: &SystemParams,
    coefs: &DerivedCoefficients,
    noise: &NoiseSpec,
    rate_hz: f64,
    n: usize,
    seed: u64,
    start: u64,
) -> Vec<f64> {
    let mut rng = substream(seed, Stage::Adhoc(0), start);
    let abc = (coefs.a_coef, coefs.b_coef, coefs.c_coef);

    let sd_xl = noise.lo_fluct_var.sqrt();
    let sd_xs = noise.vacuum_var_x.sqrt();
    let sd_ps = noise.vacuum_var_p.sqrt();
    let sd_el = noise.elec_noise_var.sqrt();

    let lo_mean_power = params.eta_pm0 * params.eta_pm0 * params.e_lo * params.e_lo;
    let lo_fluct_gain = 2.0 * params.eta_pm0 * params.e_lo;

    // AR(1) coefficient for band-limited LO fluctuation.
    let rho = noise
        .lo_fluct_cutoff_hz
        .map(|fc| (-2.0 * std::f64::consts::PI * fc / rate_hz).exp());
    let mut ar_state = match rho {
        Some(_) => {
            let init: f64 = StandardNormal.sample(&mut rng);
            init * sd_xl
        }
        None => 0.0,
    };

    let drift = noise.phase_drift_rad_per_s;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let idx = start + i as u64;
        let t = idx as f64 / rate_hz;

        let w_xl: f64 = StandardNormal.sample(&mut rng);
        let w_xs: f64 = StandardNormal.sample(&mut rng);
        let w_ps: f64 = StandardNormal.sample(&mut rng);
        let w_el: f64 = StandardNormal.sample(&mut rng);

        let field = FieldState {
            delta_x_l: match rho {
                Some(r) => {
                    ar_state = r * ar_state + (1.0 - r * r).sqrt() * w_xl * sd_xl;
                    ar_state
                }
                None => w_xl * sd_xl,
            },
            delta_x_s: w_xs * sd_xs,
            delta_p_s: w_ps * sd_ps,
        };

        let tone_scale = match noise.lo_tone_hz {
            Some(f) => 1.0 + noise.lo_tone_depth * (2.0 * std::f64::consts::PI * f * t).sin(),
            None => 1.0,
        };

        let (dc, cx, cp) = if drift != 0.0 {
            quadrature_coefficients_at(params, abc, params.phi, params.delta_phi + drift * t)
        } else {
            (coefs.coef_dc, coefs.coef_x, coefs.coef_p)
        };

        let v = dc
            * (lo_mean_power * tone_scale * tone_scale
                + lo_fluct_gain * tone_scale * field.delta_x_l)
            + tone_scale * (cx * field.delta_x_s + cp * field.delta_p_s)
            + w_el * sd_el;
        out.push(v);
    }
    out
}

/// Mid-tread uniform quantizer with clip counting.
///
/// `delta = full_scale / 2^bits`; code 0 is centered on 0 V; out-of-range
/// samples clip to the extreme codes and are counted, not rejected.
pub fn quantize(
    analog: &[f64],
    bits: u32,
    full_scale: f64,
    meta: BlockMeta,
) -> Result<SampleBlock> {
    if !(full_scale > 0.0 && full_scale.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "full_scale = {full_scale} must be positive"
        )));
    }
    if !(2..=16).contains(&bits) {
        return Err(Error::InvalidParameter(format!(
            "ADC bits = {bits} outside supported range 2..=16"
        )));
    }
    let delta = full_scale / (1u64 << bits) as f64;
    let max_code = (1i32 << (bits - 1)) - 1;
    let min_code = -(1i32 << (bits - 1));
    let mut saturated = 0u64;
    let codes = analog
        .iter()
        .map(|&v| {
            let q = (v / delta).round();
            if q > max_code as f64 {
                saturated += 1;
                max_code as i16
            } else if q < min_code as f64 {
                saturated += 1;
                min_code as i16
            } else {
                q as i16
            }
        })
        .collect();
    Ok(SampleBlock {
        codes,
        delta,
        bits,
        rate_hz: meta.rate_hz,
        quadrature: meta.quadrature,
        block_seed: meta.block_seed,
        saturated,
    })
}

/// Variance-vs-LO-power sweep with a least-squares line fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceSweep {
    /// `(lo_power_watts, output_variance_volts2)` per point.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
}

/// Sweep the LO power and record the output variance at each point.
///
/// The chain coefficients scale with the LO field, so they are recomputed at
/// every power; the fit exposes the routine-dependent slope.
pub fn variance_sweep(
    params: &SystemParams,
    noise: &NoiseSpec,
    rate_hz: f64,
    lo_powers_watts: &[f64],
    n_per_point: usize,
    seed: u64,
) -> Result<VarianceSweep> {
    if lo_powers_watts.len() < 2 {
        return Err(Error::InsufficientData(
            "variance sweep needs at least 2 LO power points".into(),
        ));
    }
    let mut points = Vec::with_capacity(lo_powers_watts.len());
    for (i, &power) in lo_powers_watts.iter().enumerate() {
        if power < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "LO power {power} W must be nonnegative"
            )));
        }
        let mut p = params.clone();
        p.e_lo = power.sqrt();
        let coefs = crate::optical::compute_coefficients(&p)?;
        let trace = synth_analog(
            &p,
            &coefs,
            noise,
            rate_hz,
            n_per_point,
            seed.wrapping_add(i as u64),
        );
        points.push((power, population_variance(&trace)));
    }
    let (slope, intercept) = linear_fit(&points);
    Ok(VarianceSweep {
        points,
        slope,
        intercept,
    })
}

/// Population variance (divide by n).
pub fn population_variance(data: &[f64]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom == 0.0 {
        return (0.0, sy / n);
    }
    let slope = (n * sxy - sx * sy) / denom;
    (slope, (sy - slope * sx) / n)
}

/// Single-pole low-pass, the stand-in for detector bandwidth shaping.
pub fn single_pole_lowpass(data: &[f64], cutoff_hz: f64, rate_hz: f64) -> Vec<f64> {
    let a = (-2.0 * std::f64::consts::PI * cutoff_hz / rate_hz).exp();
    let mut y = 0.0;
    data.iter()
        .map(|&x| {
            y = a * y + (1.0 - a) * x;
            y
        })
        .collect()
}

/// Raw sample files: little-endian signed 16-bit codes.
pub fn write_raw_samples(path: &Path, codes: &[i16]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for &c in codes {
        w.write_all(&c.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_raw_samples(path: &Path) -> Result<Vec<i16>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "raw sample file {} has odd length",
            path.display()
        )));
    }
    Ok(bytes
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect())
}

/// Structured-text sidecar accompanying raw sample files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSidecar {
    pub rate_hz: f64,
    pub bits: u32,
    pub delta_volts: f64,
    pub full_scale_volts: f64,
    /// Description of how samples were routed between quadratures.
    pub quadrature_schedule: String,
    pub n_tot: u64,
    pub n_c: u64,
    pub master_seed: u64,
    pub config_hash: String,
    pub saturated: u64,
    /// Volts^2 per shot-noise unit for each quadrature's chain, from the
    /// calibration run, with provenance.
    pub snu_x_volts2: f64,
    pub snu_p_volts2: f64,
    pub snu_provenance: String,
}

impl RawSidecar {
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
