//! Source-independent randomness certification.
//!
//! Builds discretized quadrature statistics, worst-cases the finite ADC
//! resolution, evaluates the Gaussian-extremality entropy bound on the
//! eavesdropper, and accounts for the quadrature-switching randomness cost
//! to yield the average extractable bits per sample.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::Error;
use crate::synth::{Quadrature, SampleBlock};
use crate::Result;

/// Per-code counts for one measured quadrature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureHistogram {
    /// Count per ADC code, indexed by `code + 2^(bits-1)`.
    pub counts: Vec<u64>,
    pub bits: u32,
    /// Quantization interval in the working unit (volts).
    pub delta: f64,
    pub n: u64,
    pub quadrature: Quadrature,
}

impl QuadratureHistogram {
    pub fn new(bits: u32, delta: f64, quadrature: Quadrature) -> Self {
        Self {
            counts: vec![0; 1usize << bits],
            bits,
            delta,
            n: 0,
            quadrature,
        }
    }

    pub fn record(&mut self, code: i16) {
        let idx = code as i64 + (1i64 << (self.bits - 1));
        self.counts[idx as usize] += 1;
        self.n += 1;
    }

    pub fn accumulate(&mut self, block: &SampleBlock) -> Result<()> {
        if block.bits != self.bits || block.delta != self.delta {
            return Err(Error::InvalidParameter(
                "sample block ADC settings do not match histogram".into(),
            ));
        }
        for &c in &block.codes {
            self.record(c);
        }
        Ok(())
    }

    /// Associative, commutative merge of count vectors.
    pub fn merge(&mut self, other: &QuadratureHistogram) -> Result<()> {
        if other.bits != self.bits || other.delta != self.delta {
            return Err(Error::InvalidParameter(
                "histogram ADC settings do not match".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.n += other.n;
        Ok(())
    }

    /// Analog value represented by count index `idx`.
    fn value_at(&self, idx: usize) -> f64 {
        (idx as i64 - (1i64 << (self.bits - 1))) as f64 * self.delta
    }
}

/// Shannon entropy of the discretized quadrature, in bits.
pub fn shannon_entropy(hist: &QuadratureHistogram) -> Result<f64> {
    if hist.n == 0 {
        return Err(Error::DegenerateInput("empty histogram".into()));
    }
    let n = hist.n as f64;
    let mut h = 0.0;
    for &c in &hist.counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    Ok(h)
}

/// Plain (unshifted) variance of the histogram values.
pub fn plain_variance(hist: &QuadratureHistogram) -> Result<f64> {
    moments(hist, 0.0)
}

/// Worst-cased variance: every sample is pushed half a bin away from zero
/// before the variance is taken, upper-bounding the underlying analog
/// variance despite the finite resolution.
pub fn worst_case_variance(hist: &QuadratureHistogram) -> Result<f64> {
    let v = moments(hist, hist.delta / 2.0)?;
    if v == 0.0 {
        return Err(Error::DegenerateInput(
            "zero variance after worst-case shift; histogram is degenerate".into(),
        ));
    }
    Ok(v)
}

fn moments(hist: &QuadratureHistogram, shift: f64) -> Result<f64> {
    if hist.n < 2 {
        return Err(Error::InsufficientData(
            "variance needs at least 2 samples".into(),
        ));
    }
    let n = hist.n as f64;
    let shifted = |idx: usize| {
        let a = hist.value_at(idx);
        if a <= 0.0 {
            a - shift
        } else {
            a + shift
        }
    };
    let mut mean = 0.0;
    for (idx, &c) in hist.counts.iter().enumerate() {
        if c > 0 {
            mean += c as f64 * shifted(idx);
        }
    }
    mean /= n;
    let mut var = 0.0;
    for (idx, &c) in hist.counts.iter().enumerate() {
        if c > 0 {
            let d = shifted(idx) - mean;
            var += c as f64 * d * d;
        }
    }
    Ok(var / n)
}

/// Entropy bound of a Gaussian state with symplectic-like parameter
/// `lambda`: `((l+1)/2) log2((l+1)/2) - ((l-1)/2) log2((l-1)/2)`.
///
/// `lambda = 1` is pure vacuum and bounds the eavesdropper at zero bits;
/// below 1 the shot-noise calibration is broken.
pub fn holevo_bound(lambda: f64) -> Result<f64> {
    if lambda.is_nan() || lambda < 1.0 {
        return Err(Error::InvalidState(format!(
            "lambda = {lambda} < 1: shot-noise calibration is inconsistent"
        )));
    }
    let a = (lambda + 1.0) / 2.0;
    let b = (lambda - 1.0) / 2.0;
    let term_b = if b == 0.0 { 0.0 } else { b * b.log2() };
    Ok(a * a.log2() - term_b)
}

/// Switching cost `t = ceil(log2 C(n_tot, n_c))`, the random bits consumed
/// to pick which samples measure the check quadrature.
///
/// Dispatches to the exact big-integer route below 10^6 and the log-gamma
/// route above.
pub fn switching_cost(n_tot: u64, n_c: u64) -> Result<u64> {
    validate_counts(n_tot, n_c)?;
    if n_tot < 1_000_000 {
        switching_cost_exact(n_tot, n_c)
    } else {
        switching_cost_loggamma(n_tot, n_c)
    }
}

/// Exact integer route: the binomial coefficient itself, then its ceiled
/// base-2 logarithm.
pub fn switching_cost_exact(n_tot: u64, n_c: u64) -> Result<u64> {
    validate_counts(n_tot, n_c)?;
    let k = n_c.min(n_tot - n_c);
    let mut c = BigUint::from(1u32);
    for i in 0..k {
        c = c * BigUint::from(n_tot - i) / BigUint::from(i + 1);
    }
    let bits = c.bits();
    let is_pow2 = c.count_ones() == 1;
    Ok(if is_pow2 { bits - 1 } else { bits })
}

/// Log-gamma route, guarded against spurious round-up at the ceiling.
pub fn switching_cost_loggamma(n_tot: u64, n_c: u64) -> Result<u64> {
    validate_counts(n_tot, n_c)?;
    let (n, k) = (n_tot as f64, n_c as f64);
    let log2c =
        (ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)) / std::f64::consts::LN_2;
    Ok((log2c - 1e-9).ceil() as u64)
}

fn validate_counts(n_tot: u64, n_c: u64) -> Result<()> {
    if !(n_c >= 1 && n_tot > n_c) {
        return Err(Error::InvalidParameter(format!(
            "counts must satisfy n_tot > n_c >= 1, got n_tot = {n_tot}, n_c = {n_c}"
        )));
    }
    Ok(())
}

/// Volts^2-to-shot-noise-unit conversion for each quadrature's measurement
/// chain, with its provenance recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnuCalibration {
    pub x_volts2_per_snu: f64,
    pub p_volts2_per_snu: f64,
    pub provenance: String,
}

impl SnuCalibration {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_volts2_per_snu > 0.0 && self.p_volts2_per_snu > 0.0) {
            return Err(Error::InvalidParameter(
                "shot-noise calibration factors must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Identity calibration for inputs already in shot-noise units.
    pub fn identity(provenance: &str) -> Self {
        Self {
            x_volts2_per_snu: 1.0,
            p_volts2_per_snu: 1.0,
            provenance: provenance.to_string(),
        }
    }
}

/// Worst-cased covariance statistics entering the entropy bound.
///
/// The cross term is pinned to zero — the conservative treatment under
/// finite sampling resolution; the empirically observed cross-covariance is
/// reported separately for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    /// Worst-cased variances in shot-noise units.
    pub v_x_bar_snu: f64,
    pub v_p_bar_snu: f64,
    /// The same variances in the native working unit (volts^2).
    pub v_x_bar_volts2: f64,
    pub v_p_bar_volts2: f64,
    /// Cross-covariance used in the bound (always 0).
    pub c: f64,
    /// `sqrt(v_x_bar * v_p_bar - c^2)` in shot-noise units.
    pub lambda: f64,
    pub snu: SnuCalibration,
}

/// Certified randomness figures for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    /// Shannon entropy of the data-quadrature codes, bits.
    pub h_axi: f64,
    /// Eavesdropper bound, bits.
    pub s_holevo: f64,
    /// `h_axi - s_holevo`, bits per data sample.
    pub r_per_sample: f64,
    pub n_tot: u64,
    pub n_c: u64,
    /// Switching-randomness cost, bits.
    pub t_switch: u64,
    /// Average extractable bits per measurement after the switching cost.
    pub r_dis_avg: f64,
    /// False when the average drops to zero or below: no certifiable
    /// randomness, a reportable outcome rather than a failure.
    pub certifiable: bool,
    pub covariance: CovarianceEstimate,
    /// Observed X-P cross-covariance diagnostic, when trace data was
    /// available to compute one.
    pub empirical_cross_covariance: Option<f64>,
}

/// Certification from precomputed statistics (worst-cased variances in
/// shot-noise units plus the measured code entropy).
pub fn certify_from_stats(
    v_x_bar_snu: f64,
    v_p_bar_snu: f64,
    h_axi: f64,
    n_tot: u64,
    n_c: u64,
    snu: SnuCalibration,
) -> Result<EntropyReport> {
    snu.validate()?;
    validate_counts(n_tot, n_c)?;
    if !(v_x_bar_snu > 0.0 && v_p_bar_snu > 0.0) {
        return Err(Error::DegenerateInput(
            "worst-cased variances must be positive".into(),
        ));
    }
    let lambda = (v_x_bar_snu * v_p_bar_snu).sqrt();
    let s_holevo = holevo_bound(lambda)?;
    let r_per_sample = h_axi - s_holevo;
    let t_switch = switching_cost(n_tot, n_c)?;
    let r_dis_avg = ((n_tot - n_c) as f64 * r_per_sample - t_switch as f64) / n_tot as f64;
    Ok(EntropyReport {
        h_axi,
        s_holevo,
        r_per_sample,
        n_tot,
        n_c,
        t_switch,
        r_dis_avg,
        certifiable: r_dis_avg > 0.0,
        covariance: CovarianceEstimate {
            v_x_bar_snu,
            v_p_bar_snu,
            v_x_bar_volts2: v_x_bar_snu * snu.x_volts2_per_snu,
            v_p_bar_volts2: v_p_bar_snu * snu.p_volts2_per_snu,
            c: 0.0,
            lambda,
            snu,
        },
        empirical_cross_covariance: None,
    })
}

/// Full certification from the measured quadrature histograms.
pub fn certify(
    hist_x: &QuadratureHistogram,
    hist_p: &QuadratureHistogram,
    n_tot: u64,
    n_c: u64,
    snu: SnuCalibration,
) -> Result<EntropyReport> {
    snu.validate()?;
    let v_x = worst_case_variance(hist_x)? / snu.x_volts2_per_snu;
    let v_p = worst_case_variance(hist_p)? / snu.p_volts2_per_snu;
    let h = shannon_entropy(hist_x)?;
    certify_from_stats(v_x, v_p, h, n_tot, n_c, snu)
}

/// Diagnostic cross-covariance between interleaved X and P code sequences
/// (paired in acquisition order up to the shorter length), in the working
/// unit squared.
pub fn cross_covariance_diagnostic(x_codes: &[i16], p_codes: &[i16], delta: f64) -> Option<f64> {
    let n = x_codes.len().min(p_codes.len());
    if n < 2 {
        return None;
    }
    let xs = &x_codes[..n];
    let ps = &p_codes[..n];
    let mx = xs.iter().map(|&c| c as f64).sum::<f64>() / n as f64;
    let mp = ps.iter().map(|&c| c as f64).sum::<f64>() / n as f64;
    let cov = xs
        .iter()
        .zip(ps)
        .map(|(&a, &b)| (a as f64 - mx) * (b as f64 - mp))
        .sum::<f64>()
        / n as f64;
    Some(cov * delta * delta)
}

impl EntropyReport {
    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
