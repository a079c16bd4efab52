//! Statistical verification surface: autocorrelation, Welch power spectral
//! density, and a small randomness-test battery for pass/fail smoke checks.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::bitstream::BitBuffer;
use crate::error::Error;
use crate::Result;

/// Normalized sample autocorrelation at lags `1..=max_lag`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutocorrResult {
    /// Coefficient at lag `i + 1`.
    pub coefficients: Vec<f64>,
    pub n: usize,
    /// White-noise significance bound `3 / sqrt(n)`.
    pub confidence_bound: f64,
    /// Mean of the signed coefficients.
    pub mean_coefficient: f64,
    /// Mean of the absolute coefficients (both are reported; summaries in
    /// the literature do not always say which they use).
    pub mean_abs_coefficient: f64,
}

impl AutocorrResult {
    fn from_coefficients(coefficients: Vec<f64>, n: usize) -> Self {
        let len = coefficients.len() as f64;
        let mean = coefficients.iter().sum::<f64>() / len;
        let mean_abs = coefficients.iter().map(|c| c.abs()).sum::<f64>() / len;
        Self {
            coefficients,
            n,
            confidence_bound: 3.0 / (n as f64).sqrt(),
            mean_coefficient: mean,
            mean_abs_coefficient: mean_abs,
        }
    }
}

/// Biased (divide-by-n) normalized autocorrelation of a real sequence.
pub fn autocorrelation(data: &[f64], max_lag: usize) -> Result<AutocorrResult> {
    let n = data.len();
    if max_lag == 0 || n <= 10 * max_lag {
        return Err(Error::InsufficientData(format!(
            "autocorrelation needs n > 10 * max_lag, got n = {n}, max_lag = {max_lag}"
        )));
    }
    let mean = data.iter().sum::<f64>() / n as f64;
    let denom: f64 = data.iter().map(|x| (x - mean) * (x - mean)).sum();
    if denom == 0.0 {
        return Err(Error::DegenerateInput(
            "constant sequence has undefined autocorrelation".into(),
        ));
    }
    let coefficients = (1..=max_lag)
        .map(|k| {
            let num: f64 = (0..n - k)
                .map(|i| (data[i] - mean) * (data[i + k] - mean))
                .sum();
            num / denom
        })
        .collect();
    Ok(AutocorrResult::from_coefficients(coefficients, n))
}

/// The same estimator on a packed bit stream, via popcount identities.
pub fn autocorrelation_bits(bits: &BitBuffer, max_lag: usize) -> Result<AutocorrResult> {
    let n = bits.len();
    if max_lag == 0 || n <= 10 * max_lag {
        return Err(Error::InsufficientData(format!(
            "autocorrelation needs n > 10 * max_lag, got n = {n}, max_lag = {max_lag}"
        )));
    }
    let ones = bits.ones() as f64;
    let nf = n as f64;
    let mean = ones / nf;
    // For x in {0,1}: sum x^2 = sum x, so the centered sum of squares is
    // ones - n * mean^2.
    let denom = ones - nf * mean * mean;
    if denom == 0.0 {
        return Err(Error::DegenerateInput(
            "constant bit sequence has undefined autocorrelation".into(),
        ));
    }
    let coefficients = (1..=max_lag)
        .map(|k| {
            let p = bits.lag_and_count(k) as f64;
            let head = bits.ones_range(0, n - k) as f64;
            let tail = bits.ones_range(k, n) as f64;
            let num = p - mean * (head + tail) + (n - k) as f64 * mean * mean;
            num / denom
        })
        .collect();
    Ok(AutocorrResult::from_coefficients(coefficients, n))
}

/// One-sided Welch power spectral density, dB scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsdResult {
    pub freq_hz: Vec<f64>,
    /// `10 log10` of the spectral density (power per Hz, relative scale).
    pub power_db: Vec<f64>,
    pub segment_len: usize,
    /// Fractional segment overlap in [0, 1).
    pub overlap: f64,
    pub window: String,
    /// Equivalent noise bandwidth of one bin; multiply the density at a
    /// bin-centered tone by this to recover the tone power.
    pub enbw_hz: f64,
}

/// Averaged Hann-windowed periodogram.
pub fn welch_psd(
    data: &[f64],
    rate_hz: f64,
    segment_len: usize,
    overlap: f64,
) -> Result<PsdResult> {
    if segment_len == 0 || !segment_len.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "segment length {segment_len} must be a power of two"
        )));
    }
    if segment_len > data.len() {
        return Err(Error::InsufficientData(format!(
            "segment length {segment_len} exceeds data length {}",
            data.len()
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::InvalidParameter(format!(
            "overlap fraction {overlap} must lie in [0, 1)"
        )));
    }
    let hop = ((segment_len as f64 * (1.0 - overlap)).round() as usize).max(1);

    // Periodic Hann window.
    let window: Vec<f64> = (0..segment_len)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / segment_len as f64).cos()))
        .collect();
    let win_sq_sum: f64 = window.iter().map(|w| w * w).sum();
    let win_sum: f64 = window.iter().sum();

    let fft = FftPlanner::new().plan_fft_forward(segment_len);
    let n_bins = segment_len / 2 + 1;
    let mut accum = vec![0.0f64; n_bins];
    let mut segments = 0usize;
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex::new(0.0, 0.0); segment_len];

    let mut start = 0usize;
    while start + segment_len <= data.len() {
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex::new(data[start + i] * window[i], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (k, slot) in accum.iter_mut().enumerate() {
            *slot += buf[k].norm_sqr();
        }
        segments += 1;
        start += hop;
    }

    let scale = 1.0 / (rate_hz * win_sq_sum * segments as f64);
    let power_db = accum
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let one_sided = if k == 0 || k == n_bins - 1 { 1.0 } else { 2.0 };
            let density = (p * scale * one_sided).max(1e-300);
            10.0 * density.log10()
        })
        .collect();
    let freq_hz = (0..n_bins)
        .map(|k| k as f64 * rate_hz / segment_len as f64)
        .collect();
    Ok(PsdResult {
        freq_hz,
        power_db,
        segment_len,
        overlap,
        window: "hann".to_string(),
        enbw_hz: rate_hz * win_sq_sum / (win_sum * win_sum),
    })
}

/// Outcome of one statistical test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub p_value: f64,
    pub pass: bool,
}

/// Battery outcome; `pass` uses the acceptance band `0.01 <= P <= 0.99`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatteryReport {
    pub n_bits: u64,
    pub results: Vec<TestResult>,
    pub all_pass: bool,
}

/// P-value acceptance band.
pub const P_VALUE_BAND: (f64, f64) = (0.01, 0.99);

/// Block length used by the battery's block-frequency test.
pub const BATTERY_BLOCK_LEN: usize = 128;

/// Minimum stream length accepted by the battery.
pub const BATTERY_MIN_BITS: usize = 1_000_000;

/// Frequency (monobit) test.
pub fn monobit_test(bits: &BitBuffer) -> Result<f64> {
    let n = bits.len();
    if n == 0 {
        return Err(Error::InsufficientData("empty bit stream".into()));
    }
    let ones = bits.ones() as f64;
    let s = 2.0 * ones - n as f64;
    Ok(erfc(s.abs() / (n as f64).sqrt() / std::f64::consts::SQRT_2))
}

/// Frequency-within-a-block test.
pub fn block_frequency_test(bits: &BitBuffer, block_len: usize) -> Result<f64> {
    let n = bits.len();
    if block_len == 0 || n < block_len {
        return Err(Error::InsufficientData(format!(
            "block frequency needs at least one block of {block_len} bits, got {n}"
        )));
    }
    let n_blocks = n / block_len;
    let mut chi2 = 0.0;
    for b in 0..n_blocks {
        let ones = bits.ones_range(b * block_len, (b + 1) * block_len) as f64;
        let pi = ones / block_len as f64;
        chi2 += (pi - 0.5) * (pi - 0.5);
    }
    chi2 *= 4.0 * block_len as f64;
    Ok(gamma_ur(n_blocks as f64 / 2.0, chi2 / 2.0))
}

/// Runs test (with the monobit precondition of SP 800-22).
pub fn runs_test(bits: &BitBuffer) -> Result<f64> {
    let n = bits.len();
    if n < 2 {
        return Err(Error::InsufficientData("runs test needs >= 2 bits".into()));
    }
    let nf = n as f64;
    let pi = bits.ones() as f64 / nf;
    if (pi - 0.5).abs() >= 2.0 / nf.sqrt() {
        // Frequency precondition failed; the stream is non-random already.
        return Ok(0.0);
    }
    // Transitions via popcount identities: sum (x_i != x_{i+1}) =
    // A + B - 2P with A, B the head/tail ones counts and P the lag-1 AND.
    let a = bits.ones_range(0, n - 1) as f64;
    let b = bits.ones_range(1, n) as f64;
    let p = bits.lag_and_count(1) as f64;
    let v = 1.0 + a + b - 2.0 * p;
    let expected = 2.0 * nf * pi * (1.0 - pi);
    Ok(erfc(
        (v - expected).abs() / (2.0 * (2.0 * nf).sqrt() * pi * (1.0 - pi)),
    ))
}

/// Run the three-test battery on a packed bit stream.
pub fn randomness_battery(bits: &BitBuffer) -> Result<BatteryReport> {
    if bits.len() < BATTERY_MIN_BITS {
        return Err(Error::InsufficientData(format!(
            "battery needs at least {BATTERY_MIN_BITS} bits, got {}",
            bits.len()
        )));
    }
    let tests: Vec<(&str, f64)> = vec![
        ("monobit_frequency", monobit_test(bits)?),
        (
            "block_frequency_128",
            block_frequency_test(bits, BATTERY_BLOCK_LEN)?,
        ),
        ("runs", runs_test(bits)?),
    ];
    let results: Vec<TestResult> = tests
        .into_iter()
        .map(|(name, p)| TestResult {
            name: name.to_string(),
            p_value: p,
            pass: p >= P_VALUE_BAND.0 && p <= P_VALUE_BAND.1,
        })
        .collect();
    let all_pass = results.iter().all(|r| r.pass);
    Ok(BatteryReport {
        n_bits: bits.len() as u64,
        results,
        all_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::RngCore;

    fn bits_from_ascii(s: &str) -> BitBuffer {
        let mut b = BitBuffer::new();
        for c in s.chars() {
            b.push_bit(c == '1');
        }
        b
    }

    fn prng_bits(seed: u64, n: usize) -> BitBuffer {
        let mut rng = crate::rng::substream(seed, crate::rng::Stage::Adhoc(20), 0);
        let mut b = BitBuffer::with_capacity(n);
        let mut remaining = n;
        while remaining > 0 {
            let take = remaining.min(64);
            b.push_low_bits(rng.next_u64(), take);
            remaining -= take;
        }
        b
    }

    // SP 800-22 worked examples (sections 2.1, 2.2, 2.3).
    const EPS_100: &str = "1100100100001111110110101010001000100001011010001100\
                           001000110100110001001100011001100010100010111000";

    #[test]
    fn monobit_reference_vectors() {
        let p = monobit_test(&bits_from_ascii("1011010101")).unwrap();
        assert_abs_diff_eq!(p, 0.527089, epsilon = 5e-7);
        let p = monobit_test(&bits_from_ascii(EPS_100)).unwrap();
        assert_abs_diff_eq!(p, 0.109599, epsilon = 5e-7);
    }

    #[test]
    fn block_frequency_reference_vectors() {
        let p = block_frequency_test(&bits_from_ascii("0110011010"), 3).unwrap();
        assert_abs_diff_eq!(p, 0.801252, epsilon = 5e-7);
        let p = block_frequency_test(&bits_from_ascii(EPS_100), 10).unwrap();
        assert_abs_diff_eq!(p, 0.706438, epsilon = 5e-7);
    }

    #[test]
    fn runs_reference_vectors() {
        let p = runs_test(&bits_from_ascii("1001101011")).unwrap();
        assert_abs_diff_eq!(p, 0.147232, epsilon = 5e-7);
        let p = runs_test(&bits_from_ascii(EPS_100)).unwrap();
        assert_abs_diff_eq!(p, 0.500798, epsilon = 5e-7);
    }

    #[test]
    fn all_zero_stream_fails_monobit() {
        let zeros = BitBuffer::from_bytes(&vec![0u8; 125_000], 1_000_000);
        let report = randomness_battery(&zeros).unwrap();
        assert!(report.results[0].p_value < 1e-9);
        assert!(!report.all_pass);
    }

    #[test]
    fn battery_rejects_short_streams() {
        let b = prng_bits(0, 1000);
        assert!(matches!(
            randomness_battery(&b),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn autocorrelation_of_alternating_sequence() {
        let n = 1000;
        let data: Vec<f64> = (0..n)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let ac = autocorrelation(&data, 4).unwrap();
        // The biased estimator gives exactly -(n-1)/n, converging to -1.
        assert_abs_diff_eq!(
            ac.coefficients[0],
            -(n as f64 - 1.0) / n as f64,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(ac.coefficients[0], -1.0, epsilon = 2e-3);
        assert!(ac.coefficients[1] > 0.99);
        assert!(matches!(
            autocorrelation(&vec![2.5; 1000], 4),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn white_noise_autocorrelation_within_bound() {
        let mut rng = crate::rng::substream(12, crate::rng::Stage::Adhoc(21), 0);
        let n = 1_000_000;
        let data: Vec<f64> = (0..n)
            .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))
            .collect();
        let ac = autocorrelation(&data, 100).unwrap();
        for (lag, c) in ac.coefficients.iter().enumerate() {
            assert!(
                c.abs() < ac.confidence_bound,
                "lag {} coefficient {c} beyond {}",
                lag + 1,
                ac.confidence_bound
            );
        }
    }

    #[test]
    fn bit_autocorrelation_matches_float_path() {
        let bits = prng_bits(5, 30_000);
        let as_f64: Vec<f64> = (0..bits.len()).map(|i| bits.get(i) as u8 as f64).collect();
        let fast = autocorrelation_bits(&bits, 50).unwrap();
        let slow = autocorrelation(&as_f64, 50).unwrap();
        for (a, b) in fast.coefficients.iter().zip(&slow.coefficients) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn psd_recovers_bin_centered_tone_power() {
        let rate = 1.0e6;
        let seg = 1024;
        let amp = 0.05;
        // Bin 100 of a 1024-point segment.
        let f = 100.0 * rate / seg as f64;
        let n = 64 * seg;
        let data: Vec<f64> = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * f * i as f64 / rate).sin())
            .collect();
        let psd = welch_psd(&data, rate, seg, 0.5).unwrap();
        let (peak_idx, &peak_db) = psd
            .power_db
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert_eq!(peak_idx, 100);
        let tone_power_db = peak_db + 10.0 * psd.enbw_hz.log10();
        let expected_db = 10.0 * (amp * amp / 2.0).log10();
        assert!(
            (tone_power_db - expected_db).abs() < 0.2,
            "tone power {tone_power_db} dB vs expected {expected_db} dB"
        );
    }

    #[test]
    fn psd_white_noise_is_flat() {
        let mut rng = crate::rng::substream(9, crate::rng::Stage::Adhoc(22), 0);
        let seg = 256;
        let n = 64 * seg;
        let data: Vec<f64> = (0..n)
            .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))
            .collect();
        let psd = welch_psd(&data, 1.0e6, seg, 0.5).unwrap();
        let interior = &psd.power_db[1..psd.power_db.len() - 1];
        let mean = interior.iter().sum::<f64>() / interior.len() as f64;
        let max_dev = interior
            .iter()
            .map(|p| (p - mean).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 3.0, "max deviation {max_dev} dB");
    }

    #[test]
    fn psd_scales_with_input_power() {
        let mut rng = crate::rng::substream(10, crate::rng::Stage::Adhoc(23), 0);
        let data: Vec<f64> = (0..4096)
            .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))
            .collect();
        let gained: Vec<f64> = data.iter().map(|x| 7.5 * x).collect();
        let a = welch_psd(&data, 1.0e6, 512, 0.5).unwrap();
        let b = welch_psd(&gained, 1.0e6, 512, 0.5).unwrap();
        let shift = 20.0 * 7.5f64.log10();
        for (pa, pb) in a.power_db.iter().zip(&b.power_db) {
            assert_abs_diff_eq!(pb - pa, shift, epsilon = 1e-9);
        }
    }

    #[test]
    fn battery_p_values_roughly_uniform_over_seeds() {
        const SEEDS: u64 = 200;
        let mut p_values: Vec<Vec<f64>> = vec![Vec::new(); 3];
        let mut passes = [0u32; 3];
        for seed in 0..SEEDS {
            let bits = prng_bits(1000 + seed, BATTERY_MIN_BITS);
            let report = randomness_battery(&bits).unwrap();
            for (i, r) in report.results.iter().enumerate() {
                p_values[i].push(r.p_value);
                passes[i] += r.pass as u32;
            }
        }
        // Coarse chi-square uniformity check, 10 bins, 1% level (crit 21.67).
        for (i, ps) in p_values.iter().enumerate() {
            let mut bins = [0u32; 10];
            for &p in ps {
                bins[((p * 10.0) as usize).min(9)] += 1;
            }
            let expected = SEEDS as f64 / 10.0;
            let chi2: f64 = bins
                .iter()
                .map(|&o| (o as f64 - expected).powi(2) / expected)
                .sum();
            assert!(chi2 < 21.666, "test {i} chi2 = {chi2}, bins {bins:?}");
        }
        // Band-pass probability is 0.98 per test under the null.
        for (i, &n) in passes.iter().enumerate() {
            assert!(n >= 188, "test {i} passed only {n}/{SEEDS} seeds");
        }
    }
}
