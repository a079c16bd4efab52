//! Acceptance suite: one test per criterion, each printing a pass line once
//! its assertions hold (run with `--nocapture` to see them).

use rand::Rng;

use siqrng::bitstream::BitBuffer;
use siqrng::config::PipelineConfig;
use siqrng::entropy::{
    certify_from_stats, holevo_bound, plain_variance, switching_cost, switching_cost_exact,
    switching_cost_loggamma, worst_case_variance, QuadratureHistogram, SnuCalibration,
};
use siqrng::extractor::{size_output, ExtractorConfig, StreamExtractor, ToeplitzHasher};
use siqrng::optical::{
    compute_coefficients, dc_bracket_scale, gain_aggregates, quadrature_coefficients_at,
    solve_compensation_phase, solve_routine, Routine, SystemParams,
};
use siqrng::pipeline;
use siqrng::stats::{autocorrelation, autocorrelation_bits, randomness_battery, welch_psd};
use siqrng::synth::{synth_analog_from, Quadrature};

/// Reference calibration aggregates (A, B, C).
const REFERENCE_ABC: (f64, f64, f64) = (19.4730, 11.5700, 1871.2);

/// Symplectic parameters obtained by numerically inverting the entropy
/// bound at the reference per-routine (H, H - S) pairs; frozen before the
/// build from an independent high-precision bisection.
const LAMBDA_R1: f64 = 5.77642490628197;
const LAMBDA_R2: f64 = 1.08145005211119;
const LAMBDA_R3: f64 = 2.45425773100441;

fn pass(criterion: u32, detail: &str) {
    println!("ACCEPTANCE {criterion}: PASS — {detail}");
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

#[test]
fn acceptance_1_routine_solutions() {
    let (a, b, c) = REFERENCE_ABC;
    let r1 = solve_routine(Routine::One, a, b, c).unwrap();
    let r2 = solve_routine(Routine::Two, a, b, c).unwrap();
    // Agreement to 4 significant figures.
    assert!(rel_err(r1.x.xi, 3.6934e4) < 1e-4, "xi_1 = {}", r1.x.xi);
    assert!(rel_err(r2.x.xi, 0.5942) < 1e-4, "xi_2 = {}", r2.x.xi);
    assert!(
        rel_err(r2.x.delta_phi, 1.5788) < 1e-4,
        "delta_phi_2 = {}",
        r2.x.delta_phi
    );
    pass(
        1,
        &format!(
            "routine solutions xi_1 = {:.6e}, (xi_2, dphi_2) = ({:.6}, {:.6})",
            r1.x.xi, r2.x.xi, r2.x.delta_phi
        ),
    );
}

#[test]
fn acceptance_2_bias_cancellation() {
    let mut rng = siqrng::rng::substream(2024, siqrng::rng::Stage::Adhoc(40), 0);
    let mut solved = 0u32;
    let mut skipped = 0u32;
    while solved < 10_000 {
        let xi = rng.random_range(0.05..20.0);
        let p = SystemParams {
            t_13: rng.random_range(0.05..0.95),
            t_24: rng.random_range(0.05..0.95),
            r_14: rng.random_range(0.05..0.95),
            r_23: rng.random_range(0.05..0.95),
            t_ac: xi / (1.0 + xi),
            r_ad: 1.0 / (1.0 + xi),
            r_bc: 1.0 / (1.0 + xi),
            t_bd: xi / (1.0 + xi),
            eta_pm0: rng.random_range(0.5..1.0),
            eta_pm1: rng.random_range(0.5..1.0),
            eta_pm2: rng.random_range(0.5..1.0),
            g_pd1: rng.random_range(0.5..2.0),
            g_pd2: rng.random_range(0.5..2.0),
            e_lo: rng.random_range(0.01..1.0),
            phi: rng.random_range(0.0..std::f64::consts::TAU),
            delta_phi: 0.0,
        };
        p.validate().unwrap();
        let (a, b, c) = gain_aggregates(&p);
        let Ok(dphi) = solve_compensation_phase(a, b, c, xi) else {
            skipped += 1;
            continue;
        };
        let (dc, _, _) = quadrature_coefficients_at(&p, (a, b, c), p.phi, dphi);
        let scale = dc_bracket_scale(&p, (a, b, c));
        assert!(
            dc.abs() < 1e-9 * scale,
            "residual {dc:e} at scale {scale:e}"
        );
        solved += 1;
    }
    pass(
        2,
        &format!("|coef_dc| < 1e-9 relative on {solved} solvable sets ({skipped} draws discarded)"),
    );
}

#[test]
fn acceptance_3_switching_cost_and_rate() {
    let n_tot = 2_621_400_000u64;
    let n_c = 51_200u64;
    let t = switching_cost(n_tot, n_c).unwrap();
    // 874821 reads 8.7482e5 at 5 significant figures.
    assert_eq!(t, 874_821);
    let report = certify_from_stats(
        LAMBDA_R2,
        LAMBDA_R2,
        8.1587,
        n_tot,
        n_c,
        SnuCalibration::identity("entropy-bound inversion at the reference (H, R)"),
    )
    .unwrap();
    assert!(
        (report.r_dis_avg - 7.9102).abs() < 1e-4,
        "r_dis_avg = {}",
        report.r_dis_avg
    );
    pass(
        3,
        &format!("t = {t} (8.7482e5), r_dis_avg = {:.5}", report.r_dis_avg),
    );
}

#[test]
fn acceptance_4_leftover_hash_sizing() {
    let bound = size_output(3072, 7.9102, 12, 100).unwrap();
    assert_eq!(bound, 1825);
    assert!(1792 <= bound);

    // j = 1792 accepted, j = 1826 refused by the streaming front end.
    let ok_cfg = ExtractorConfig::with_random_seed(3072, 1792, 100, 11).unwrap();
    assert!(StreamExtractor::new(ToeplitzHasher::new(ok_cfg), 7.9102, 12).is_ok());
    let hot_cfg = ExtractorConfig::with_random_seed(3072, 1826, 100, 11).unwrap();
    assert!(matches!(
        StreamExtractor::new(ToeplitzHasher::new(hot_cfg), 7.9102, 12),
        Err(siqrng::Error::NoExtractableOutput(_))
    ));

    // Exact 7/12 output ratio reproduces the 600 MHz * 12 bit -> 4.2 Gbps
    // arithmetic.
    assert_eq!(1792 * 12, 3072 * 7);
    let gbps = 6.0e8 * 12.0 * 1792.0 / 3072.0;
    assert_eq!(gbps, 4.2e9);
    pass(
        4,
        "bound 1825; j = 1792 accepted, 1826 refused; ratio 7/12 -> 4.2 Gbps",
    );
}

/// Independent naive Toeplitz multiply, coded from the seed layout alone.
fn naive_extract(k: usize, j: usize, seed: &BitBuffer, input: &BitBuffer) -> Vec<bool> {
    let entry = |row: usize, col: usize| {
        if row >= col {
            seed.get(row - col)
        } else {
            seed.get(j - 1 + (col - row))
        }
    };
    (0..j)
        .map(|row| {
            let mut bit = false;
            for col in 0..k {
                bit ^= entry(row, col) && input.get(col);
            }
            bit
        })
        .collect()
}

fn random_bits(rng: &mut impl rand::RngCore, n: usize) -> BitBuffer {
    let mut b = BitBuffer::with_capacity(n);
    let mut remaining = n;
    while remaining > 0 {
        let take = remaining.min(64);
        b.push_low_bits(rng.next_u64(), take);
        remaining -= take;
    }
    b
}

#[test]
fn acceptance_5_toeplitz_correctness() {
    let mut rng = siqrng::rng::substream(55, siqrng::rng::Stage::Adhoc(41), 0);

    // 10^4 random small instances vs the oracle, linearity on each.
    for trial in 0..10_000u64 {
        let j = rng.random_range(1usize..=32);
        let k = rng.random_range(j + 1..=64);
        let cfg = ExtractorConfig::with_random_seed(k, j, 0, trial).unwrap();
        let hasher = ToeplitzHasher::new(cfg.clone());
        let x = random_bits(&mut rng, k);
        let y = random_bits(&mut rng, k);
        let hx = hasher.extract_block(&x).unwrap();
        let hy = hasher.extract_block(&y).unwrap();
        let nx = naive_extract(k, j, &cfg.seed, &x);
        for (i, &bit) in nx.iter().enumerate() {
            assert_eq!(hx.get(i), bit, "k={k} j={j} trial={trial}");
        }
        let mut xy = BitBuffer::with_capacity(k);
        for i in 0..k {
            xy.push_bit(x.get(i) ^ y.get(i));
        }
        let hxy = hasher.extract_block(&xy).unwrap();
        for i in 0..j {
            assert_eq!(hxy.get(i), hx.get(i) ^ hy.get(i), "linearity broke");
        }
    }

    // 100 full-size spot checks at the reference dimensions.
    for trial in 0..100u64 {
        let cfg = ExtractorConfig::with_random_seed(3072, 1792, 100, 50_000 + trial).unwrap();
        let hasher = ToeplitzHasher::new(cfg.clone());
        let x = random_bits(&mut rng, 3072);
        let fast = hasher.extract_block(&x).unwrap();
        let naive = naive_extract(3072, 1792, &cfg.seed, &x);
        for (i, &bit) in naive.iter().enumerate() {
            assert_eq!(fast.get(i), bit, "full-size trial {trial} row {i}");
        }
    }
    pass(
        5,
        "fast path equals naive GF(2) oracle on 10^4 small + 100 full-size instances",
    );
}

#[test]
fn acceptance_6_entropy_math() {
    assert_eq!(holevo_bound(1.0).unwrap(), 0.0);
    assert_eq!(holevo_bound(3.0).unwrap(), 2.0);

    let mut prev = 0.0;
    for i in 1..=1000 {
        let s = holevo_bound(1.0 + i as f64 * 0.02).unwrap();
        assert!(s > prev, "monotonicity broke at grid point {i}");
        prev = s;
    }

    // Worst-casing dominance on 10^4 random histograms.
    let mut rng = siqrng::rng::substream(66, siqrng::rng::Stage::Adhoc(42), 0);
    for _ in 0..10_000 {
        let mut h = QuadratureHistogram::new(8, 0.125, Quadrature::X);
        let n = rng.random_range(2u32..200);
        let spread = rng.random_range(1i16..120);
        for _ in 0..n {
            h.record(rng.random_range(-spread..=spread));
        }
        let plain = plain_variance(&h).unwrap();
        match worst_case_variance(&h) {
            Ok(wc) => assert!(wc >= plain - 1e-12, "wc {wc} < plain {plain}"),
            Err(_) => assert_eq!(plain, 0.0),
        }
    }

    // Log-gamma switching cost equals the exact big-integer route for every
    // (n_tot, n_c) with n_tot <= 1000.
    for n in 2u64..=1000 {
        for k in 1..n {
            assert_eq!(
                switching_cost_loggamma(n, k).unwrap(),
                switching_cost_exact(n, k).unwrap(),
                "switching cost routes disagree at ({n}, {k})"
            );
        }
    }
    pass(
        6,
        "entropy bound, monotonicity, worst-casing dominance, binomial-cost routes",
    );
}

#[test]
fn acceptance_7_routine_comparison() {
    // Per-routine shot-noise factors derived by inverting the entropy bound
    // at the reference (H, R) pairs; the certification path must then land
    // back on the reported per-sample randomness.
    let n_tot = 2_621_400_000u64;
    let n_c = 51_200u64;
    let cases: [(u8, f64, f64, f64, f64, f64); 3] = [
        (1, 2.25e-5, 2.26e-5, 6.3274, LAMBDA_R1, 3.3618),
        (2, 2.85e-4, 2.85e-4, 8.1587, LAMBDA_R2, 7.9107),
        (3, 2.85e-4, 2.25e-5, 8.1587, LAMBDA_R3, 6.4628),
    ];
    let mut rates = Vec::new();
    for (routine, v_x, v_p, h, lambda, expected) in cases {
        let snu = (v_x * v_p).sqrt() / lambda;
        let report = certify_from_stats(
            v_x / snu,
            v_p / snu,
            h,
            n_tot,
            n_c,
            SnuCalibration {
                x_volts2_per_snu: snu,
                p_volts2_per_snu: snu,
                provenance: "entropy-bound inversion at the reference (H, R)".into(),
            },
        )
        .unwrap();
        assert!(
            (report.r_per_sample - expected).abs() < 1e-3,
            "routine {routine}: {} vs {expected}",
            report.r_per_sample
        );
        rates.push(report.r_per_sample);
    }
    // Symmetric quadratures (routine 2) beat the asymmetric routine 3.
    assert!(rates[1] > rates[2] && rates[2] > rates[0]);
    pass(
        7,
        &format!(
            "per-sample randomness {:.4} / {:.4} / {:.4} (routines 1/2/3)",
            rates[0], rates[1], rates[2]
        ),
    );
}

fn probe_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.system.e_lo = 1.0;
    cfg.noise.lo_tone_hz = Some(3.75e7);
    cfg.noise.lo_tone_depth = 1.0;
    cfg
}

#[test]
fn acceptance_8a_cmrr_estimator() {
    // Synthetic tones with a 10^3 amplitude ratio through the full
    // PSD-and-difference path: 60 dB within 0.1 dB.
    let rate = 6.0e8;
    let seg = 4096;
    let f = 64.0 * rate / seg as f64; // bin-centered
    let n = between_segments(seg);
    let small: Vec<f64> = (0..n)
        .map(|i| 1e-3 * (2.0 * std::f64::consts::PI * f * i as f64 / rate).sin())
        .collect();
    let big: Vec<f64> = small.iter().map(|v| v * 1e3).collect();
    let psd_small = welch_psd(&small, rate, seg, 0.5).unwrap();
    let psd_big = welch_psd(&big, rate, seg, 0.5).unwrap();
    let cmrr = siqrng::optical::cmrr_from_spectra(&psd_small, &psd_big, f).unwrap();
    assert!((cmrr - 60.0).abs() < 0.1, "estimator read {cmrr} dB");

    // Identical spectra read zero.
    let zero = siqrng::optical::cmrr_from_spectra(&psd_big, &psd_big, f).unwrap();
    assert_eq!(zero, 0.0);
    pass(
        8,
        &format!("(a) CMRR estimator recovers 60 dB ratio as {cmrr:.3} dB"),
    );
}

fn between_segments(seg: usize) -> usize {
    16 * seg
}

#[test]
fn acceptance_8b_common_mode_suppression_and_autocorr_ordering() {
    // Tone suppression: solved chain vs single-detector common mode.
    let cfg = probe_config();
    let (cmrr, psd_diff, _) = pipeline::run_cmrr_experiment(&cfg).unwrap();
    assert!(
        cmrr.cmrr_db >= 40.0,
        "common-mode suppression {} dB below 40 dB",
        cmrr.cmrr_db
    );

    // Tone suppression: solved chain vs the uncompensated biased chain
    // (compensation phase parked at pi with the same splitting ratio).
    let solve = pipeline::stage_solve(&cfg).unwrap();
    let mut biased_params = solve.x_params.clone();
    biased_params.delta_phi = std::f64::consts::PI;
    let biased_coefs = compute_coefficients(&biased_params).unwrap();
    let n = 1 << 22;
    let seed = siqrng::rng::derive_seed(cfg.master_seed, siqrng::rng::Stage::Adhoc(100));
    let biased_trace = synth_analog_from(
        &biased_params,
        &biased_coefs,
        &cfg.noise,
        cfg.adc.rate_hz,
        n,
        seed,
        0,
    );
    let psd_biased = welch_psd(&biased_trace, cfg.adc.rate_hz, 1 << 20, 0.5).unwrap();
    let suppression =
        siqrng::optical::cmrr_from_spectra(&psd_diff, &psd_biased, cfg.noise.lo_tone_hz.unwrap())
            .unwrap();
    assert!(
        suppression >= 40.0,
        "balanced-vs-biased tone gap {suppression} dB below 40 dB"
    );

    // Low-lag autocorrelation ordering under band-limited LO noise.
    let mut noisy = PipelineConfig::default();
    noisy.noise.lo_fluct_var = 5.0;
    noisy.noise.lo_fluct_cutoff_hz = Some(2.0e7);
    let solve = pipeline::stage_solve(&noisy).unwrap();
    let balanced_trace = synth_analog_from(
        &solve.x_params,
        &solve.x_coefficients,
        &noisy.noise,
        noisy.adc.rate_hz,
        500_000,
        7,
        0,
    );
    let mut biased = solve.x_params.clone();
    biased.delta_phi += 0.35;
    let biased_coefs = compute_coefficients(&biased).unwrap();
    let biased_trace = synth_analog_from(
        &biased,
        &biased_coefs,
        &noisy.noise,
        noisy.adc.rate_hz,
        500_000,
        7,
        0,
    );
    let ac_balanced = autocorrelation(&balanced_trace, 5).unwrap();
    let ac_biased = autocorrelation(&biased_trace, 5).unwrap();
    for lag in 0..5 {
        assert!(
            ac_biased.coefficients[lag] > ac_balanced.coefficients[lag].abs(),
            "ordering broke at lag {}",
            lag + 1
        );
    }
    assert!(ac_biased.coefficients[1] > 10.0 * ac_biased.confidence_bound);
    pass(
        8,
        &format!(
            "(b) suppression {:.1} dB (vs common) / {:.1} dB (vs biased); \
             biased lag-2 autocorrelation {:.2e} vs balanced {:.2e}",
            cmrr.cmrr_db, suppression, ac_biased.coefficients[1], ac_balanced.coefficients[1]
        ),
    );
}

#[test]
fn acceptance_8c_extractor_output_quality() {
    // 10^8-bit extraction from a simulated balanced chain.
    let cfg = PipelineConfig::default();
    let solve = pipeline::stage_solve(&cfg).unwrap();
    let blocks_needed = 100_000_000usize.div_ceil(1792);
    let samples_needed = blocks_needed * 256;

    let ext_cfg = ExtractorConfig::with_random_seed(3072, 1792, 100, cfg.master_seed).unwrap();
    let hasher = ToeplitzHasher::new(ext_cfg);
    let mut stream = StreamExtractor::new(hasher, 8.0, 12).unwrap();

    let seed = siqrng::rng::derive_seed(cfg.master_seed, siqrng::rng::Stage::Data);
    let block_len = 1usize << 16;
    let delta = cfg.adc.full_scale_volts / 4096.0;
    let mut start = 0usize;
    while start < samples_needed {
        let len = block_len.min(samples_needed - start);
        let trace = synth_analog_from(
            &solve.x_params,
            &solve.x_coefficients,
            &cfg.noise,
            cfg.adc.rate_hz,
            len,
            seed,
            start as u64,
        );
        let block = siqrng::synth::quantize(
            &trace,
            12,
            cfg.adc.full_scale_volts,
            siqrng::synth::BlockMeta {
                rate_hz: cfg.adc.rate_hz,
                quadrature: Quadrature::X,
                block_seed: seed,
            },
        )
        .unwrap();
        assert!(block.delta == delta);
        stream.push_codes(&block.codes);
        start += len;
    }
    let (bits, manifest) = stream.finish();
    assert!(bits.len() >= 100_000_000, "only {} bits", bits.len());
    assert_eq!(manifest.blocks_processed as usize, blocks_needed);

    let battery = randomness_battery(&bits).unwrap();
    assert!(battery.all_pass, "battery: {:?}", battery.results);

    let ac = autocorrelation_bits(&bits, 100).unwrap();
    for (i, c) in ac.coefficients.iter().enumerate() {
        assert!(
            c.abs() <= ac.confidence_bound,
            "lag {} coefficient {c:e} beyond 3/sqrt(n) = {:e}",
            i + 1,
            ac.confidence_bound
        );
    }
    pass(
        8,
        &format!(
            "(c) {} extracted bits pass the battery; max |autocorr| {:.2e} within {:.2e}",
            bits.len(),
            ac.coefficients.iter().map(|c| c.abs()).fold(0.0, f64::max),
            ac.confidence_bound
        ),
    );
}

#[test]
fn acceptance_9_end_to_end_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let mk = |name: &str| {
        let mut cfg = PipelineConfig::default();
        cfg.run.n_tot = 1 << 20;
        cfg.run.n_c = 16384;
        cfg.run.calibration_samples = 1 << 18;
        cfg.output_dir = tmp.path().join(name);
        cfg
    };
    let cfg_a = mk("a");
    let cfg_b = mk("b");
    assert_eq!(cfg_a.config_hash(), cfg_b.config_hash());
    pipeline::run_pipeline(&cfg_a).unwrap();
    pipeline::run_pipeline(&cfg_b).unwrap();

    let bits_a = std::fs::read(cfg_a.output_dir.join("bits.bin")).unwrap();
    let bits_b = std::fs::read(cfg_b.output_dir.join("bits.bin")).unwrap();
    assert!(!bits_a.is_empty());
    assert_eq!(bits_a, bits_b, "bit files differ between identical runs");

    // Reports agree byte for byte once the isolated timestamp is cleared.
    let strip = |dir: &std::path::Path| {
        let mut report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap())
                .unwrap();
        report["generated_at"] = serde_json::Value::from(0u64);
        serde_json::to_string(&report).unwrap()
    };
    assert_eq!(strip(&cfg_a.output_dir), strip(&cfg_b.output_dir));
    pass(
        9,
        "identical config + seed give byte-identical bit files and reports",
    );
}
