//! Transfer-matrix model of the biased MZI/homodyne chain.
//!
//! The chain is PBS -> per-arm phase modulators -> BS -> balanced detector.
//! An asymmetric chain leaks a DC term plus local-oscillator common-mode
//! noise into the difference output; the solver below finds the compensation
//! phase and power splitting ratio that cancel that leakage while keeping a
//! single quadrature in each measurement.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::stats::PsdResult;
use crate::Result;

/// Relative tolerance below which a cancelled coefficient counts as zero.
pub const ZERO_COEF_REL_TOL: f64 = 1e-9;

/// Calibrated optical and electrical constants of the setup.
///
/// Power fractions are linear (dimensionless in (0,1)); `eta_pm*` are field
/// (amplitude) transmission factors of the phase modulators; gains are in
/// volts per watt; `e_lo` is the LO field amplitude in sqrt-watt units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub t_13: f64,
    pub t_24: f64,
    pub r_14: f64,
    pub r_23: f64,
    pub t_ac: f64,
    pub r_ad: f64,
    pub r_bc: f64,
    pub t_bd: f64,
    pub eta_pm0: f64,
    pub eta_pm1: f64,
    pub eta_pm2: f64,
    pub g_pd1: f64,
    pub g_pd2: f64,
    pub e_lo: f64,
    /// LO phase, radians.
    pub phi: f64,
    /// Compensation phase, radians.
    pub delta_phi: f64,
}

impl SystemParams {
    /// Perfectly balanced chain; useful as a baseline and in tests.
    pub fn balanced() -> Self {
        Self {
            t_13: 0.5,
            t_24: 0.5,
            r_14: 0.5,
            r_23: 0.5,
            t_ac: 0.5,
            r_ad: 0.5,
            r_bc: 0.5,
            t_bd: 0.5,
            eta_pm0: 1.0,
            eta_pm1: 1.0,
            eta_pm2: 1.0,
            g_pd1: 1.0,
            g_pd2: 1.0,
            e_lo: 1.0,
            phi: 0.0,
            delta_phi: FRAC_PI_2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fractions = [
            ("t_13", self.t_13),
            ("t_24", self.t_24),
            ("r_14", self.r_14),
            ("r_23", self.r_23),
            ("t_ac", self.t_ac),
            ("r_ad", self.r_ad),
            ("r_bc", self.r_bc),
            ("t_bd", self.t_bd),
        ];
        for (name, v) in fractions {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "power fraction {name} = {v} must lie strictly in (0,1)"
                )));
            }
        }
        for (name, v) in [
            ("eta_pm0", self.eta_pm0),
            ("eta_pm1", self.eta_pm1),
            ("eta_pm2", self.eta_pm2),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "loss factor {name} = {v} must lie in (0,1]"
                )));
            }
        }
        for (name, v) in [("g_pd1", self.g_pd1), ("g_pd2", self.g_pd2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "gain {name} = {v} must be strictly positive"
                )));
            }
        }
        if !(self.e_lo >= 0.0 && self.e_lo.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "e_lo = {} must be nonnegative",
                self.e_lo
            )));
        }
        let xi = self.t_ac / self.r_ad;
        if !(xi.is_finite() && xi > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "splitting ratio t_ac/r_ad = {xi} must be finite and positive"
            )));
        }
        if !self.phi.is_finite() || !self.delta_phi.is_finite() {
            return Err(Error::InvalidParameter("phases must be finite".into()));
        }
        Ok(())
    }

    /// Splitting ratio of PBS mode a.
    pub fn xi(&self) -> f64 {
        self.t_ac / self.r_ad
    }

    /// Copy with one detector blocked, as used for common-mode measurement.
    ///
    /// Bypasses `validate` on purpose: a zero gain models the blocked
    /// photodiode, not a physical calibration.
    pub fn common_mode(&self) -> Self {
        let mut p = self.clone();
        p.g_pd2 = 0.0;
        p
    }

    /// Copy with the given measurement setting applied.
    ///
    /// Only the ratio `xi` enters the solve, so `(t_ac, r_ad)` are
    /// reparameterized as `(xi/(1+xi), 1/(1+xi))` to keep power normalized.
    /// Mode-b fractions follow mode a unless they were set independently
    /// (modelling adversarial polarization rotation).
    pub fn with_setting(&self, setting: &MeasurementSetting) -> Self {
        let mirrored = self.r_bc == self.r_ad && self.t_bd == self.t_ac;
        let mut p = self.clone();
        p.t_ac = setting.xi / (1.0 + setting.xi);
        p.r_ad = 1.0 / (1.0 + setting.xi);
        if mirrored {
            p.r_bc = p.r_ad;
            p.t_bd = p.t_ac;
        }
        p.phi = setting.phi;
        p.delta_phi = setting.delta_phi;
        p
    }
}

/// dB-to-linear conventions for calibration tables.
///
/// Vendors quote splitting ratios and insertion losses in dB with varying
/// sign and power/amplitude conventions; the choice is explicit here and the
/// canonical parameter form stays linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DbConvention {
    /// `10^(-db/10)` — a positive dB figure is a power loss.
    PowerLoss,
    /// `10^(db/10)`.
    PowerGain,
    /// `10^(-db/20)` — a positive dB figure is an amplitude loss.
    AmplitudeLoss,
    /// `10^(db/20)`.
    AmplitudeGain,
}

/// Convert a dB figure to a linear factor under the given convention.
pub fn db_to_linear(db: f64, convention: DbConvention) -> f64 {
    match convention {
        DbConvention::PowerLoss => 10f64.powf(-db / 10.0),
        DbConvention::PowerGain => 10f64.powf(db / 10.0),
        DbConvention::AmplitudeLoss => 10f64.powf(-db / 20.0),
        DbConvention::AmplitudeGain => 10f64.powf(db / 20.0),
    }
}

/// Gain aggregates of the two BS paths plus the output coefficients of the
/// difference signal at the configured `(phi, delta_phi)`.
///
/// `coef_dc` multiplies the LO mean-power bracket (carrying both the DC bias
/// and the LO amplitude-fluctuation common mode); `coef_x` and `coef_p`
/// multiply the vacuum quadrature fluctuations, in volts per quadrature
/// unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedCoefficients {
    pub a_coef: f64,
    pub b_coef: f64,
    pub c_coef: f64,
    pub coef_dc: f64,
    pub coef_x: f64,
    pub coef_p: f64,
}

/// Gain aggregates of the difference output.
///
/// `a = (g1*t13 - g2*r14) * eta1^2`, `b = (g1*r23 - g2*t24) * eta2^2`,
/// `c = (g1*sqrt(t13*r23) + g2*sqrt(r14*t24)) * eta1 * eta2`.
pub fn gain_aggregates(p: &SystemParams) -> (f64, f64, f64) {
    let a = (p.g_pd1 * p.t_13 - p.g_pd2 * p.r_14) * p.eta_pm1 * p.eta_pm1;
    let b = (p.g_pd1 * p.r_23 - p.g_pd2 * p.t_24) * p.eta_pm2 * p.eta_pm2;
    let c = (p.g_pd1 * (p.t_13 * p.r_23).sqrt() + p.g_pd2 * (p.r_14 * p.t_24).sqrt())
        * p.eta_pm1
        * p.eta_pm2;
    (a, b, c)
}

/// Full coefficient set for a validated parameter set.
pub fn compute_coefficients(params: &SystemParams) -> Result<DerivedCoefficients> {
    params.validate()?;
    let (a, b, c) = gain_aggregates(params);
    let (coef_dc, coef_x, coef_p) =
        quadrature_coefficients_at(params, (a, b, c), params.phi, params.delta_phi);
    Ok(DerivedCoefficients {
        a_coef: a,
        b_coef: b,
        c_coef: c,
        coef_dc,
        coef_x,
        coef_p,
    })
}

/// Output coefficients at the parameter set's own `(phi, delta_phi)`.
pub fn quadrature_coefficients(params: &SystemParams, abc: (f64, f64, f64)) -> (f64, f64, f64) {
    quadrature_coefficients_at(params, abc, params.phi, params.delta_phi)
}

/// Output coefficients at explicit phases.
///
/// The difference output decomposes as
/// `coef_dc * (eta0^2 E^2 + 2 eta0 E dXl) + coef_x * dXs + coef_p * dPs`
/// with both in-phase and quadrature groupings of the vacuum terms
/// collected, so exactly one of `coef_x`, `coef_p` survives at a properly
/// solved operating point.
pub fn quadrature_coefficients_at(
    p: &SystemParams,
    (a, b, c): (f64, f64, f64),
    phi: f64,
    delta_phi: f64,
) -> (f64, f64, f64) {
    let (sin_d, cos_d) = delta_phi.sin_cos();
    let (sin_p, cos_p) = phi.sin_cos();
    let lo_amp = 2.0 * p.eta_pm0 * p.e_lo;

    let coef_dc = a * p.t_ac + b * p.r_ad + 2.0 * c * (p.t_ac * p.r_ad).sqrt() * cos_d;

    // In-phase vacuum coupling (cos(phi) picks X, sin(phi) picks P).
    let m1 = lo_amp
        * (a * (p.t_ac * p.r_bc).sqrt() - b * (p.r_ad * p.t_bd).sqrt()
            + c * ((p.r_bc * p.r_ad).sqrt() - (p.t_ac * p.t_bd).sqrt()) * cos_d);
    // Quadrature vacuum coupling (sin(phi) picks X, cos(phi) picks P).
    let m2 = lo_amp * c * ((p.r_bc * p.r_ad).sqrt() + (p.t_ac * p.t_bd).sqrt()) * sin_d;

    let coef_x = m1 * cos_p + m2 * sin_p;
    let coef_p = m1 * sin_p + m2 * cos_p;
    (coef_dc, coef_x, coef_p)
}

/// Natural scale of the DC bracket, used for relative zero checks.
pub fn dc_bracket_scale(p: &SystemParams, (a, b, c): (f64, f64, f64)) -> f64 {
    a.abs() * p.t_ac + b.abs() * p.r_ad + 2.0 * c.abs() * (p.t_ac * p.r_ad).sqrt()
}

/// Compensation phase cancelling the DC bracket for the given splitting
/// ratio: `arccos(-(a*sqrt(xi) + b/sqrt(xi)) / (2c))`, principal branch.
pub fn solve_compensation_phase(a: f64, b: f64, c: f64, xi: f64) -> Result<f64> {
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "splitting ratio xi = {xi} must be finite and positive"
        )));
    }
    if c == 0.0 {
        return Err(Error::NoSolution(
            "interference gain c = 0; no compensation phase exists".into(),
        ));
    }
    let arg = -(a * xi.sqrt() + b / xi.sqrt()) / (2.0 * c);
    if arg.abs() > 1.0 {
        return Err(Error::NoSolution(format!(
            "|a*sqrt(xi) + b/sqrt(xi)| / (2c) = {:.6} exceeds 1; the DC bracket has no root",
            arg.abs()
        )));
    }
    Ok(arg.acos())
}

/// Operating routine of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Routine {
    /// `delta_phi = pi`; quadrature selected by the LO phase (X at 0, P at
    /// pi/2). Both quadratures couple with equal strength.
    One,
    /// `xi = b/a`; the conjugate quadrature is recorded (X at pi/2, P at 0),
    /// again with equal strength.
    Two,
    /// LO phase fixed at pi/2; the quadrature is selected by switching
    /// `(delta_phi, xi)` between the routine-2 and routine-1 settings, with
    /// unequal measured intensities.
    Three,
}

impl Routine {
    pub fn id(self) -> u8 {
        match self {
            Routine::One => 1,
            Routine::Two => 2,
            Routine::Three => 3,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Routine::One),
            2 => Ok(Routine::Two),
            3 => Ok(Routine::Three),
            other => Err(Error::InvalidParameter(format!(
                "routine id {other} not in {{1, 2, 3}}"
            ))),
        }
    }
}

/// One bias-free operating point: compensation phase, splitting ratio and LO
/// phase for measuring a single quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub delta_phi: f64,
    pub xi: f64,
    pub phi: f64,
}

/// Solved operating points of one routine: the setting measuring X and the
/// setting measuring P.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutineConfig {
    pub routine: Routine,
    pub x: MeasurementSetting,
    pub p: MeasurementSetting,
}

/// Splitting ratio of routine 1: the positive root of
/// `a*xi + b - 2c*sqrt(xi) = 0` with `delta_phi = pi`.
fn routine_one_xi(a: f64, b: f64, c: f64) -> Result<f64> {
    if a == 0.0 {
        return Err(Error::NoSolution(
            "routine 1 requires a != 0 (degenerate difference gain)".into(),
        ));
    }
    let disc = c * c - a * b;
    if disc < 0.0 {
        return Err(Error::NoSolution(format!(
            "routine 1 requires c^2 >= a*b, got c^2 - a*b = {disc:.6e}"
        )));
    }
    let xi = (2.0 * c * c - a * b + 2.0 * c * disc.sqrt()) / (a * a);
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(Error::NoSolution(format!(
            "routine 1 splitting ratio {xi} is not positive"
        )));
    }
    Ok(xi)
}

/// Settings of routine 2: `xi = b/a`, `delta_phi = arccos(-sqrt(a*b)/c)`.
fn routine_two_setting(a: f64, b: f64, c: f64) -> Result<(f64, f64)> {
    if a == 0.0 && b == 0.0 {
        // Balanced chain: the DC bracket reduces to 2c*sqrt(t*r)*cos, any
        // ratio works and pi/2 is the root; take the symmetric split.
        return Ok((FRAC_PI_2, 1.0));
    }
    if a == 0.0 {
        return Err(Error::NoSolution(
            "routine 2 requires a != 0 when b != 0".into(),
        ));
    }
    let xi = b / a;
    if xi.is_nan() || xi <= 0.0 {
        return Err(Error::NoSolution(format!(
            "routine 2 requires a*b > 0, got xi = b/a = {xi:.6e}"
        )));
    }
    let ab = a * b;
    if ab > c * c {
        return Err(Error::NoSolution(format!(
            "routine 2 requires a*b <= c^2, got a*b - c^2 = {:.6e}",
            ab - c * c
        )));
    }
    let delta_phi = (-(ab.sqrt()) / c).acos();
    Ok((delta_phi, xi))
}

/// Solve one routine's operating points from the gain aggregates.
pub fn solve_routine(routine: Routine, a: f64, b: f64, c: f64) -> Result<RoutineConfig> {
    match routine {
        Routine::One => {
            let xi = routine_one_xi(a, b, c)?;
            Ok(RoutineConfig {
                routine,
                x: MeasurementSetting {
                    delta_phi: PI,
                    xi,
                    phi: 0.0,
                },
                p: MeasurementSetting {
                    delta_phi: PI,
                    xi,
                    phi: FRAC_PI_2,
                },
            })
        }
        Routine::Two => {
            let (delta_phi, xi) = routine_two_setting(a, b, c)?;
            Ok(RoutineConfig {
                routine,
                x: MeasurementSetting {
                    delta_phi,
                    xi,
                    phi: FRAC_PI_2,
                },
                p: MeasurementSetting {
                    delta_phi,
                    xi,
                    phi: 0.0,
                },
            })
        }
        Routine::Three => {
            let (dphi2, xi2) = routine_two_setting(a, b, c)?;
            let xi1 = routine_one_xi(a, b, c)?;
            Ok(RoutineConfig {
                routine,
                x: MeasurementSetting {
                    delta_phi: dphi2,
                    xi: xi2,
                    phi: FRAC_PI_2,
                },
                p: MeasurementSetting {
                    delta_phi: PI,
                    xi: xi1,
                    phi: FRAC_PI_2,
                },
            })
        }
    }
}

/// Common-mode rejection ratio from a differential and a common-mode
/// spectrum: the gap (in dB) between the fundamental-harmonic powers at the
/// probe tone.
///
/// The fundamental bin is taken as the strongest bin within a small window
/// around `tone_hz`, so modest leakage does not bias the reading.
pub fn cmrr_from_spectra(diff: &PsdResult, common: &PsdResult, tone_hz: f64) -> Result<f64> {
    let diff_db = peak_power_near(diff, tone_hz)?;
    let common_db = peak_power_near(common, tone_hz)?;
    Ok(common_db - diff_db)
}

fn peak_power_near(psd: &PsdResult, tone_hz: f64) -> Result<f64> {
    let (first, last) = match (psd.freq_hz.first(), psd.freq_hz.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(Error::InsufficientData("empty spectrum".into())),
    };
    if tone_hz < first || tone_hz > last {
        return Err(Error::FrequencyOutOfRange(format!(
            "tone {tone_hz} Hz outside spectral range [{first}, {last}] Hz"
        )));
    }
    let nearest = psd
        .freq_hz
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            (*a - tone_hz)
                .abs()
                .partial_cmp(&(*b - tone_hz).abs())
                .unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();
    let lo = nearest.saturating_sub(2);
    let hi = (nearest + 2).min(psd.power_db.len() - 1);
    Ok(psd.power_db[lo..=hi]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max))
}
