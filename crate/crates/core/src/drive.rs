//! Microwave drive: line coupling of a mode, its renormalized frequency,
//! steady-state photon number under a coherent tone and the coupled
//! two-mode operating point.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::environment::{DriveState, EnvironmentModel, ModeRole};
use crate::error::{Error, Result};
use crate::matrix_elements::ModeConfig;
use std::f64::consts::PI;

use crate::units::{dbm_to_watts, BOLTZMANN, HBAR};

/// Drive settings. Powers are at the source; attenuations (dB, ≤ 0) bring
/// them to the sample input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivePlan {
    pub power_dbm: f64,
    pub attenuation_db: f64,
    /// Δ_s (rad/s).
    #[serde(default)]
    pub detuning: f64,
    pub primary_power_dbm: f64,
    pub primary_attenuation_db: f64,
}

impl Default for DrivePlan {
    fn default() -> Self {
        Self {
            power_dbm: -84.4 + 105.0,
            attenuation_db: -105.0,
            detuning: 0.0,
            primary_power_dbm: -116.0 + 103.0,
            primary_attenuation_db: -103.0,
        }
    }
}

impl DrivePlan {
    /// Plan with the supporting tone set by its power at the sample input.
    pub fn with_sample_power(mut self, sample_dbm: f64) -> Self {
        self.power_dbm = sample_dbm - self.attenuation_db;
        self
    }

    pub fn sample_power_dbm(&self) -> f64 {
        self.power_dbm + self.attenuation_db
    }

    /// Supporting tone switched off.
    pub fn undriven(mut self) -> Self {
        self.power_dbm = f64::NEG_INFINITY;
        self
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.attenuation_db <= 0.0) {
            return Err(Error::config(format!("{path}.attenuation_db"), "must be <= 0 dB"));
        }
        if !(self.primary_attenuation_db <= 0.0) {
            return Err(Error::config(format!("{path}.primary_attenuation_db"), "must be <= 0 dB"));
        }
        if self.power_dbm.is_nan() || self.primary_power_dbm.is_nan() || !self.detuning.is_finite() {
            return Err(Error::config(path, "powers and detuning must be numbers"));
        }
        Ok(())
    }

    pub fn supporting_watts(&self) -> f64 {
        dbm_to_watts(self.power_dbm, self.attenuation_db)
    }

    pub fn primary_watts(&self) -> f64 {
        dbm_to_watts(self.primary_power_dbm, self.primary_attenuation_db)
    }
}

/// ω_RC = 1/(Z_tr C_g).
pub fn rc_frequency(m: &ModeConfig) -> f64 {
    1.0 / (m.line_impedance * m.output_capacitance)
}

/// Coupling of a mode to the transmission line through C_g.
pub fn supporting_tr_coupling(m: &ModeConfig) -> f64 {
    if m.output_capacitance == 0.0 {
        return 0.0;
    }
    let w = m.bare_frequency;
    let wrc = rc_frequency(m);
    (m.impedance / m.line_impedance) * w.powi(3) / (w * w + wrc * wrc)
}

/// Resonance frequency including the loading by the line.
pub fn renormalized_frequency(m: &ModeConfig) -> f64 {
    if m.output_capacitance == 0.0 {
        return m.bare_frequency;
    }
    let w = m.bare_frequency;
    let wrc = rc_frequency(m);
    w - (m.impedance / (2.0 * m.line_impedance)) * w * w * wrc / (w * w + wrc * wrc)
}

/// |Ω|² for input power `watts` (rad²/s²).
pub fn rabi_strength_squared(watts: f64, m: &ModeConfig) -> f64 {
    let w = m.bare_frequency;
    2.0 * w * w / (PI * HBAR) * watts * m.output_capacitance.powi(2) * m.line_impedance * m.impedance
}

/// n̄ = |Ω|²/(γ_tot² + Δ²).
pub fn steady_state_occupation(watts: f64, total_coupling: f64, detuning: f64, m: &ModeConfig) -> Result<f64> {
    if !(total_coupling > 0.0) {
        return Err(Error::NonPhysical(format!("total coupling {total_coupling} must be positive")));
    }
    Ok(rabi_strength_squared(watts, m) / (total_coupling * total_coupling + detuning * detuning))
}

/// Stationary amplitude of 0 = −iΔα − γα + iΩ.
pub fn stationary_amplitude(rabi: f64, total_coupling: f64, detuning: f64) -> Complex64 {
    Complex64::i() * rabi / Complex64::new(total_coupling, detuning)
}

pub fn stationary_residual(alpha: Complex64, rabi: f64, total_coupling: f64, detuning: f64) -> f64 {
    (-Complex64::i() * detuning * alpha - total_coupling * alpha + Complex64::i() * rabi).norm()
}

/// Thermal photon number of a mode at temperature `t`.
pub fn thermal_occupation(m: &ModeConfig, t: f64) -> f64 {
    1.0 / ((HBAR * m.bare_frequency / (BOLTZMANN * t)).exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions {
    pub damping: f64,
    pub aitken_after: usize,
    pub max_iterations: usize,
    pub rel_tol: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            aitken_after: 10,
            max_iterations: 200,
            rel_tol: 1e-10,
        }
    }
}

fn rel_change(new: f64, old: f64) -> f64 {
    let scale = new.abs().max(old.abs());
    if scale == 0.0 {
        0.0
    } else {
        (new - old).abs() / scale
    }
}

/// Joint fixed point of n̄_p = f_p(n̄_s), n̄_s = f_s(n̄_p) by damped iteration
/// from `start`, with componentwise Aitken extrapolation. Returns the point
/// and the number of iterations.
pub fn coupled_fixed_point<P, S>(start: (f64, f64), f_p: P, f_s: S, opts: &FixedPointOptions) -> Result<((f64, f64), usize)>
where
    P: Fn(f64) -> Result<f64>,
    S: Fn(f64) -> Result<f64>,
{
    let mut x = start;
    let mut history: Vec<(f64, f64)> = vec![x];
    let mut change = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let g = (f_p(x.1)?, f_s(x.0)?);
        let c = rel_change(g.0, x.0).max(rel_change(g.1, x.1));
        if c < opts.rel_tol {
            return Ok((g, it));
        }
        let mut next = (
            x.0 + opts.damping * (g.0 - x.0),
            x.1 + opts.damping * (g.1 - x.1),
        );
        history.push(next);
        if it >= opts.aitken_after && history.len() >= 3 {
            let n = history.len();
            let accel = |a: f64, b: f64, c: f64| {
                let den = c - 2.0 * b + a;
                if den.abs() > 1e-300 {
                    let v = c - (c - b).powi(2) / den;
                    if v.is_finite() && v >= 0.0 {
                        return v;
                    }
                }
                c
            };
            let (a, b, c) = (history[n - 3], history[n - 2], history[n - 1]);
            next = (accel(a.0, b.0, c.0), accel(a.1, b.1, c.1));
            history.clear();
            history.push(next);
        }
        change = c;
        x = next;
    }
    Err(Error::FixedPointDiverged {
        iterations: opts.max_iterations,
        change,
    })
}

/// Operating point of both modes at one bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub state: DriveState,
    pub primary_occupation: f64,
    pub supporting_total_coupling: f64,
    pub primary_total_coupling: f64,
    pub iterations: usize,
}

fn total_coupling(m: &ModeConfig, refrigerator: f64) -> Result<f64> {
    let g = m.external_coupling + m.excess_coupling + refrigerator;
    if !(g > 0.0) {
        return Err(Error::NonPhysical(format!("total coupling {g} must be positive")));
    }
    Ok(g)
}

/// Resolves n̄_p and n̄_s at bias `v`. The one-pass chain evaluates the
/// primary coupling without supporting photons; with `self_consistent` the
/// coupled system is then iterated to its joint fixed point.
pub fn resolve_operating_point(
    plan: &DrivePlan,
    model: &EnvironmentModel,
    bias_voltage: f64,
    self_consistent: bool,
) -> Result<OperatingPoint> {
    plan.validate("drive")?;
    let dev = model.device();
    let (p, s) = (&dev.primary, &dev.supporting);
    let (watts_p, watts_s) = (plan.primary_watts(), plan.supporting_watts());

    let gamma_p = |ns: f64| -> Result<f64> {
        let g = model.coupling_of(ModeRole::Primary, bias_voltage, ns)?;
        total_coupling(p, g)
    };
    let gamma_s = |np: f64| -> Result<f64> {
        let g = model.coupling_of(ModeRole::Supporting, bias_voltage, np)?;
        total_coupling(s, g)
    };
    let f_p = |ns: f64| steady_state_occupation(watts_p, gamma_p(ns)?, 0.0, p);
    let f_s = |np: f64| steady_state_occupation(watts_s, gamma_s(np)?, plan.detuning, s);

    let np = f_p(0.0)?;
    let ns = f_s(np)?;
    let ((np, ns), iterations) = if self_consistent {
        coupled_fixed_point((np, ns), f_p, f_s, &FixedPointOptions::default())?
    } else {
        ((np, ns), 1)
    };
    Ok(OperatingPoint {
        state: DriveState {
            bias_voltage,
            supporting_occupation: ns,
            supporting_detuning: plan.detuning,
        },
        primary_occupation: np,
        supporting_total_coupling: gamma_s(np)?,
        primary_total_coupling: gamma_p(ns)?,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{ghz_to_angular, millikelvin_to_kelvin};

    #[test]
    fn line_coupling_limits() {
        let mut m = ModeConfig::reference_supporting();
        m.output_capacitance = 1e-19;
        let exact = supporting_tr_coupling(&m);
        let limit = m.impedance * m.line_impedance * m.output_capacitance.powi(2) * m.bare_frequency.powi(3);
        assert!(((exact - limit) / limit).abs() < 1e-10);
        m.output_capacitance = 0.0;
        assert_eq!(supporting_tr_coupling(&m), 0.0);
        assert_eq!(renormalized_frequency(&m), m.bare_frequency);
    }

    #[test]
    fn reference_supporting_numbers() {
        let m = ModeConfig::reference_supporting();
        // independent evaluation in integer-scaled arithmetic
        let w = 2.0 * PI * 17.651e9;
        let wrc = 1.0 / (50.0 * 6.4e-15);
        let g = 42.8 / 50.0 * w * w * w / (w * w + wrc * wrc);
        assert!(((supporting_tr_coupling(&m) - g) / g).abs() < 1e-14);
        assert!((g / (2.0 * PI * 1e6) - 18.9).abs() < 0.2);
        let shift = (renormalized_frequency(&m) - m.bare_frequency) / m.bare_frequency;
        let expected = -42.8 / 100.0 * w * wrc / (w * w + wrc * wrc);
        assert!(((shift - expected) / expected).abs() < 1e-12);
        assert!(shift < 0.0 && shift > -0.02);
    }

    #[test]
    fn occupation_lorentzian() {
        let m = ModeConfig::reference_supporting();
        let g = 1e8;
        let n0 = steady_state_occupation(1e-12, g, 0.0, &m).unwrap();
        let nh = steady_state_occupation(1e-12, g, g, &m).unwrap();
        assert!((nh / n0 - 0.5).abs() < 1e-14);
        let n2 = steady_state_occupation(2e-12, g, 0.0, &m).unwrap();
        assert!((n2 / n0 - 2.0).abs() < 1e-14);
        assert_eq!(steady_state_occupation(0.0, g, 0.0, &m).unwrap(), 0.0);
        assert!(steady_state_occupation(1e-12, 0.0, 0.0, &m).is_err());
    }

    #[test]
    fn amplitude_matches_occupation() {
        let m = ModeConfig::reference_supporting();
        let (g, d, p) = (1.2e8, 3e7, 1e-12);
        let rabi = rabi_strength_squared(p, &m).sqrt();
        let a = stationary_amplitude(rabi, g, d);
        let n = steady_state_occupation(p, g, d, &m).unwrap();
        assert!((a.norm_sqr() / n - 1.0).abs() < 1e-13);
        assert!(stationary_residual(a, rabi, g, d) < 1e-12 * rabi);
    }

    #[test]
    fn fixed_point_of_constant_map_is_exact() {
        let ((a, b), _) = coupled_fixed_point(
            (3.0, 7.0),
            |_| Ok(3.0),
            |_| Ok(7.0),
            &FixedPointOptions::default(),
        )
        .unwrap();
        assert_eq!((a, b), (3.0, 7.0));
    }

    #[test]
    fn fixed_point_converges_for_contraction() {
        // x = 1/(1+y), y = 2/(1+x)
        let ((x, y), _) = coupled_fixed_point(
            (0.0, 0.0),
            |y| Ok(1.0 / (1.0 + y)),
            |x| Ok(2.0 / (1.0 + x)),
            &FixedPointOptions::default(),
        )
        .unwrap();
        assert!((x - 1.0 / (1.0 + y)).abs() < 1e-9);
        assert!((y - 2.0 / (1.0 + x)).abs() < 1e-9);
    }

    #[test]
    fn fixed_point_reports_divergence() {
        let r = coupled_fixed_point(
            (1.0, 1.0),
            |y| Ok(10.0 * y + 1.0),
            |x| Ok(10.0 * x + 1.0),
            &FixedPointOptions {
                aitken_after: 1000,
                ..Default::default()
            },
        );
        assert!(matches!(r, Err(Error::FixedPointDiverged { .. })));
    }

    #[test]
    fn supporting_thermal_occupation_negligible() {
        let mut m = ModeConfig::reference_supporting();
        m.bare_frequency = ghz_to_angular(17.651);
        assert!(thermal_occupation(&m, millikelvin_to_kelvin(90.0)) < 1e-4);
    }

    #[test]
    fn plan_validation() {
        let mut plan = DrivePlan::default();
        assert!(plan.validate("drive").is_ok());
        assert!((plan.sample_power_dbm() + 84.4).abs() < 1e-12);
        plan.attenuation_db = 3.0;
        let e = plan.validate("drive").unwrap_err().to_string();
        assert!(e.contains("drive.attenuation_db"));
        assert_eq!(DrivePlan::default().undriven().supporting_watts(), 0.0);
    }
}
