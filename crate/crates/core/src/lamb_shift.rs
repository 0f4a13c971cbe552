//! Frequency shifts of the primary mode: the dynamic Lamb shift obtained by
//! a principal-value transform of γ(ω), the classical damping shift and the
//! static shift.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::environment::{DriveState, EnvironmentModel, ModeRole};
use crate::error::{Error, Result};
use crate::quad::{breakpoints, integrate_with_points, QuadOptions};
use crate::units::{ghz_to_angular, khz_to_angular, ELEMENTARY_CHARGE, HBAR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvOptions {
    /// Relative tolerance of each adaptive integral.
    pub rel_tol: f64,
    /// Absolute tolerance (rad/s) of each adaptive integral.
    pub abs_tol: f64,
    pub max_intervals: usize,
    /// Accepted change between cutoffs Λ and 2Λ, relative to the result.
    pub cutoff_rel_tol: f64,
    /// Accepted change between cutoffs Λ and 2Λ (rad/s).
    pub cutoff_abs_tol: f64,
    /// Richardson extrapolation in 1/Λ.
    pub extrapolate: bool,
}

impl Default for PvOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-7,
            abs_tol: 1.0,
            max_intervals: 50_000,
            cutoff_rel_tol: 1e-2,
            cutoff_abs_tol: khz_to_angular(50.0),
            extrapolate: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvResult {
    pub value: f64,
    pub error: f64,
    pub cutoff: f64,
    /// Value at Λ minus value at 2Λ.
    pub cutoff_change: f64,
}

/// Half-width of the window around ω₀ in which the pole is subtracted.
pub fn subtraction_half_width(omega0: f64) -> f64 {
    (0.5 * omega0).min(ghz_to_angular(1.0))
}

/// −(1/2π) PV∫₀^Λ [g(ω)/(ω − ω₀) + g(ω)/(ω + ω₀) − 2g(ω)/ω] dω at a single
/// cutoff. `points` are extra breakpoints (kinks of g).
pub fn bracket_integral<G>(g: &G, omega0: f64, cutoff: f64, points: &[f64], opts: &PvOptions) -> Result<(f64, f64)>
where
    G: Fn(f64) -> Result<f64>,
{
    if !(omega0 > 0.0) {
        return Err(Error::InvalidInput("pole frequency must be positive".into()));
    }
    let w = subtraction_half_width(omega0);
    if !(cutoff > omega0 + w) {
        return Err(Error::InvalidInput(format!("cutoff {cutoff:e} must exceed the pole window")));
    }
    let g0 = g(omega0)?;
    if !g0.is_finite() {
        return Err(Error::PvSingularity);
    }
    let mut failure: Option<Error> = None;
    let integrand = |x: f64| -> f64 {
        if failure.is_some() {
            return 0.0;
        }
        let v = match g(x) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                return 0.0;
            }
        };
        let pole = if (x - omega0).abs() < w {
            (v - g0) / (x - omega0)
        } else {
            v / (x - omega0)
        };
        pole + v / (x + omega0) - 2.0 * v / x
    };
    let mut interior: Vec<f64> = vec![omega0 - w, omega0, omega0 + w];
    interior.extend(points.iter().copied());
    let pts = breakpoints(0.0, cutoff, interior);
    let q = QuadOptions {
        rel_tol: opts.rel_tol,
        abs_tol: opts.abs_tol * 2.0 * PI,
        max_intervals: opts.max_intervals,
    };
    let r = integrate_with_points(integrand, &pts, &q);
    if let Some(e) = failure {
        return Err(e);
    }
    let r = r?;
    Ok((-r.value / (2.0 * PI), r.error / (2.0 * PI)))
}

/// Bracket integral at Λ and 2Λ with optional Richardson extrapolation.
pub fn principal_value_shift<G>(g: &G, omega0: f64, cutoff: f64, points: &[f64], opts: &PvOptions) -> Result<PvResult>
where
    G: Fn(f64) -> Result<f64>,
{
    let (a, ea) = bracket_integral(g, omega0, cutoff, points, opts)?;
    let (b, eb) = bracket_integral(g, omega0, 2.0 * cutoff, points, opts)?;
    let value = if opts.extrapolate { 2.0 * b - a } else { b };
    let change = a - b;
    let limit = opts.cutoff_abs_tol.max(opts.cutoff_rel_tol * value.abs());
    if !(change.abs() <= limit) {
        return Err(Error::CutoffNotConverged { change });
    }
    Ok(PvResult {
        value,
        error: if opts.extrapolate { 2.0 * eb + ea } else { eb },
        cutoff: 2.0 * cutoff,
        cutoff_change: change,
    })
}

/// Damped-oscillator downshift −γ²/(8ω_p).
pub fn classical_damping_shift(gamma: f64, omega: f64) -> f64 {
    -gamma * gamma / (8.0 * omega)
}

/// −μγ/π.
pub fn static_shift(gamma: f64, mu: f64) -> f64 {
    -mu * gamma / PI
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambShiftOptions {
    pub pv: PvOptions,
    /// Static-shift constant μ.
    pub mu: f64,
    /// +1 or −1; sign applied to γ²/(8ω_p).
    pub damping_shift_sign: f64,
}

impl Default for LambShiftOptions {
    fn default() -> Self {
        Self {
            pv: PvOptions::default(),
            mu: 0.0,
            damping_shift_sign: -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambShiftResult {
    pub dynamic_shift: f64,
    pub classical_damping_shift: f64,
    pub static_shift: f64,
    pub total_frequency: f64,
    pub integration_cutoff: f64,
    pub estimated_quadrature_error: f64,
    /// γ_T,p at the operating point.
    pub coupling: f64,
}

/// Λ = 20·max(Δ/ħ, eV/ħ + ω_p⁰ + L·ω_s) with L the smallest retained ℓ_s cap.
pub fn default_cutoff(model: &EnvironmentModel, bias_voltage: f64) -> f64 {
    let d = model.device();
    let l = model.options().min_ls as f64;
    let a = d.junction.gap / HBAR;
    let b = ELEMENTARY_CHARGE * bias_voltage.abs() / HBAR + d.primary.bare_frequency + l * d.supporting.bare_frequency;
    20.0 * a.max(b)
}

/// Largest probe frequency a Lamb-shift evaluation at |V| ≤ `max_bias` needs.
pub fn required_frequency(model_device: &crate::environment::Device, min_ls: usize, max_bias: f64) -> f64 {
    let a = model_device.junction.gap / HBAR;
    let b = ELEMENTARY_CHARGE * max_bias.abs() / HBAR
        + model_device.primary.bare_frequency
        + min_ls as f64 * model_device.supporting.bare_frequency;
    40.0 * a.max(b)
}

/// ω_L at one operating point.
pub fn dynamic_lamb_shift(model: &EnvironmentModel, d: &DriveState, opts: &PvOptions) -> Result<PvResult> {
    let kernel = model.kernel(ModeRole::Primary, d.bias_voltage, d.supporting_occupation)?;
    let omega0 = model.device().primary.bare_frequency;
    let cutoff = default_cutoff(model, d.bias_voltage);
    let knees = kernel.knee_frequencies(2.0 * cutoff);
    let g = |w: f64| kernel.coupling_at(w);
    principal_value_shift(&g, omega0, cutoff, &knees, opts)
}

/// All three shifts and the resulting primary-mode frequency.
pub fn lamb_shift(model: &EnvironmentModel, d: &DriveState, opts: &LambShiftOptions) -> Result<LambShiftResult> {
    let omega0 = model.device().primary.bare_frequency;
    let pv = dynamic_lamb_shift(model, d, &opts.pv)?;
    let gamma = model.coupling_strength(d)?;
    let damping = -opts.damping_shift_sign.signum() * classical_damping_shift(gamma, omega0);
    let stat = static_shift(gamma, opts.mu);
    Ok(LambShiftResult {
        dynamic_shift: pv.value,
        classical_damping_shift: damping,
        static_shift: stat,
        total_frequency: omega0 + pv.value + damping + stat,
        integration_cutoff: pv.cutoff,
        estimated_quadrature_error: pv.error,
        coupling: gamma,
    })
}
