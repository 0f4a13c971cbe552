//! Temperature-dependent shift and damping of a bosonic mode coupled to a
//! flat-band fermionic bath, from the one-loop polarization operator.
//!
//! Energies are in joules, frequencies in rad/s. The pole equation is
//! ω_L = Π^R(ω_p⁰ + ω_L)/ħ; the imaginary part of the returned shift is
//! −(energy decay rate)/2 and is never positive.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{breakpoints, integrate_with_points, QuadOptions};
use crate::units::{BOLTZMANN, HBAR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FermiBathConfig {
    /// W, joules.
    pub bandwidth: f64,
    /// μ, joules.
    pub chemical_potential: f64,
    /// Γν (dimensionless); Γ²ν² enters every result.
    pub coupling_dos_product: f64,
    /// Kelvin.
    pub temperature: f64,
    /// ω_p⁰, rad/s.
    pub mode_frequency: f64,
}

impl FermiBathConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        let (w, mu) = (self.bandwidth, self.chemical_potential);
        if !(w.is_finite() && mu.is_finite() && mu > 0.0 && mu < w) {
            return bad("bath requires 0 < μ < W");
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad("bath temperature must be positive");
        }
        if !(self.mode_frequency.is_finite() && self.mode_frequency > 0.0) {
            return bad("mode frequency must be positive");
        }
        if !(self.coupling_dos_product.is_finite() && self.coupling_dos_product >= 0.0) {
            return bad("Γν must be non-negative");
        }
        if self.coupling_dos_product > 0.1 {
            log::warn!(
                "Γν = {} is outside the perturbative regime",
                self.coupling_dos_product
            );
        }
        Ok(())
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_coupling(mut self, gnu: f64) -> Self {
        self.coupling_dos_product = gnu;
        self
    }

    fn g2(&self) -> f64 {
        self.coupling_dos_product * self.coupling_dos_product
    }

    fn kt(&self) -> f64 {
        BOLTZMANN * self.temperature
    }

    fn lower(&self) -> f64 {
        -self.chemical_potential
    }

    fn upper(&self) -> f64 {
        self.bandwidth - self.chemical_potential
    }

    /// Bosonic Matsubara frequency ω_n.
    pub fn bosonic_frequency(&self, n: i64) -> f64 {
        2.0 * std::f64::consts::PI * n as f64 * self.kt() / HBAR
    }

    /// Fermionic Matsubara frequency ω_m.
    pub fn fermionic_frequency(&self, m: i64) -> f64 {
        std::f64::consts::PI * (2 * m + 1) as f64 * self.kt() / HBAR
    }
}

fn quad_opts() -> QuadOptions {
    QuadOptions {
        rel_tol: 1e-12,
        abs_tol: 0.0,
        max_intervals: 20000,
    }
}

/// tanh(ε/2kT), with the T → 0 limit sgn ε.
fn occupation_factor(e: f64, kt: f64) -> f64 {
    if kt == 0.0 {
        e.signum()
    } else {
        (0.5 * e / kt).tanh()
    }
}

/// ln cosh y without overflow.
fn ln_cosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn thermal_breaks(kt: f64) -> Vec<f64> {
    let mut v = vec![0.0];
    for k in [1.0, 4.0, 16.0, 64.0] {
        v.push(k * kt);
        v.push(-k * kt);
    }
    v
}

/// Π(ω_n) in rad/s from the single-integral closed form.
pub fn polarization(omega_n: f64, b: &FermiBathConfig) -> Result<f64> {
    b.validate()?;
    if b.coupling_dos_product == 0.0 {
        return Ok(0.0);
    }
    let (lo, hi, kt) = (b.lower(), b.upper(), b.kt());
    let x2 = (HBAR * omega_n).powi(2);
    let f = |e: f64| {
        let num = (e - hi).powi(2) + x2;
        let den = (e - lo).powi(2) + x2;
        (num.ln() - den.ln()) * occupation_factor(e, kt)
    };
    let pts = breakpoints(lo, hi, thermal_breaks(kt));
    let r = integrate_with_points(f, &pts, &quad_opts())?;
    Ok(0.5 * b.g2() * r.value / HBAR)
}

/// Π(ω_n) in rad/s from the direct fermionic Matsubara sum, truncated at
/// |m| ≤ M for M ∈ {10⁴, 3·10⁴, 10⁵} and extrapolated in 1/M.
pub fn polarization_double_sum(n: i64, b: &FermiBathConfig) -> Result<f64> {
    b.validate()?;
    polarization_double_sum_with(n, b, &[10_000, 30_000, 100_000])
}

pub fn polarization_double_sum_with(n: i64, b: &FermiBathConfig, cutoffs: &[i64; 3]) -> Result<f64> {
    let (lo, hi, kt) = (b.lower(), b.upper(), b.kt());
    // ∫ dξ/(z − ξ) over the band
    let a = |y: f64| {
        let z = Complex64::new(0.0, y);
        ((z - lo) / (z - hi)).ln()
    };
    let bos = 2.0 * std::f64::consts::PI * n as f64 * kt;
    let partial = |m_max: i64| {
        let mut acc = 0.0;
        for m in -m_max..m_max {
            let nu = std::f64::consts::PI * (2 * m + 1) as f64 * kt;
            acc += (a(nu + bos) * a(nu)).re;
        }
        acc * kt
    };
    let s: Vec<f64> = cutoffs.iter().map(|&m| partial(m)).collect();
    // S(M) = S∞ + c₁/M + c₂/M² through three points
    let x: Vec<f64> = cutoffs.iter().map(|&m| 1.0 / m as f64).collect();
    let l0 = x[1] * x[2] / ((x[0] - x[1]) * (x[0] - x[2]));
    let l1 = x[0] * x[2] / ((x[1] - x[0]) * (x[1] - x[2]));
    let l2 = x[0] * x[1] / ((x[2] - x[0]) * (x[2] - x[1]));
    let limit = l0 * s[0] + l1 * s[1] + l2 * s[2];
    if !limit.is_finite() {
        return Err(Error::NonPhysical("Matsubara sum is not finite".into()));
    }
    Ok(b.g2() * limit / HBAR)
}

/// Retarded Π^R(ω + i0) in rad/s for real ω, with the infinitesimal taken
/// exactly: each linear-factor logarithm contributes ln|x| + iπθ(−x).
pub fn retarded_polarization(omega: f64, b: &FermiBathConfig) -> Result<Complex64> {
    retarded_at(omega, b, b.kt())
}

fn retarded_at(omega: f64, b: &FermiBathConfig, kt: f64) -> Result<Complex64> {
    if b.coupling_dos_product == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let (lo, hi) = (b.lower(), b.upper());
    let x = HBAR * omega;
    let re = |e: f64| {
        let s = (x + hi - e).abs().ln() - (x + lo - e).abs().ln() + (x + e - hi).abs().ln()
            - (x + e - lo).abs().ln();
        s * occupation_factor(e, kt)
    };
    let mut interior = thermal_breaks(kt);
    interior.extend([hi + x, lo + x, hi - x, lo - x]);
    let pts = breakpoints(lo, hi, interior);
    let r = integrate_with_points(re, &pts, &quad_opts())?;

    // ∫ tanh(ε/2kT) over [a, b] ∩ band
    let band_integral = |a: f64, c: f64| {
        let (l, h) = (a.max(lo), c.min(hi));
        if h <= l {
            0.0
        } else if kt == 0.0 {
            h.abs() - l.abs()
        } else {
            2.0 * kt * (ln_cosh(0.5 * h / kt) - ln_cosh(0.5 * l / kt))
        }
    };
    let inf = f64::INFINITY;
    let im = band_integral(hi + x, inf) - band_integral(x + lo, inf) + band_integral(-inf, hi - x)
        - band_integral(-inf, lo - x);
    Ok(0.5 * b.g2() / HBAR * Complex64::new(r.value, std::f64::consts::PI * im))
}

/// Π^R at a finite broadening η (joules), from complex logarithms. Used to
/// check the exact η → 0 evaluation.
pub fn retarded_polarization_broadened(omega: f64, eta: f64, b: &FermiBathConfig) -> Result<Complex64> {
    let (lo, hi, kt) = (b.lower(), b.upper(), b.kt());
    let z = Complex64::new(HBAR * omega, eta);
    let term = |e: f64| (z + hi - e).ln() - (z + lo - e).ln() + (z + e - hi).ln() - (z + e - lo).ln();
    let mut interior = thermal_breaks(kt);
    interior.extend([hi + z.re, lo + z.re, hi - z.re, lo - z.re]);
    let pts = breakpoints(lo, hi, interior);
    let re = integrate_with_points(|e| term(e).re * occupation_factor(e, kt), &pts, &quad_opts())?;
    let im = integrate_with_points(|e| term(e).im * occupation_factor(e, kt), &pts, &quad_opts())?;
    Ok(0.5 * b.g2() / HBAR * Complex64::new(re.value, im.value))
}

/// Leading-order shift: real part Π^R(ω_p⁰), imaginary part −πΓ²ν²ω_p⁰.
pub fn approximate_shift(b: &FermiBathConfig) -> Result<Complex64> {
    let re = retarded_polarization(b.mode_frequency, b)?.re;
    Ok(Complex64::new(re, -std::f64::consts::PI * b.g2() * b.mode_frequency))
}

/// Small-T coefficient of the real shift, π²Γ²ν²k_B²W/(3ħμ(W−μ)), in rad/s/K².
pub fn quadratic_temperature_coefficient(b: &FermiBathConfig) -> f64 {
    let (w, mu) = (b.bandwidth, b.chemical_potential);
    std::f64::consts::PI.powi(2) * b.g2() * BOLTZMANN.powi(2) * w / (3.0 * HBAR * mu * (w - mu))
}

/// Complex pole shift ω_L (rad/s): fixed point of the real part of
/// ω_L = Π^R(ω_p⁰ + ω_L), started from the leading-order solution, with
/// the imaginary part taken from Π^R at the converged real frequency.
pub fn pole_shift(b: &FermiBathConfig) -> Result<Complex64> {
    b.validate()?;
    pole_shift_at(b, b.kt())
}

/// Pole shift in the T → 0 limit, with the occupation factor replaced by sgn ε.
pub fn pole_shift_zero_temperature(b: &FermiBathConfig) -> Result<Complex64> {
    b.validate()?;
    pole_shift_at(b, 0.0)
}

fn pole_shift_at(b: &FermiBathConfig, kt: f64) -> Result<Complex64> {
    if b.coupling_dos_product == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let w0 = b.mode_frequency;
    let mut x = retarded_at(w0, b, kt)?.re;
    for _ in 0..200 {
        let next = retarded_at(w0 + x, b, kt)?.re;
        let done = (next - x).abs() <= 1e-13 * w0.max(next.abs());
        x = next;
        if done {
            let p = retarded_at(w0 + x, b, kt)?;
            if p.im > 0.0 {
                return Err(Error::NonPhysical("bath pole moved to the upper half-plane".into()));
            }
            return Ok(Complex64::new(x, p.im));
        }
        if !x.is_finite() || (w0 + x) <= 0.0 {
            break;
        }
    }
    Err(Error::RootNotFound(format!(
        "pole equation did not converge at T = {} K",
        b.temperature
    )))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftPoint {
    pub temperature: f64,
    pub shift: Complex64,
}

pub fn shift_vs_temperature(b: &FermiBathConfig, temperatures: &[f64]) -> Result<Vec<ShiftPoint>> {
    if temperatures.is_empty() {
        return Err(Error::InvalidInput("temperature grid is empty".into()));
    }
    if temperatures.windows(2).any(|w| w[1] <= w[0]) || temperatures[0] <= 0.0 {
        return Err(Error::InvalidInput("temperature grid must be positive and ascending".into()));
    }
    temperatures
        .iter()
        .map(|&t| {
            let shift = pole_shift(&b.with_temperature(t)).map_err(|e| match e {
                Error::RootNotFound(_) => Error::RootNotFound(format!("pole equation failed at T = {t} K")),
                other => other,
            })?;
            Ok(ShiftPoint { temperature: t, shift })
        })
        .collect()
}

/// Numerical T² coefficient of the real shift, [Re ω_L(T) − Re ω_L(0)]/T².
pub fn fitted_quadratic_coefficient(b: &FermiBathConfig) -> Result<f64> {
    let at_t = pole_shift(b)?.re;
    let at_0 = pole_shift_zero_temperature(b)?.re;
    Ok((at_t - at_0) / b.temperature.powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{ghz_to_angular, micro_ev_to_joule};

    fn bath() -> FermiBathConfig {
        FermiBathConfig {
            bandwidth: micro_ev_to_joule(10_000.0),
            chemical_potential: micro_ev_to_joule(4_000.0),
            coupling_dos_product: 0.003,
            temperature: 0.5,
            mode_frequency: ghz_to_angular(8.8241),
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn zero_coupling_is_inert() {
        let b = bath().with_coupling(0.0);
        assert_eq!(polarization(b.bosonic_frequency(3), &b).unwrap(), 0.0);
        assert_eq!(pole_shift(&b).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn even_in_matsubara_frequency() {
        let b = bath();
        for n in [1, 4] {
            let p = polarization(b.bosonic_frequency(n), &b).unwrap();
            let m = polarization(b.bosonic_frequency(-n), &b).unwrap();
            assert_eq!(p, m);
        }
    }

    #[test]
    fn symmetric_band_matches_double_sum() {
        let mut b = bath();
        b.chemical_potential = 0.5 * b.bandwidth;
        let closed = polarization(0.0, &b).unwrap();
        let oracle = polarization_double_sum(0, &b).unwrap();
        assert!(rel(closed, oracle) < 1e-4, "{closed} {oracle}");
    }

    #[test]
    fn closed_form_matches_double_sum() {
        let sets = [
            (10_000.0, 4_000.0, 0.5),
            (3_000.0, 2_100.0, 1.5),
            (25_000.0, 6_000.0, 3.0),
        ];
        for (w, mu, t) in sets {
            let b = FermiBathConfig {
                bandwidth: micro_ev_to_joule(w),
                chemical_potential: micro_ev_to_joule(mu),
                temperature: t,
                ..bath()
            };
            for n in [0, 1, 5] {
                let closed = polarization(b.bosonic_frequency(n), &b).unwrap();
                let oracle = polarization_double_sum(n, &b).unwrap();
                assert!(rel(closed, oracle) < 1e-4, "n={n}: {closed} {oracle}");
            }
        }
    }

    #[test]
    fn exact_continuation_matches_vanishing_broadening() {
        let b = bath();
        let w = b.mode_frequency;
        let eta = 1e-6 * HBAR * w;
        let exact = retarded_polarization(w, &b).unwrap();
        let p1 = retarded_polarization_broadened(w, eta, &b).unwrap();
        let p2 = retarded_polarization_broadened(w, 2.0 * eta, &b).unwrap();
        let extrapolated = 2.0 * p1 - p2;
        assert!((extrapolated - exact).norm() < 1e-6 * exact.norm(), "{exact} {extrapolated}");
    }

    #[test]
    fn imaginary_part_matches_leading_order() {
        let b = bath();
        let s = pole_shift(&b).unwrap();
        let expected = -std::f64::consts::PI * 0.003f64.powi(2) * b.mode_frequency;
        assert!(rel(s.im, expected) < 0.02, "{} {expected}", s.im);
        let a = approximate_shift(&b).unwrap();
        assert!(rel(a.re, s.re) < 0.01);
    }

    #[test]
    fn pole_is_causal() {
        for t in [0.05, 0.5, 5.0, 30.0] {
            for gnu in [0.001, 0.01, 0.05] {
                let s = pole_shift(&bath().with_temperature(t).with_coupling(gnu)).unwrap();
                assert!(s.im <= 0.0 && s.re.is_finite());
            }
        }
    }

    #[test]
    fn quadratic_coefficient_magnitude() {
        let b = bath();
        let fitted = fitted_quadratic_coefficient(&b).unwrap();
        let expected = quadratic_temperature_coefficient(&b);
        assert!(rel(fitted.abs(), expected) < 0.05, "{fitted} {expected}");
        // the one-loop Π makes the thermal part of the shift positive
        assert!(fitted > 0.0);
    }

    #[test]
    fn static_polarization_sign_from_oracle() {
        let b = bath();
        let lo = polarization_double_sum(0, &b.with_temperature(2.0)).unwrap();
        let hi = polarization_double_sum(0, &b.with_temperature(4.0)).unwrap();
        assert!(hi > lo);
    }

    #[test]
    fn quadratic_law_and_flat_damping() {
        let b = bath();
        let zero = pole_shift_zero_temperature(&b).unwrap();
        let pts = shift_vs_temperature(&b, &[0.1, 0.25, 0.5, 0.9]).unwrap();
        let d1 = pts[1].shift.re - zero.re;
        let d2 = pts[2].shift.re - zero.re;
        assert!(rel(d2, 4.0 * d1) < 0.1, "{d1} {d2}");
        let ims: Vec<f64> = pts.iter().map(|p| p.shift.im).collect();
        let (mn, mx) = ims.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, c), &v| (a.min(v), c.max(v)));
        assert!((mx - mn).abs() < 0.05 * mn.abs());
        assert!(pts.windows(2).all(|w| w[1].shift.re > w[0].shift.re));
    }

    #[test]
    fn coupling_scaling() {
        let a = pole_shift(&bath()).unwrap();
        let b = pole_shift(&bath().with_coupling(0.006)).unwrap();
        assert!(rel(b.re, 4.0 * a.re) < 0.01);
        assert!(rel(b.im, 4.0 * a.im) < 0.01);
    }

    #[test]
    fn invalid_inputs() {
        let b = bath();
        assert!(FermiBathConfig { chemical_potential: b.bandwidth, ..b }.validate().is_err());
        assert!(b.with_temperature(0.0).validate().is_err());
        assert!(shift_vs_temperature(&b, &[0.2, 0.1]).is_err());
        assert!(shift_vs_temperature(&b, &[]).is_err());
    }
}
