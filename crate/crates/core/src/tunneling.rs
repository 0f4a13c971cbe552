//! Quasiparticle tunneling through a single NIS junction.
//!
//! Energies are in joules, temperatures in kelvin, rates in 1/s.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{breakpoints, integrate_with_points, QuadOptions};
use crate::units::{micro_ev_to_joule, BOLTZMANN, PLANCK};

/// Smallest Dynes parameter used in the density of states; zero is clamped to this.
pub const MIN_DYNES: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JunctionConfig {
    /// Superconductor gap Δ (J).
    pub gap: f64,
    /// Dynes broadening γ_D.
    pub dynes: f64,
    /// Tunneling resistance R_T (Ω).
    pub tunneling_resistance: f64,
    /// Electron temperature T_N (K), shared by both electrodes.
    pub electron_temperature: f64,
    /// Island charging energy E_N (J).
    pub charging_energy: f64,
}

impl JunctionConfig {
    pub fn new(
        gap: f64,
        dynes: f64,
        tunneling_resistance: f64,
        electron_temperature: f64,
        charging_energy: f64,
    ) -> Result<Self> {
        let j = Self {
            gap,
            dynes,
            tunneling_resistance,
            electron_temperature,
            charging_energy,
        };
        j.validate()?;
        Ok(j)
    }

    /// Aluminium junction of the reference device. The tunneling resistance
    /// is not part of the device table and is normally calibrated, see
    /// [`crate::environment::calibrate_tunneling_resistance`].
    pub fn reference(tunneling_resistance: f64) -> Self {
        Self {
            gap: micro_ev_to_joule(208.0),
            dynes: 4e-4,
            tunneling_resistance,
            electron_temperature: 0.090,
            charging_energy: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::config(format!("junction.{field}"), msg));
        if !(self.gap > 0.0 && self.gap.is_finite()) {
            return bad("gap", "must be positive");
        }
        if !(self.dynes >= 0.0 && self.dynes < 1.0) {
            return bad("dynes", "must lie in [0, 1)");
        }
        if !(self.tunneling_resistance > 0.0 && self.tunneling_resistance.is_finite()) {
            return bad("tunneling_resistance", "must be positive");
        }
        if !(self.electron_temperature > 0.0 && self.electron_temperature.is_finite()) {
            return bad("electron_temperature", "must be positive");
        }
        if !(self.charging_energy >= 0.0 && self.charging_energy.is_finite()) {
            return bad("charging_energy", "must be non-negative");
        }
        Ok(())
    }

    /// Model-validity warnings (not errors).
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.dynes == 0.0 {
            w.push(format!("dynes parameter 0 clamped to {MIN_DYNES:e}"));
        }
        let limit = 0.1 * self.gap.min(self.thermal_energy());
        if self.charging_energy > limit {
            w.push(format!(
                "charging energy {:e} J exceeds 0.1*min(gap, k_B T_N) = {:e} J; model assumes it is negligible",
                self.charging_energy, limit
            ));
        }
        w
    }

    pub fn thermal_energy(&self) -> f64 {
        BOLTZMANN * self.electron_temperature
    }

    pub fn effective_dynes(&self) -> f64 {
        self.dynes.max(MIN_DYNES)
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.electron_temperature = t;
        self
    }
}

/// Dynes density of states at `x = ε/Δ` with broadening `dynes`.
pub fn dynes_dos_normalized(x: f64, dynes: f64) -> f64 {
    let z = Complex64::new(x, dynes);
    let w = z / (z * z - 1.0).sqrt();
    w.re.abs()
}

/// Normalized quasiparticle density of states n_S(ε).
pub fn dynes_dos(energy: f64, j: &JunctionConfig) -> f64 {
    dynes_dos_normalized(energy / j.gap, j.effective_dynes())
}

/// Fermi function 1/(exp(ε/k_B T) + 1), saturating without overflow.
pub fn fermi_occupation(energy: f64, temperature: f64) -> f64 {
    fermi_reduced(energy / (BOLTZMANN * temperature))
}

fn fermi_reduced(x: f64) -> f64 {
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Which density of states the superconducting electrode uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityOfStates {
    Dynes,
    /// n_S ≡ 1, the normal-state limit.
    Normal,
}

/// Options for direct evaluation of F(E).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateOptions {
    pub rel_tol: f64,
    /// Absolute floor in units of Δ/h.
    pub abs_floor: f64,
    pub max_intervals: usize,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_floor: 1e-30,
            max_intervals: 20_000,
        }
    }
}

/// Normalized forward tunneling rate F(E) in 1/s.
pub fn forward_rate(energy: f64, j: &JunctionConfig) -> Result<f64> {
    forward_rate_with(energy, j, DensityOfStates::Dynes, &RateOptions::default())
}

pub fn forward_rate_with(
    energy: f64,
    j: &JunctionConfig,
    dos: DensityOfStates,
    opts: &RateOptions,
) -> Result<f64> {
    // integrate over x = ε/Δ
    let gap = j.gap;
    let kt = j.thermal_energy() / gap;
    let e = energy / gap;
    let gd = j.effective_dynes();
    let integrand = |x: f64| {
        let n = match dos {
            DensityOfStates::Dynes => dynes_dos_normalized(x, gd),
            DensityOfStates::Normal => 1.0,
        };
        n * fermi_reduced(-x / kt) * fermi_reduced((x - e) / kt)
    };
    let lo = (-10.0f64).min(e - 40.0 * kt);
    let hi = 10.0f64.max(e + 40.0 * kt);
    let mut interior = vec![0.0, e, e - 8.0 * kt, e + 8.0 * kt];
    if dos == DensityOfStates::Dynes {
        interior.extend([-1.0, 1.0]);
    }
    let pts = breakpoints(lo, hi, interior);
    let q = QuadOptions {
        rel_tol: opts.rel_tol,
        abs_tol: opts.abs_floor,
        max_intervals: opts.max_intervals,
    };
    let r = integrate_with_points(integrand, &pts, &q)?;
    Ok(r.value.max(0.0) * gap / PLANCK)
}

/// Natural cubic spline on a uniform grid.
#[derive(Debug, Clone)]
struct UniformSpline {
    x0: f64,
    h: f64,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl UniformSpline {
    fn new(x0: f64, h: f64, y: Vec<f64>) -> Self {
        let n = y.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm for the interior second derivatives
            let k = n - 2;
            let mut c = vec![0.0; k];
            let mut d = vec![0.0; k];
            for i in 0..k {
                let rhs = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]) / (h * h);
                if i == 0 {
                    c[i] = 1.0 / 4.0;
                    d[i] = rhs / 4.0;
                } else {
                    let denom = 4.0 - c[i - 1];
                    c[i] = 1.0 / denom;
                    d[i] = (rhs - d[i - 1]) / denom;
                }
            }
            m[k] = d[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = d[i] - c[i] * m[i + 2];
            }
        }
        Self { x0, h, y, m }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let t = (x - self.x0) / self.h;
        let i = (t.floor().max(0.0) as usize).min(n - 2);
        let a = t - i as f64;
        let b = 1.0 - a;
        let h2 = self.h * self.h;
        b * self.y[i]
            + a * self.y[i + 1]
            + ((b * b * b - b) * self.m[i] + (a * a * a - a) * self.m[i + 1]) * h2 / 6.0
    }

    fn x_max(&self) -> f64 {
        self.x0 + self.h * (self.y.len() - 1) as f64
    }
}

/// Tabulated F(E) for repeated evaluation.
///
/// Stores ln F on a uniform grid over `[0, e_max]` and fills negative
/// energies from detailed balance, F(-E) = exp(-E/k_B T) F(E), which holds
/// because both electrodes share T_N and n_S is even. Requests beyond the
/// table fall back to direct quadrature.
#[derive(Debug, Clone)]
pub struct ForwardRateTable {
    junction: JunctionConfig,
    spline: UniformSpline,
    valid_max: f64,
    opts: RateOptions,
}

const GHOST_POINTS: usize = 24;

impl ForwardRateTable {
    /// Grid spacing k_B T_N / 8.
    pub fn build(j: &JunctionConfig, e_max: f64) -> Result<Self> {
        Self::build_with(j, e_max, j.thermal_energy() / 8.0, RateOptions::default())
    }

    pub fn build_with(j: &JunctionConfig, e_max: f64, spacing: f64, opts: RateOptions) -> Result<Self> {
        j.validate()?;
        if !(spacing > 0.0) || !(e_max > 0.0) {
            return Err(Error::InvalidInput("table spacing and range must be positive".into()));
        }
        let kt = j.thermal_energy();
        let n_pos = (e_max / spacing).ceil() as usize + GHOST_POINTS + 1;
        let pos: Vec<f64> = (0..n_pos)
            .into_par_iter()
            .map(|i| {
                let e = i as f64 * spacing;
                forward_rate_with(e, j, DensityOfStates::Dynes, &opts).map(f64::ln)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut y = Vec::with_capacity(n_pos + GHOST_POINTS);
        for i in (1..=GHOST_POINTS).rev() {
            let e = i as f64 * spacing;
            y.push(pos[i] - e / kt);
        }
        y.extend_from_slice(&pos);
        let spline = UniformSpline::new(-(GHOST_POINTS as f64) * spacing, spacing, y);
        let valid_max = spline.x_max() - GHOST_POINTS as f64 * spacing;
        Ok(Self {
            junction: *j,
            spline,
            valid_max,
            opts,
        })
    }

    pub fn junction(&self) -> &JunctionConfig {
        &self.junction
    }

    pub fn e_max(&self) -> f64 {
        self.valid_max
    }

    pub fn covers(&self, energy: f64) -> bool {
        energy.abs() <= self.valid_max
    }

    pub fn ln_rate(&self, energy: f64) -> Result<f64> {
        let kt = self.junction.thermal_energy();
        let ln_pos = |e: f64| -> Result<f64> {
            if e <= self.valid_max {
                Ok(self.spline.eval(e))
            } else {
                forward_rate_with(e, &self.junction, DensityOfStates::Dynes, &self.opts).map(f64::ln)
            }
        };
        if energy >= 0.0 {
            ln_pos(energy)
        } else {
            Ok(ln_pos(-energy)? + energy / kt)
        }
    }

    pub fn rate(&self, energy: f64) -> Result<f64> {
        self.ln_rate(energy).map(f64::exp)
    }
}
