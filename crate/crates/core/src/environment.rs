//! Hybrid-environment characterization of a resonator mode: traced
//! golden-rule rates, the coupling strength γ_T, the effective temperature
//! and the thermal occupation of the environment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_elements::{adaptive_transfer_weights, ModeConfig, TransferWeights};
use crate::tunneling::{ForwardRateTable, JunctionConfig};
use crate::units::{bose_occupation, mhz_to_angular, BOLTZMANN, ELEMENTARY_CHARGE, HBAR, VON_KLITZING};

/// Operating point of the device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveState {
    /// Bias voltage V (volts).
    pub bias_voltage: f64,
    /// Mean photon number n̄_s of the driven supporting mode.
    pub supporting_occupation: f64,
    /// Supporting-mode drive detuning Δ_s (rad/s).
    pub supporting_detuning: f64,
}

impl DriveState {
    pub fn new(bias_voltage: f64, supporting_occupation: f64) -> Self {
        Self {
            bias_voltage,
            supporting_occupation,
            supporting_detuning: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentCharacterization {
    /// γ_T (rad/s).
    pub coupling: f64,
    /// T_T (K).
    pub temperature: f64,
    /// N_T.
    pub occupation: f64,
    /// Γ̃₀₁ (1/s).
    pub up_rate: f64,
    /// Γ̃₁₀ (1/s).
    pub down_rate: f64,
}

/// The junction plus the two resonator modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub junction: JunctionConfig,
    pub primary: ModeConfig,
    pub supporting: ModeConfig,
}

impl Device {
    pub fn reference(tunneling_resistance: f64) -> Self {
        Self {
            junction: JunctionConfig::reference(tunneling_resistance),
            primary: ModeConfig::reference_primary(),
            supporting: ModeConfig::reference_supporting(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.junction.validate()?;
        self.primary.validate("primary")?;
        self.supporting.validate("supporting")
    }

    pub fn with_tunneling_resistance(mut self, r: f64) -> Self {
        self.junction.tunneling_resistance = r;
        self
    }
}

/// Which mode plays the role of the probed mode; the other is traced out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeRole {
    Primary,
    Supporting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentOptions {
    /// Largest |ℓ| of the probed mode, 1 (first order in ρ) or 2.
    pub lp_max: usize,
    /// Smallest retained |ℓ| of the traced mode.
    pub min_ls: usize,
    /// Neglected transfer weight relative to the ℓ = 0 weight.
    pub ls_rel_tail: f64,
    /// Neglected Poisson mass.
    pub poisson_tail: f64,
    /// Relative tolerance of the truncation check.
    pub truncation_tol: f64,
}

impl Default for EnvironmentOptions {
    fn default() -> Self {
        Self {
            lp_max: 1,
            min_ls: 6,
            ls_rel_tail: 1e-10,
            poisson_tail: 1e-12,
            truncation_tol: 1e-9,
        }
    }
}

/// Device, options and a tabulated forward rate. Immutable after
/// construction, so it can be shared across threads.
#[derive(Debug, Clone)]
pub struct EnvironmentModel {
    device: Device,
    options: EnvironmentOptions,
    rates: ForwardRateTable,
}

impl EnvironmentModel {
    /// Tabulates F(E) for arguments reachable with |V| ≤ `max_bias` and
    /// probe frequencies up to `max_frequency`.
    pub fn new(device: Device, options: EnvironmentOptions, max_bias: f64, max_frequency: f64) -> Result<Self> {
        device.validate()?;
        if options.lp_max == 0 || options.lp_max > 2 {
            return Err(Error::config("flags.lp_max", "must be 1 or 2"));
        }
        let j = &device.junction;
        let omega = max_frequency
            .max(device.primary.bare_frequency)
            .max(device.supporting.bare_frequency);
        let e_max = ELEMENTARY_CHARGE * max_bias.abs()
            + options.lp_max as f64 * HBAR * omega
            + 24.0 * HBAR * device.supporting.bare_frequency.max(device.primary.bare_frequency)
            + j.charging_energy
            + 20.0 * j.thermal_energy()
            + 2.0 * j.gap;
        let rates = ForwardRateTable::build(j, e_max)?;
        Ok(Self { device, options, rates })
    }

    /// Reuses an existing rate table (F does not depend on R_T or the modes).
    pub fn with_device(&self, device: Device) -> Result<Self> {
        device.validate()?;
        let a = &device.junction;
        let b = self.rates.junction();
        if a.gap != b.gap || a.dynes != b.dynes || a.electron_temperature != b.electron_temperature {
            return Err(Error::InvalidInput("junction change requires a new rate table".into()));
        }
        Ok(Self {
            device,
            options: self.options,
            rates: self.rates.clone(),
        })
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn options(&self) -> &EnvironmentOptions {
        &self.options
    }

    pub fn rate_table(&self) -> &ForwardRateTable {
        &self.rates
    }

    /// F(E) in 1/s.
    pub fn forward_rate(&self, energy: f64) -> Result<f64> {
        self.rates.rate(energy)
    }

    fn modes(&self, role: ModeRole) -> (&ModeConfig, &ModeConfig) {
        match role {
            ModeRole::Primary => (&self.device.primary, &self.device.supporting),
            ModeRole::Supporting => (&self.device.supporting, &self.device.primary),
        }
    }

    fn prefactor(&self) -> f64 {
        2.0 * VON_KLITZING / self.device.junction.tunneling_resistance
    }

    /// Bare golden-rule rate (2R_K/R_T) Σ_τ F(τeV + ℓ_pħω_p + ℓ_sħω_s − E_N),
    /// before weighting by the transition probabilities.
    pub fn golden_rule_rate(&self, l_p: i64, l_s: i64, d: &DriveState) -> Result<f64> {
        let ev = ELEMENTARY_CHARGE * d.bias_voltage;
        let base = l_p as f64 * HBAR * self.device.primary.bare_frequency
            + l_s as f64 * HBAR * self.device.supporting.bare_frequency
            - self.device.junction.charging_energy;
        Ok(self.prefactor() * (self.forward_rate(base + ev)? + self.forward_rate(base - ev)?))
    }

    /// Photon-transfer weights of the traced mode at occupation `occupation`.
    pub fn transfer_weights(&self, role: ModeRole, occupation: f64) -> Result<TransferWeights> {
        let (_, other) = self.modes(role);
        adaptive_transfer_weights(
            occupation,
            other.interaction(),
            self.options.min_ls,
            self.options.ls_rel_tail,
            self.options.poisson_tail,
        )
    }

    /// γ-kernel for one operating point; evaluating it at many frequencies
    /// reuses the transfer weights.
    pub fn kernel(&self, role: ModeRole, bias_voltage: f64, other_occupation: f64) -> Result<CouplingKernel<'_>> {
        let weights = self.transfer_weights(role, other_occupation)?;
        Ok(CouplingKernel {
            model: self,
            role,
            bias_voltage,
            weights,
        })
    }

    /// γ_T,p(V, n̄_s) with a truncation check.
    pub fn coupling_strength(&self, d: &DriveState) -> Result<f64> {
        self.coupling_of(ModeRole::Primary, d.bias_voltage, d.supporting_occupation)
    }

    /// Coupling of either mode to the refrigerator, the other mode traced
    /// out at mean occupation `other_occupation`.
    pub fn coupling_of(&self, role: ModeRole, bias_voltage: f64, other_occupation: f64) -> Result<f64> {
        let kernel = self.kernel(role, bias_voltage, other_occupation)?;
        let omega = self.modes(role).0.bare_frequency;
        let value = kernel.coupling_at(omega)?;
        // enlarge both truncations and compare
        let (_, other) = self.modes(role);
        let wide = adaptive_transfer_weights(
            other_occupation,
            other.interaction(),
            kernel.weights.l_max + 2,
            self.options.ls_rel_tail * 1e-2,
            self.options.poisson_tail * 1e-2,
        )?;
        let wide_value = CouplingKernel {
            model: self,
            role,
            bias_voltage,
            weights: wide,
        }
        .coupling_at(omega)?;
        let scale = value.abs().max(wide_value.abs());
        if scale > 0.0 {
            let change = (wide_value - value).abs() / scale;
            if change > 10.0 * self.options.truncation_tol {
                return Err(Error::TruncationInsufficient { change });
            }
        }
        Ok(value)
    }

    /// Coupling strength with ħω in place of ħω_p.
    pub fn coupling_strength_at_frequency(&self, omega: f64, d: &DriveState) -> Result<f64> {
        if !(omega >= 0.0) {
            return Err(Error::InvalidInput(format!("frequency {omega} must be non-negative")));
        }
        self.kernel(ModeRole::Primary, d.bias_voltage, d.supporting_occupation)?
            .coupling_at(omega)
    }

    /// Traced rates (Γ̃₁₀, Γ̃₀₁) of the primary mode to first order in ρ_p.
    pub fn traced_rates(&self, d: &DriveState) -> Result<(f64, f64)> {
        let kernel = self.kernel(ModeRole::Primary, d.bias_voltage, d.supporting_occupation)?;
        kernel.traced_rates(self.device.primary.bare_frequency)
    }

    /// T_T,p = (ħω_p/k_B) / ln(Γ̃₁₀/Γ̃₀₁).
    pub fn effective_temperature(&self, d: &DriveState) -> Result<f64> {
        let (down, up) = self.traced_rates(d)?;
        self.temperature_from_rates(down, up)
    }

    fn temperature_from_rates(&self, down: f64, up: f64) -> Result<f64> {
        let j = &self.device.junction;
        let saturated = self.prefactor() * self.device.primary.interaction() * j.gap / crate::units::PLANCK;
        let floor = 1e-300 * saturated;
        if !(down > floor) || !(up > floor) {
            return Err(Error::RateUnderflow { up, down });
        }
        let ln_ratio = down.ln() - up.ln();
        Ok(HBAR * self.device.primary.bare_frequency / (BOLTZMANN * ln_ratio))
    }

    pub fn characterize(&self, d: &DriveState) -> Result<EnvironmentCharacterization> {
        let coupling = self.coupling_strength(d)?;
        let (down, up) = self.traced_rates(d)?;
        let temperature = self.temperature_from_rates(down, up)?;
        Ok(EnvironmentCharacterization {
            coupling,
            temperature,
            occupation: bose_occupation(self.device.primary.bare_frequency, temperature),
            up_rate: up,
            down_rate: down,
        })
    }
}

/// γ(ω) at a fixed operating point.
#[derive(Debug, Clone)]
pub struct CouplingKernel<'a> {
    model: &'a EnvironmentModel,
    role: ModeRole,
    bias_voltage: f64,
    weights: TransferWeights,
}

impl CouplingKernel<'_> {
    pub fn weights(&self) -> &TransferWeights {
        &self.weights
    }

    fn offsets(&self) -> (f64, f64, f64) {
        let (_, other) = self.model.modes(self.role);
        (
            ELEMENTARY_CHARGE * self.bias_voltage,
            HBAR * other.bare_frequency,
            self.model.device.junction.charging_energy,
        )
    }

    /// Σ_ℓo W(ℓo) Σ_τ F(τeV + shift + ℓo ħω_o − E_N)
    fn traced_sum(&self, shift: f64) -> Result<f64> {
        let (ev, quantum, e_n) = self.offsets();
        let mut total = 0.0;
        for (l, w) in self.weights.iter() {
            if w == 0.0 {
                continue;
            }
            let base = shift + l as f64 * quantum - e_n;
            total += w * (self.model.forward_rate(base + ev)? + self.model.forward_rate(base - ev)?);
        }
        Ok(total)
    }

    /// Coupling strength in rad/s with the probed-mode quantum ħω.
    pub fn coupling_at(&self, omega: f64) -> Result<f64> {
        let (target, _) = self.model.modes(self.role);
        let (ev, quantum, e_n) = self.offsets();
        let rho = target.interaction();
        let mut total = 0.0;
        for (l, w) in self.weights.iter() {
            if w == 0.0 {
                continue;
            }
            let base = l as f64 * quantum - e_n;
            let mut inner = 0.0;
            let mut order_weight = 1.0;
            for lp in 1..=self.model.options.lp_max {
                let e = lp as f64 * HBAR * omega;
                let mut diff = 0.0;
                for tau_ev in [ev, -ev] {
                    diff += self.model.forward_rate(tau_ev + e + base)? - self.model.forward_rate(tau_ev - e + base)?;
                }
                inner += lp as f64 * order_weight * diff;
                // next order in ρ: |M_{0,ℓ}|²/ρ = ρ^{ℓ-1}/ℓ!
                order_weight *= rho / (lp as f64 + 1.0);
            }
            total += w * inner;
        }
        // 2πα²Z/R_T = ρ · 2R_K/R_T
        Ok(rho * self.model.prefactor() * total)
    }

    /// (Γ̃₁₀, Γ̃₀₁) at first order in ρ of the probed mode.
    pub fn traced_rates(&self, omega: f64) -> Result<(f64, f64)> {
        let (target, _) = self.model.modes(self.role);
        let scale = target.interaction() * self.model.prefactor();
        let e = HBAR * omega;
        Ok((scale * self.traced_sum(e)?, scale * self.traced_sum(-e)?))
    }

    /// Probe frequencies at which some F argument crosses a gap edge.
    pub fn knee_frequencies(&self, omega_max: f64) -> Vec<f64> {
        let (ev, quantum, e_n) = self.offsets();
        let gap = self.model.device.junction.gap;
        let mut out = Vec::new();
        for (l, w) in self.weights.iter() {
            if w == 0.0 {
                continue;
            }
            let base = l as f64 * quantum - e_n;
            for tau_ev in [ev, -ev] {
                for edge in [gap, -gap] {
                    for lp in 1..=self.model.options.lp_max {
                        let lp = lp as f64;
                        // ±ħω·lp + τeV + base = edge
                        for sign in [1.0, -1.0] {
                            let w_knee = sign * (edge - tau_ev - base) / (lp * HBAR);
                            if w_knee > 0.0 && w_knee < omega_max {
                                out.push(w_knee);
                            }
                        }
                    }
                }
            }
        }
        out.sort_by(|a, b| a.total_cmp(b));
        out.dedup();
        out
    }
}

/// Tunneling resistance giving coupling `target` (rad/s) at
/// eV = Δ − ħω_p + E_N + 10 k_B T_N with the supporting mode undriven.
pub fn calibrate_tunneling_resistance(model: &EnvironmentModel, target: f64) -> Result<f64> {
    let d = model.device();
    let unit = model.with_device(d.with_tunneling_resistance(1.0))?;
    let v = calibration_bias(d);
    let gamma_unit = unit.coupling_strength(&DriveState::new(v, 0.0))?;
    if !(gamma_unit > 0.0) {
        return Err(Error::NonPhysical("calibration coupling is not positive".into()));
    }
    Ok(gamma_unit / target)
}

pub fn calibration_bias(d: &Device) -> f64 {
    let j = &d.junction;
    (j.gap - HBAR * d.primary.bare_frequency + j.charging_energy + 10.0 * j.thermal_energy()) / ELEMENTARY_CHARGE
}

/// On-state coupling used for the default calibration, 2π × 10 MHz.
pub fn default_on_state_coupling() -> f64 {
    mhz_to_angular(10.0)
}

/// Bias voltage at which processes absorbing `l_s` supporting photons set in.
pub fn onset_voltage(d: &Device, l_s: i64) -> f64 {
    let j = &d.junction;
    (j.gap - HBAR * d.primary.bare_frequency - l_s as f64 * HBAR * d.supporting.bare_frequency)
        / ELEMENTARY_CHARGE
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{mhz_to_angular, millivolt_to_volt};
    use std::sync::OnceLock;

    fn model() -> &'static EnvironmentModel {
        static M: OnceLock<EnvironmentModel> = OnceLock::new();
        M.get_or_init(|| {
            EnvironmentModel::new(
                Device::reference(20e3),
                EnvironmentOptions::default(),
                millivolt_to_volt(0.4),
                2.0 * crate::units::ghz_to_angular(100.0),
            )
            .unwrap()
        })
    }

    #[test]
    fn onset_voltages_arithmetic() {
        let d = Device::reference(1.0);
        let v = |l| crate::units::volt_to_millivolt(onset_voltage(&d, l));
        assert!((v(0) - 0.1715).abs() < 5e-4);
        assert!((v(1) - 0.0985).abs() < 5e-4);
        assert!((v(2) - 0.0255).abs() < 5e-4);
    }

    #[test]
    fn kms_ratio_at_zero_bias() {
        let m = model();
        let d = DriveState::new(0.0, 0.0);
        let up = m.golden_rule_rate(-1, 0, &d).unwrap();
        let down = m.golden_rule_rate(1, 0, &d).unwrap();
        let x = HBAR * m.device().primary.bare_frequency / m.device().junction.thermal_energy();
        assert!(((down / up) / x.exp() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rate_even_in_bias() {
        let m = model();
        for v in [0.05, 0.12, 0.2] {
            let a = m.golden_rule_rate(1, 1, &DriveState::new(millivolt_to_volt(v), 0.0)).unwrap();
            let b = m.golden_rule_rate(1, 1, &DriveState::new(millivolt_to_volt(-v), 0.0)).unwrap();
            assert_eq!(a, b);
            let g1 = m.coupling_strength(&DriveState::new(millivolt_to_volt(v), 30.0)).unwrap();
            let g2 = m.coupling_strength(&DriveState::new(millivolt_to_volt(-v), 30.0)).unwrap();
            assert!(((g1 - g2) / g1).abs() < 1e-14);
        }
    }

    #[test]
    fn coupling_equals_rate_difference() {
        let m = model();
        for (v, n) in [(0.0, 0.0), (0.1, 50.0), (0.17, 0.0), (0.03, 800.0)] {
            let d = DriveState::new(millivolt_to_volt(v), n);
            let g = m.coupling_strength(&d).unwrap();
            let (down, up) = m.traced_rates(&d).unwrap();
            assert!(((down - up) - g).abs() <= 1e-10 * g.abs(), "{v} {n}");
            assert!(g >= 0.0);
        }
    }

    #[test]
    fn frequency_resolved_matches_and_vanishes_at_zero() {
        let m = model();
        let d = DriveState::new(millivolt_to_volt(0.12), 100.0);
        let a = m.coupling_strength(&d).unwrap();
        let b = m.coupling_strength_at_frequency(m.device().primary.bare_frequency, &d).unwrap();
        assert_eq!(a, b);
        assert_eq!(m.coupling_strength_at_frequency(0.0, &d).unwrap(), 0.0);
        assert!(m.coupling_strength_at_frequency(-1.0, &d).is_err());
    }

    #[test]
    fn effective_temperature_at_equilibrium() {
        let m = model();
        // supporting-mode vacuum fluctuations move T_T off T_N slightly
        let t = m.effective_temperature(&DriveState::new(0.0, 0.0)).unwrap();
        assert!((t / 0.090 - 1.0).abs() < 1e-4, "{t}");
    }

    #[test]
    fn occupation_consistent_with_temperature() {
        let m = model();
        let c = m.characterize(&DriveState::new(millivolt_to_volt(0.1), 10.0)).unwrap();
        let n = 1.0 / ((HBAR * m.device().primary.bare_frequency / (BOLTZMANN * c.temperature)).exp() - 1.0);
        assert!(((c.occupation - n) / n).abs() < 1e-12);
    }

    #[test]
    fn monotone_onset_without_drive() {
        let m = model();
        let v_on = onset_voltage(m.device(), 0);
        let mut prev = 0.0;
        for i in 0..=40 {
            let v = v_on * i as f64 / 40.0;
            let g = m.coupling_strength(&DriveState::new(v, 0.0)).unwrap();
            assert!(g >= prev * (1.0 - 1e-9), "{i}");
            prev = g;
        }
    }

    #[test]
    fn calibration_hits_target() {
        let m = model();
        let r = calibrate_tunneling_resistance(m, mhz_to_angular(10.0)).unwrap();
        let cal = m.with_device(m.device().with_tunneling_resistance(r)).unwrap();
        let g = cal.coupling_strength(&DriveState::new(calibration_bias(cal.device()), 0.0)).unwrap();
        assert!((g / mhz_to_angular(10.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn second_order_primary_terms_are_small() {
        let mut opts = EnvironmentOptions::default();
        opts.lp_max = 2;
        let m2 = model().clone();
        let m2 = EnvironmentModel { options: opts, ..m2 };
        let d = DriveState::new(millivolt_to_volt(0.3), 0.0);
        let a = model().coupling_strength(&d).unwrap();
        let b = m2.coupling_strength(&d).unwrap();
        assert!(b > a && (b - a) / a < 0.01, "{a} {b}");
    }
}
