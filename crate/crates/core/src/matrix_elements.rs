//! Circuit-level Franck–Condon factors: capacitance-network reduction,
//! interaction parameters, displaced-Fock transition probabilities and the
//! Poisson statistics of a coherently driven mode.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{
    femtofarad_to_farad, ghz_to_angular, mhz_to_angular, ELEMENTARY_CHARGE, VON_KLITZING,
};

/// Lumped capacitances of the two-mode circuit (farads).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacitanceNetwork {
    pub c_p: f64,
    pub c_s: f64,
    pub c_cp: f64,
    pub c_cs: f64,
    /// Island total capacitance C_m + C_j.
    pub c_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacitanceRatios {
    pub alpha_p: f64,
    pub alpha_s: f64,
    /// Renormalized island capacitance C_N′.
    pub c_n: f64,
    /// E_N = e²/(2 C_N′).
    pub charging_energy: f64,
}

impl CapacitanceNetwork {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_p", self.c_p),
            ("c_s", self.c_s),
            ("c_cp", self.c_cp),
            ("c_cs", self.c_cs),
            ("c_sigma", self.c_sigma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("network.{name}"), "capacitance must be positive"));
            }
        }
        Ok(())
    }

    fn swapped(&self) -> Self {
        Self {
            c_p: self.c_s,
            c_s: self.c_p,
            c_cp: self.c_cs,
            c_cs: self.c_cp,
            c_sigma: self.c_sigma,
        }
    }
}

fn alpha_primary(n: &CapacitanceNetwork) -> f64 {
    n.c_cp * (n.c_cs + n.c_s)
        / (n.c_cs * (n.c_cp + n.c_sigma) + n.c_s * (n.c_cp + n.c_cs + n.c_sigma))
}

pub fn capacitance_ratios(net: &CapacitanceNetwork) -> Result<CapacitanceRatios> {
    net.validate()?;
    let alpha_p = alpha_primary(net);
    let alpha_s = alpha_primary(&net.swapped());
    let CapacitanceNetwork {
        c_p,
        c_s,
        c_cp,
        c_cs,
        c_sigma,
    } = *net;
    // island element of the inverse capacitance matrix
    let num = c_cs * (c_p + c_cp) * c_s + (c_p + c_cp) * (c_s + c_cs) * c_sigma + c_cp * (c_s + c_cs) * c_p;
    let den = (c_p + c_cp) * (c_s + c_cs);
    if !(den > 0.0) || !alpha_p.is_finite() || !alpha_s.is_finite() {
        return Err(Error::DegenerateNetwork(format!("mode capacitance product {den:e}")));
    }
    let c_n = num / den;
    if !(c_n > 0.0 && c_n.is_finite()) {
        return Err(Error::DegenerateNetwork(format!("island capacitance {c_n:e} F is not positive")));
    }
    Ok(CapacitanceRatios {
        alpha_p,
        alpha_s,
        c_n,
        charging_energy: ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (2.0 * c_n),
    })
}

/// Island capacitance in the α-weighted form. It agrees with
/// [`capacitance_ratios`] only to zeroth order in α_p, α_s and can be
/// negative for strongly coupled networks.
pub fn alpha_weighted_island_capacitance(net: &CapacitanceNetwork) -> f64 {
    let CapacitanceNetwork {
        c_p,
        c_s,
        c_cp,
        c_cs,
        c_sigma,
    } = *net;
    let alpha_p = alpha_primary(net);
    let alpha_s = alpha_primary(&net.swapped());
    let num = c_cs * (c_p + c_cp) * c_s + (c_p + c_cp) * (c_s + c_cs) * c_sigma + c_cp * (c_s + c_cs) * c_p;
    let den = -c_cs * (c_p + c_cp) * alpha_s + (c_p + c_cp) * (c_s + c_cs) - c_cp * (c_s + c_cs) * alpha_p;
    num / den
}

/// Mode capacitances (C_p, C_s) reproducing target capacitance ratios for
/// given coupling and island capacitances. α_p depends only on C_s and α_s
/// only on C_p, so the inversion is closed-form.
pub fn network_for_ratios(
    alpha_p: f64,
    alpha_s: f64,
    c_cp: f64,
    c_cs: f64,
    c_sigma: f64,
) -> Result<CapacitanceNetwork> {
    let invert = |alpha: f64, c_c_own: f64, c_c_other: f64| -> Result<f64> {
        let num = c_c_other * (c_c_own - alpha * (c_c_own + c_sigma));
        let den = alpha * (c_c_own + c_c_other + c_sigma) - c_c_own;
        let c = num / den;
        if c > 0.0 && c.is_finite() {
            Ok(c)
        } else {
            Err(Error::DegenerateNetwork(format!(
                "capacitance ratio {alpha} not reachable with the given couplings"
            )))
        }
    };
    let net = CapacitanceNetwork {
        c_p: invert(alpha_s, c_cs, c_cp)?,
        c_s: invert(alpha_p, c_cp, c_cs)?,
        c_cp,
        c_cs,
        c_sigma,
    };
    net.validate()?;
    Ok(net)
}

/// One resonator mode. Frequencies and couplings in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeConfig {
    pub bare_frequency: f64,
    /// Characteristic impedance Z (Ω).
    pub impedance: f64,
    /// Capacitance ratio α.
    pub alpha: f64,
    /// Interaction parameter, if supplied directly. Must agree with πα²Z/R_K.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub external_coupling: f64,
    pub excess_coupling: f64,
    /// Output capacitance C_g (F).
    pub output_capacitance: f64,
    /// Transmission-line impedance Z_tr (Ω).
    pub line_impedance: f64,
}

impl ModeConfig {
    /// Fundamental mode of the reference device.
    pub fn reference_primary() -> Self {
        Self {
            bare_frequency: ghz_to_angular(8.8241),
            impedance: 42.8,
            alpha: 0.7817,
            rho: None,
            external_coupling: mhz_to_angular(2.1),
            excess_coupling: mhz_to_angular(1.6),
            output_capacitance: femtofarad_to_farad(6.4),
            line_impedance: 50.0,
        }
    }

    /// Second mode of the same resonator; shares C_g and Z_tr with the
    /// fundamental. Its line coupling follows from the circuit.
    pub fn reference_supporting() -> Self {
        let mut m = Self {
            bare_frequency: ghz_to_angular(17.651),
            impedance: 42.8,
            alpha: 0.7413,
            rho: None,
            external_coupling: 0.0,
            excess_coupling: 0.0,
            output_capacitance: femtofarad_to_farad(6.4),
            line_impedance: 50.0,
        };
        m.external_coupling = crate::drive::supporting_tr_coupling(&m);
        m
    }

    /// ρ = πα²Z/R_K, or the supplied value.
    pub fn interaction(&self) -> f64 {
        self.rho.unwrap_or_else(|| rho_from_impedance(self.alpha, self.impedance))
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        let err = |f: &str, m: &str| Err(Error::config(format!("{path}.{f}"), m));
        if !(self.bare_frequency > 0.0 && self.bare_frequency.is_finite()) {
            return err("bare_frequency", "must be positive");
        }
        if !(self.impedance > 0.0) {
            return err("impedance", "must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return err("alpha", "must lie in (0, 1)");
        }
        if !(self.external_coupling >= 0.0) {
            return err("external_coupling", "must be non-negative");
        }
        if !(self.excess_coupling >= 0.0) {
            return err("excess_coupling", "must be non-negative");
        }
        if !(self.output_capacitance >= 0.0) {
            return err("output_capacitance", "must be non-negative");
        }
        if !(self.line_impedance > 0.0) {
            return err("line_impedance", "must be positive");
        }
        if let Some(rho) = self.rho {
            let derived = rho_from_impedance(self.alpha, self.impedance);
            if !(rho > 0.0) || ((rho - derived) / derived).abs() > 1e-9 {
                return err("rho", &format!("supplied {rho} disagrees with pi*alpha^2*Z/R_K = {derived}"));
            }
        }
        Ok(())
    }
}

pub fn rho_from_impedance(alpha: f64, impedance: f64) -> f64 {
    PI * alpha * alpha * impedance / VON_KLITZING
}

/// Same quantity from (ω, C) for an LC mode, using Z = 1/(ωC).
pub fn rho_from_capacitance(alpha: f64, angular_frequency: f64, capacitance: f64) -> f64 {
    PI * alpha * alpha / (angular_frequency * capacitance * VON_KLITZING)
}

/// ln |L_n^a(x)| and its sign, by forward three-term recurrence with
/// periodic rescaling.
pub fn ln_laguerre(n: usize, a: f64, x: f64) -> (f64, f64) {
    let mut prev = 1.0f64;
    if n == 0 {
        return (0.0, 1.0);
    }
    let mut cur = 1.0 + a - x;
    let mut log_scale = 0.0f64;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + a - x) * cur - (kf + a) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
        let mag = cur.abs();
        if mag > 1e150 || (mag < 1e-150 && mag > 0.0 && prev.abs() < 1e-150) {
            let s = mag.max(prev.abs());
            prev /= s;
            cur /= s;
            log_scale += s.ln();
        }
    }
    if cur == 0.0 {
        (f64::NEG_INFINITY, 0.0)
    } else {
        (cur.abs().ln() + log_scale, cur.signum())
    }
}

fn ln_factorial_ratio(lo: usize, hi: usize) -> f64 {
    // ln(hi!/lo!)
    ((lo + 1)..=hi).map(|i| (i as f64).ln()).sum()
}

/// ln |M_{mm′}|² for the displaced-oscillator transition.
pub fn ln_transition_probability(m: usize, m_prime: usize, rho: f64) -> f64 {
    let lo = m.min(m_prime);
    let hi = m.max(m_prime);
    let l = (hi - lo) as f64;
    let (ln_lag, sign) = ln_laguerre(lo, l, rho);
    if sign == 0.0 {
        return f64::NEG_INFINITY;
    }
    -rho + l * rho.ln() - ln_factorial_ratio(lo, hi) + 2.0 * ln_lag
}

/// |M_{mm′}|² = e^{−ρ} ρ^{|ℓ|} (m′!/m!)^{sgn ℓ} |L_{min(m,m′)}^{|ℓ|}(ρ)|², ℓ = m − m′.
pub fn transition_probability(m: usize, m_prime: usize, rho: f64) -> f64 {
    ln_transition_probability(m, m_prime, rho).exp()
}

fn ln_factorial(k: usize) -> f64 {
    ln_factorial_ratio(0, k)
}

/// Poisson probability e^{−n̄} n̄^k / k!.
pub fn poisson_weight(k: usize, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (-mean + k as f64 * mean.ln() - ln_factorial(k)).exp()
}

/// Contiguous range of Fock states carrying all but `tail` of the Poisson mass.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonWindow {
    pub k_lo: usize,
    pub weights: Vec<f64>,
}

impl PoissonWindow {
    pub fn k_hi(&self) -> usize {
        self.k_lo + self.weights.len() - 1
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights.iter().enumerate().map(move |(i, &w)| (self.k_lo + i, w))
    }
}

pub fn poisson_window(mean: f64, tail: f64) -> Result<PoissonWindow> {
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(Error::InvalidInput(format!("mean photon number {mean} must be non-negative")));
    }
    if mean == 0.0 {
        return Ok(PoissonWindow {
            k_lo: 0,
            weights: vec![1.0],
        });
    }
    let mode = mean.floor() as usize;
    let p_mode = poisson_weight(mode, mean);
    let mut lo = mode;
    let mut hi = mode;
    let mut p_lo = p_mode;
    let mut p_hi = p_mode;
    let mut down = Vec::new();
    let mut up = vec![p_mode];
    let mut mass = p_mode;
    while mass < 1.0 - tail {
        let next_up = p_hi * mean / (hi + 1) as f64;
        let next_down = if lo > 0 { p_lo * lo as f64 / mean } else { 0.0 };
        // ln P(mode) carries rounding error, so also stop on negligible tails
        if next_up.max(next_down) < 1e-3 * tail {
            break;
        }
        if next_up >= next_down {
            hi += 1;
            p_hi = next_up;
            up.push(next_up);
            mass += next_up;
        } else {
            lo -= 1;
            p_lo = next_down;
            down.push(next_down);
            mass += next_down;
        }
    }
    down.reverse();
    down.extend(up);
    for w in &mut down {
        *w /= mass;
    }
    Ok(PoissonWindow {
        k_lo: lo,
        weights: down,
    })
}

/// Traced photon-transfer weights W(ℓ) = Σ_k P_k |M_{k,k−ℓ}|² of a driven
/// mode, for |ℓ| ≤ `l_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferWeights {
    pub l_max: usize,
    /// Index `l + l_max`.
    pub weights: Vec<f64>,
}

impl TransferWeights {
    pub fn get(&self, l: i64) -> f64 {
        if l.unsigned_abs() as usize > self.l_max {
            0.0
        } else {
            self.weights[(l + self.l_max as i64) as usize]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let l_max = self.l_max as i64;
        self.weights.iter().enumerate().map(move |(i, &w)| (i as i64 - l_max, w))
    }

    /// 1 − Σ W, the weight outside the retained |ℓ| range (plus window tail).
    pub fn missing_mass(&self) -> f64 {
        (1.0 - self.weights.iter().sum::<f64>()).max(0.0)
    }
}

/// ln |L_n^a(x)| for n = 0..=n_max from one pass of the forward recurrence.
pub fn ln_laguerre_all(n_max: usize, a: f64, x: f64) -> Vec<f64> {
    let ln_abs = |v: f64, scale: f64| if v == 0.0 { f64::NEG_INFINITY } else { v.abs().ln() + scale };
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(0.0);
    if n_max == 0 {
        return out;
    }
    let mut prev = 1.0f64;
    let mut cur = 1.0 + a - x;
    let mut log_scale = 0.0f64;
    out.push(ln_abs(cur, 0.0));
    for k in 1..n_max {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + a - x) * cur - (kf + a) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
        let mag = cur.abs().max(prev.abs());
        if mag > 1e150 || (mag < 1e-150 && mag > 0.0) {
            prev /= mag;
            cur /= mag;
            log_scale += mag.ln();
        }
        out.push(ln_abs(cur, log_scale));
    }
    out
}

pub fn transfer_weights(window: &PoissonWindow, rho: f64, l_max: usize) -> TransferWeights {
    let mut weights = vec![0.0; 2 * l_max + 1];
    let k_hi = window.k_hi();
    let mut ln_fact = Vec::with_capacity(k_hi + l_max + 1);
    ln_fact.push(0.0f64);
    for i in 1..=k_hi + l_max {
        ln_fact.push(ln_fact[i - 1] + (i as f64).ln());
    }
    let ln_rho = rho.ln();
    for a in 0..=l_max {
        let lag = ln_laguerre_all(k_hi, a as f64, rho);
        let base = -rho + a as f64 * ln_rho;
        let mut down = 0.0;
        let mut up = 0.0;
        for (k, pk) in window.iter() {
            if pk == 0.0 {
                continue;
            }
            // ℓ = +a: k → k − a
            if k >= a {
                let n = k - a;
                down += pk * (base - (ln_fact[k] - ln_fact[n]) + 2.0 * lag[n]).exp();
            }
            // ℓ = −a: k → k + a
            if a > 0 {
                up += pk * (base - (ln_fact[k + a] - ln_fact[k]) + 2.0 * lag[k]).exp();
            }
        }
        weights[l_max + a] += down;
        if a > 0 {
            weights[l_max - a] += up;
        }
    }
    TransferWeights { l_max, weights }
}

/// Transfer weights with the smallest |ℓ| cap ≥ `min_l` whose edge weights
/// W(±cap) are below `rel_tail` of the ℓ = 0 weight.
pub fn adaptive_transfer_weights(
    mean: f64,
    rho: f64,
    min_l: usize,
    rel_tail: f64,
    poisson_tail: f64,
) -> Result<TransferWeights> {
    let window = poisson_window(mean, poisson_tail)?;
    // W(ℓ) spreads over |ℓ| ≲ 2√(n̄ρ)
    let x = 2.0 * (mean * rho).sqrt();
    let mut l_max = min_l.max((x + 4.0 * x.sqrt() + 4.0).ceil() as usize);
    loop {
        let w = transfer_weights(&window, rho, l_max);
        // 1 − ΣW is at the rounding floor, so judge by the edge weights;
        // W(ℓ) falls off faster than geometrically beyond the bulk
        let l = l_max as i64;
        let edge = w.get(l) + w.get(-l);
        if edge <= rel_tail * w.get(0) || l_max >= 400 {
            return Ok(w);
        }
        l_max += (l_max / 2).max(2);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ff(x: f64) -> f64 {
        femtofarad_to_farad(x)
    }

    #[test]
    fn single_mode_limit() {
        let net = CapacitanceNetwork {
            c_p: ff(400.0),
            c_s: ff(500.0),
            c_cp: ff(780.0),
            c_cs: ff(1e-9),
            c_sigma: ff(4.0),
        };
        let r = capacitance_ratios(&net).unwrap();
        assert!((r.alpha_p - 780.0 / 784.0).abs() < 1e-9);
        assert!((r.alpha_p - 0.99490).abs() < 1e-5);
    }

    #[test]
    fn symmetric_network() {
        let net = CapacitanceNetwork {
            c_p: ff(300.0),
            c_s: ff(300.0),
            c_cp: ff(10.0),
            c_cs: ff(10.0),
            c_sigma: ff(4.0),
        };
        let r = capacitance_ratios(&net).unwrap();
        assert_eq!(r.alpha_p, r.alpha_s);
        assert!(r.charging_energy > 0.0);
    }

    #[test]
    fn island_capacitance_from_matrix_inverse() {
        let net = CapacitanceNetwork {
            c_p: ff(300.0),
            c_s: ff(450.0),
            c_cp: ff(780.0),
            c_cs: ff(600.0),
            c_sigma: ff(4.0),
        };
        let m = nalgebra::Matrix3::new(
            net.c_p + net.c_cp, 0.0, -net.c_cp,
            0.0, net.c_s + net.c_cs, -net.c_cs,
            -net.c_cp, -net.c_cs, net.c_cp + net.c_cs + net.c_sigma,
        );
        let inv = m.try_inverse().unwrap();
        let r = capacitance_ratios(&net).unwrap();
        assert!((r.c_n * inv[(2, 2)] - 1.0).abs() < 1e-10);
        let strong = CapacitanceNetwork {
            c_s: ff(300.0),
            c_cs: ff(780.0),
            ..net
        };
        assert!(capacitance_ratios(&strong).unwrap().c_n > 0.0);
        assert!(alpha_weighted_island_capacitance(&strong) < 0.0);
    }

    #[test]
    fn weak_coupling_forms_agree() {
        let net = CapacitanceNetwork {
            c_p: ff(300.0),
            c_s: ff(450.0),
            c_cp: ff(0.01),
            c_cs: ff(0.02),
            c_sigma: ff(4.0),
        };
        let r = capacitance_ratios(&net).unwrap();
        let a = alpha_weighted_island_capacitance(&net);
        assert!((a / r.c_n - 1.0).abs() < 1e-2);
    }

    #[test]
    fn reference_ratios_by_bisection() {
        // bisection on the forward formula, independent of the closed-form inversion
        let c_c = ff(780.0);
        let c_sig = ff(4.0);
        let solve = |target: f64, f: &dyn Fn(f64) -> f64| {
            let (mut a, mut b) = (ff(1e-3), ff(1e7));
            for _ in 0..200 {
                let m = (a * b).sqrt();
                if (f(m) - target) * (f(a) - target) <= 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            (a * b).sqrt()
        };
        let alpha_p_of_cs = |cs: f64| {
            alpha_primary(&CapacitanceNetwork { c_p: ff(1.0), c_s: cs, c_cp: c_c, c_cs: c_c, c_sigma: c_sig })
        };
        let cs = solve(0.7817, &alpha_p_of_cs);
        let cp = solve(0.7413, &alpha_p_of_cs);
        let net = network_for_ratios(0.7817, 0.7413, c_c, c_c, c_sig).unwrap();
        assert!(((net.c_s - cs) / cs).abs() < 1e-9);
        assert!(((net.c_p - cp) / cp).abs() < 1e-9);
        let r = capacitance_ratios(&net).unwrap();
        assert!((r.alpha_p - 0.7817).abs() < 1e-12);
        assert!((r.alpha_s - 0.7413).abs() < 1e-12);
    }

    #[test]
    fn degenerate_network() {
        let net = CapacitanceNetwork { c_p: 0.0, c_s: 1.0, c_cp: 1.0, c_cs: 1.0, c_sigma: 1.0 };
        assert!(capacitance_ratios(&net).is_err());
    }

    #[test]
    fn reference_rho() {
        let p = ModeConfig::reference_primary();
        assert!((p.interaction() - 0.003_183).abs() < 2e-6);
        let c = 1.0 / (p.bare_frequency * p.impedance);
        let r2 = rho_from_capacitance(p.alpha, p.bare_frequency, c);
        assert!(((r2 - p.interaction()) / r2).abs() < 1e-12);
    }

    #[test]
    fn rho_disagreement_rejected() {
        let mut p = ModeConfig::reference_primary();
        p.rho = Some(p.interaction() * (1.0 + 1e-12));
        assert!(p.validate("primary").is_ok());
        p.rho = Some(p.interaction() * 1.01);
        assert!(p.validate("primary").is_err());
    }

    #[test]
    fn transition_examples() {
        let r = 0.003183;
        assert!((transition_probability(0, 0, r) - (-r).exp()).abs() < 1e-15);
        assert!((transition_probability(0, 0, r) - 0.996822).abs() < 1e-6);
        assert!((transition_probability(0, 1, r) - 3.1729e-3).abs() < 1e-7);
        let v = transition_probability(1, 1, 0.3);
        assert!((v - (-0.3f64).exp() * 0.49).abs() < 1e-14);
        assert!((v - 0.36300).abs() < 1e-5);
    }

    #[test]
    fn laguerre_against_explicit_sum() {
        // L_n^a(x) = Σ_i (-1)^i C(n+a, n-i) x^i / i!
        let binom = |n: f64, k: usize| -> f64 {
            let mut r = 1.0;
            for j in 0..k {
                r *= (n - j as f64) / (j as f64 + 1.0);
            }
            r
        };
        for &(n, a, x) in &[(5usize, 2.0f64, 0.7f64), (10, 0.0, 1.3), (7, 3.0, 4.0)] {
            let mut s = 0.0;
            let mut fact = 1.0;
            for i in 0..=n {
                if i > 0 {
                    fact *= i as f64;
                }
                s += (-1f64).powi(i as i32) * binom(n as f64 + a, n - i) * x.powi(i as i32) / fact;
            }
            let (ln, sign) = ln_laguerre(n, a, x);
            assert!(((sign * ln.exp() - s) / s).abs() < 1e-12, "{n} {a} {x}");
        }
    }

    #[test]
    fn large_indices_stay_finite() {
        let v = transition_probability(10_000, 9_990, 0.003);
        assert!(v.is_finite() && (0.0..=1.0).contains(&v));
        let v = transition_probability(1000, 1000, 0.3);
        assert!(v.is_finite() && (0.0..=1.0).contains(&v));
    }

    #[test]
    fn poisson_examples() {
        assert_eq!(poisson_weight(0, 0.0), 1.0);
        assert_eq!(poisson_weight(3, 0.0), 0.0);
        assert!((poisson_weight(2, 2.0) - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
        let w = poisson_window(1000.0, 1e-12).unwrap();
        assert!(w.mass() >= 1.0 - 1e-12);
        assert!(w.k_lo > 700 && w.k_hi() < 1300);
    }

    #[test]
    fn transfer_weights_match_elementwise_sum() {
        let window = poisson_window(40.0, 1e-13).unwrap();
        let rho = 0.05;
        let w = transfer_weights(&window, rho, 8);
        for l in -8i64..=8 {
            let mut s = 0.0;
            for (k, pk) in window.iter() {
                let t = k as i64 - l;
                if t >= 0 {
                    s += pk * transition_probability(k, t as usize, rho);
                }
            }
            assert!((w.get(l) - s).abs() <= 1e-12 * s.max(1e-300), "{l} {} {s}", w.get(l));
        }
        let lag = ln_laguerre_all(30, 3.0, 0.7);
        for (n, v) in lag.iter().enumerate() {
            assert!((v - ln_laguerre(n, 3.0, 0.7).0).abs() < 1e-12);
        }
    }
}
