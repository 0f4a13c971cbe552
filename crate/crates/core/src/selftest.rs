//! Analytic-oracle checks run by the `selftest` subcommand.

use crate::lamb_shift::{principal_value_shift, PvOptions};
use crate::matrix_elements::transition_probability;
use crate::matsubara::{polarization, polarization_double_sum, FermiBathConfig};
use crate::tunneling::{forward_rate, forward_rate_with, DensityOfStates, JunctionConfig, RateOptions};
use crate::units::{ghz_to_angular, micro_ev_to_joule, PLANCK};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, worst: Result<f64, String>, tol: f64) -> Check {
    match worst {
        Ok(w) => Check {
            name,
            passed: w <= tol,
            detail: format!("worst {w:.3e}, tolerance {tol:.0e}"),
        },
        Err(e) => Check {
            name,
            passed: false,
            detail: e,
        },
    }
}

/// F(E) with n_S ≡ 1 against E/[h(1 − e^{−E/k_BT})].
pub fn normal_state_closed_form() -> Check {
    let j = JunctionConfig::reference(50e3);
    let kt = j.thermal_energy();
    let worst = (|| {
        let mut worst = 0.0f64;
        for i in 0..20 {
            let e = (-5.0 + 10.0 * (i as f64 + 0.5) / 20.0) * kt;
            let f = forward_rate_with(e, &j, DensityOfStates::Normal, &RateOptions::default()).map_err(|e| e.to_string())?;
            let exact = e / (PLANCK * -(-e / kt).exp_m1());
            worst = worst.max(((f - exact) / exact).abs());
        }
        Ok(worst)
    })();
    check("normal-state closed form", worst, 1e-6)
}

/// F(−E)/F(E) = e^{−E/k_BT} at E ∈ {0.5, 1, 2}Δ.
pub fn detailed_balance() -> Check {
    let j = JunctionConfig::reference(50e3);
    let worst = (|| {
        let mut worst = 0.0f64;
        for k in [0.5, 1.0, 2.0] {
            let e = k * j.gap;
            let ratio = forward_rate(-e, &j).map_err(|e| e.to_string())? / forward_rate(e, &j).map_err(|e| e.to_string())?;
            let exact = (-e / j.thermal_energy()).exp();
            worst = worst.max(((ratio - exact) / exact).abs());
        }
        Ok(worst)
    })();
    check("detailed balance", worst, 1e-6)
}

/// Σ_{m′}|M_{mm′}|² = 1.
pub fn completeness() -> Check {
    let mut worst = 0.0f64;
    for m in [0usize, 5, 50] {
        for rho in [1e-3, 0.03, 0.3] {
            let total: f64 = (0..m + 400).map(|mp| transition_probability(m, mp, rho)).sum();
            worst = worst.max((total - 1.0).abs());
        }
    }
    check("matrix-element completeness", Ok(worst), 1e-10)
}

/// A linear coupling γ = cω has no principal-value shift beyond the cutoff term.
pub fn ohmic_null() -> Check {
    let c = 0.01;
    let omega0 = ghz_to_angular(8.8);
    let cutoff = 50.0 * omega0;
    let opts = PvOptions {
        cutoff_abs_tol: f64::INFINITY,
        ..PvOptions::default()
    };
    let bound = c * omega0 * omega0 / (std::f64::consts::PI * cutoff);
    let worst = principal_value_shift(&|w: f64| Ok(c * w), omega0, cutoff, &[], &opts)
        .map(|r| r.value.abs() / bound)
        .map_err(|e| e.to_string());
    check("ohmic principal-value null", worst, 1.0)
}

/// Closed-form polarization against the direct Matsubara double sum.
pub fn matsubara_oracle() -> Check {
    let b = FermiBathConfig {
        bandwidth: micro_ev_to_joule(10_000.0),
        chemical_potential: micro_ev_to_joule(4_000.0),
        coupling_dos_product: 0.003,
        temperature: 0.5,
        mode_frequency: ghz_to_angular(8.8241),
    };
    let worst = (|| {
        let mut worst = 0.0f64;
        for n in [0, 1, 5] {
            let c = polarization(b.bosonic_frequency(n), &b).map_err(|e| e.to_string())?;
            let o = polarization_double_sum(n, &b).map_err(|e| e.to_string())?;
            worst = worst.max(((c - o) / o).abs());
        }
        Ok(worst)
    })();
    check("Matsubara double-sum oracle", worst, 1e-4)
}

pub fn run_all() -> Vec<Check> {
    vec![
        normal_state_closed_form(),
        detailed_balance(),
        completeness(),
        ohmic_null(),
        matsubara_oracle(),
    ]
}
