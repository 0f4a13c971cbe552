use std::sync::OnceLock;

use num_complex::Complex64;
use proptest::prelude::*;
use qcr_core::config::RunConfig;
use qcr_core::environment::DriveState;
use qcr_core::matrix_elements::transition_probability;
use qcr_core::matsubara::{polarization, FermiBathConfig};
use qcr_core::reflection::{fano_reflection, reflection};
use qcr_core::sweep::{prepare, Prepared};
use qcr_core::tunneling::fermi_occupation;
use qcr_core::units::*;

fn reference() -> &'static Prepared {
    static P: OnceLock<Prepared> = OnceLock::new();
    P.get_or_init(|| prepare(&RunConfig::default(), false).unwrap())
}

fn bath(t: f64) -> FermiBathConfig {
    FermiBathConfig {
        bandwidth: micro_ev_to_joule(10_000.0),
        chemical_potential: micro_ev_to_joule(4_000.0),
        coupling_dos_product: 0.003,
        temperature: t,
        mode_frequency: ghz_to_angular(8.8241),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transition_probabilities_sum_to_one(m in 0usize..40, rho in 0.0f64..0.5) {
        let s: f64 = (0..400).map(|k| transition_probability(m, k, rho)).sum();
        prop_assert!((s - 1.0).abs() < 1e-10, "m={m} rho={rho} sum={s}");
    }

    #[test]
    fn forward_rate_obeys_detailed_balance(x in 0.05f64..2.0) {
        let model = &reference().model;
        let j = model.device().junction;
        let e = x * j.gap;
        let ratio = model.forward_rate(-e).unwrap() / model.forward_rate(e).unwrap();
        let expected = (-e / j.thermal_energy()).exp();
        prop_assert!((ratio / expected - 1.0).abs() < 1e-6, "x={x}");
    }

    #[test]
    fn coupling_is_even_in_bias(v in 0.0f64..0.3, ns in 0.0f64..100.0) {
        let model = &reference().model;
        let up = model.coupling_strength(&DriveState::new(millivolt_to_volt(v), ns)).unwrap();
        let down = model.coupling_strength(&DriveState::new(-millivolt_to_volt(v), ns)).unwrap();
        prop_assert!(up > 0.0);
        prop_assert!((up - down).abs() <= 1e-9 * up, "v={v} {up} {down}");
    }

    #[test]
    fn effective_temperature_is_positive(v in 0.0f64..0.3) {
        let t = reference().model.effective_temperature(&DriveState::new(millivolt_to_volt(v), 0.0)).unwrap();
        prop_assert!(t.is_finite() && t > 0.0);
    }

    #[test]
    fn passive_reflection_stays_in_unit_disk(
        detune in -20.0f64..20.0,
        g_tr in 0.1f64..20.0,
        g_t in 0.0f64..20.0,
        g_0 in 0.0f64..5.0,
    ) {
        let wp = ghz_to_angular(8.8);
        let r = reflection(wp + mhz_to_angular(detune), wp, mhz_to_angular(g_tr), mhz_to_angular(g_t), mhz_to_angular(g_0));
        prop_assert!(r.norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn fano_reflection_far_from_resonance_is_background(phase in -1.0f64..1.0) {
        let wp = ghz_to_angular(8.8);
        let r0 = Complex64::from_polar(1.0, phase);
        let r = fano_reflection(wp + mhz_to_angular(1e5), wp, mhz_to_angular(2.0), mhz_to_angular(2.0), r0);
        prop_assert!((r + r0).norm() < 1e-3);
    }

    #[test]
    fn polarization_is_even_in_frequency(n in 0i64..20, t in 0.05f64..3.0) {
        let b = bath(t);
        let w = b.bosonic_frequency(n);
        let p = polarization(w, &b).unwrap();
        let m = polarization(-w, &b).unwrap();
        prop_assert!((p - m).abs() <= 1e-12 * p.abs().max(1e-300));
    }

    #[test]
    fn fermi_occupation_is_particle_hole_symmetric(x in -30.0f64..30.0, t in 0.01f64..2.0) {
        let e = x * BOLTZMANN * t;
        let s = fermi_occupation(e, t) + fermi_occupation(-e, t);
        prop_assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unit_conversions_round_trip(x in 1e-3f64..1e3) {
        prop_assert!((joule_to_micro_ev(micro_ev_to_joule(x)) / x - 1.0).abs() < 1e-14);
        prop_assert!((angular_to_ghz(ghz_to_angular(x)) / x - 1.0).abs() < 1e-14);
        prop_assert!((angular_to_mhz(mhz_to_angular(x)) / x - 1.0).abs() < 1e-14);
        prop_assert!((kelvin_to_millikelvin(millikelvin_to_kelvin(x)) / x - 1.0).abs() < 1e-14);
        prop_assert!((volt_to_millivolt(millivolt_to_volt(x)) / x - 1.0).abs() < 1e-14);
        let dbm = -x / 10.0;
        prop_assert!((watts_to_dbm(dbm_to_watts(dbm, 0.0)) - dbm).abs() < 1e-10);
    }

    #[test]
    fn bose_occupation_obeys_detailed_balance(f in 1.0f64..20.0, t in 0.02f64..1.0) {
        let w = ghz_to_angular(f);
        let n = bose_occupation(w, t);
        let expected = (-HBAR * w / (BOLTZMANN * t)).exp();
        prop_assert!((n / (n + 1.0) / expected - 1.0).abs() < 1e-10);
    }
}
