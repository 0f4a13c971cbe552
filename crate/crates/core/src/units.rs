//! Physical constants (SI, exact 2019 definitions) and the unit conversions
//! used at external interfaces. Everything inside the crate is SI.

use std::f64::consts::PI;

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const HBAR: f64 = PLANCK / (2.0 * PI);
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// von Klitzing constant h/e².
pub const VON_KLITZING: f64 = PLANCK / (ELEMENTARY_CHARGE * ELEMENTARY_CHARGE);

pub fn micro_ev_to_joule(x: f64) -> f64 {
    x * 1e-6 * ELEMENTARY_CHARGE
}

pub fn joule_to_micro_ev(x: f64) -> f64 {
    x / (1e-6 * ELEMENTARY_CHARGE)
}

pub fn millikelvin_to_kelvin(x: f64) -> f64 {
    x * 1e-3
}

pub fn kelvin_to_millikelvin(x: f64) -> f64 {
    x * 1e3
}

pub fn millivolt_to_volt(x: f64) -> f64 {
    x * 1e-3
}

pub fn volt_to_millivolt(x: f64) -> f64 {
    x * 1e3
}

/// Frequency in GHz to angular frequency in rad/s.
pub fn ghz_to_angular(x: f64) -> f64 {
    2.0 * PI * x * 1e9
}

pub fn angular_to_ghz(x: f64) -> f64 {
    x / (2.0 * PI * 1e9)
}

pub fn mhz_to_angular(x: f64) -> f64 {
    2.0 * PI * x * 1e6
}

pub fn angular_to_mhz(x: f64) -> f64 {
    x / (2.0 * PI * 1e6)
}

pub fn khz_to_angular(x: f64) -> f64 {
    2.0 * PI * x * 1e3
}

pub fn hz_to_angular(x: f64) -> f64 {
    2.0 * PI * x
}

pub fn angular_to_hz(x: f64) -> f64 {
    x / (2.0 * PI)
}

pub fn femtofarad_to_farad(x: f64) -> f64 {
    x * 1e-15
}

/// Power in dBm after `attenuation_db` (≤ 0) to watts.
pub fn dbm_to_watts(power_dbm: f64, attenuation_db: f64) -> f64 {
    10f64.powf((power_dbm + attenuation_db - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Bose-Einstein occupation 1/(e^x - 1) with x = ħω/(k_B T).
pub fn bose_occupation(angular_frequency: f64, temperature: f64) -> f64 {
    let x = HBAR * angular_frequency / (BOLTZMANN * temperature);
    1.0 / x.exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn round_trips() {
        for &x in &[1e-3, 0.17, 8.8241, 208.0, 1e4] {
            assert!(rel(joule_to_micro_ev(micro_ev_to_joule(x)), x) <= 1e-12);
            assert!(rel(angular_to_ghz(ghz_to_angular(x)), x) <= 1e-12);
            assert!(rel(kelvin_to_millikelvin(millikelvin_to_kelvin(x)), x) <= 1e-12);
            assert!(rel(volt_to_millivolt(millivolt_to_volt(x)), x) <= 1e-12);
        }
        for &p in &[-130.0, -84.4, -20.0, 10.0] {
            assert!(rel(watts_to_dbm(dbm_to_watts(p, 0.0)), p) <= 1e-12);
        }
    }

    #[test]
    fn dbm_with_attenuation() {
        assert!(rel(dbm_to_watts(20.6, -105.0), dbm_to_watts(-84.4, 0.0)) < 1e-12);
        assert!(rel(dbm_to_watts(0.0, 0.0), 1e-3) < 1e-15);
    }

    #[test]
    fn von_klitzing_value() {
        assert!(rel(VON_KLITZING, 25_812.807_45) < 1e-9);
    }

    #[test]
    fn bose_at_ln2_is_one() {
        let w = ghz_to_angular(8.8241);
        let t = HBAR * w / (BOLTZMANN * 2f64.ln());
        assert!((bose_occupation(w, t) - 1.0).abs() < 1e-12);
    }
}
