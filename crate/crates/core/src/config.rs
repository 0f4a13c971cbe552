//! Run configuration in laboratory units (GHz, MHz, mV, dBm, mK, µeV, fF),
//! read from TOML. Every field has a default taken from the reference
//! device, so an empty file is a valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::drive::DrivePlan;
use crate::environment::{Device, EnvironmentOptions};
use crate::error::{Error, Result};
use crate::lamb_shift::{LambShiftOptions, PvOptions};
use crate::matrix_elements::{capacitance_ratios, CapacitanceNetwork, ModeConfig};
use crate::matsubara::FermiBathConfig;
use crate::tunneling::JunctionConfig;
use crate::units::*;

/// Either an explicit list or `{ start, stop, points }` (inclusive, linear).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, points: usize },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.clone(),
            Grid::Range { start, stop, points } => match *points {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..n)
                    .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
                    .collect(),
            },
        }
    }

    fn check(&self, path: &str) -> Result<Vec<f64>> {
        let v = self.values();
        if v.is_empty() {
            return Err(Error::config(path, "grid is empty"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::config(path, "grid values must be finite"));
        }
        if v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config(path, "grid must be strictly ascending"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JunctionSection {
    pub gap_uev: f64,
    pub dynes: f64,
    /// Absent: calibrated so the on-state coupling equals `on_state_coupling_mhz`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tunneling_resistance_kohm: Option<f64>,
    pub on_state_coupling_mhz: f64,
    pub electron_temperature_mk: f64,
    pub charging_energy_uev: f64,
}

impl Default for JunctionSection {
    fn default() -> Self {
        Self {
            gap_uev: 208.0,
            dynes: 4e-4,
            tunneling_resistance_kohm: None,
            on_state_coupling_mhz: 10.0,
            electron_temperature_mk: 90.0,
            charging_energy_uev: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSection {
    pub frequency_ghz: f64,
    pub impedance_ohm: f64,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// Absent: derived from the output capacitance and line impedance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_coupling_mhz: Option<f64>,
    pub excess_coupling_mhz: f64,
    pub output_capacitance_ff: f64,
    pub line_impedance_ohm: f64,
}

/// Rounds to 12 significant digits so converted defaults print cleanly.
fn tidy(x: f64) -> f64 {
    format!("{x:.11e}").parse().unwrap_or(x)
}

impl ModeSection {
    fn from_mode(m: &ModeConfig, explicit_external: bool) -> Self {
        Self {
            frequency_ghz: tidy(angular_to_ghz(m.bare_frequency)),
            impedance_ohm: m.impedance,
            alpha: m.alpha,
            rho: m.rho,
            external_coupling_mhz: explicit_external.then(|| tidy(angular_to_mhz(m.external_coupling))),
            excess_coupling_mhz: tidy(angular_to_mhz(m.excess_coupling)),
            output_capacitance_ff: tidy(m.output_capacitance * 1e15),
            line_impedance_ohm: m.line_impedance,
        }
    }

    fn to_mode(&self) -> ModeConfig {
        let mut m = ModeConfig {
            bare_frequency: ghz_to_angular(self.frequency_ghz),
            impedance: self.impedance_ohm,
            alpha: self.alpha,
            rho: self.rho,
            external_coupling: 0.0,
            excess_coupling: mhz_to_angular(self.excess_coupling_mhz),
            output_capacitance: femtofarad_to_farad(self.output_capacitance_ff),
            line_impedance: self.line_impedance_ohm,
        };
        m.external_coupling = match self.external_coupling_mhz {
            Some(g) => mhz_to_angular(g),
            None => crate::drive::supporting_tr_coupling(&m),
        };
        m
    }
}

fn primary_default() -> ModeSection {
    ModeSection::from_mode(&ModeConfig::reference_primary(), true)
}

fn supporting_default() -> ModeSection {
    ModeSection::from_mode(&ModeConfig::reference_supporting(), false)
}

/// Optional lumped network; when given it overrides both α and E_N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub c_p_ff: f64,
    pub c_s_ff: f64,
    pub c_cp_ff: f64,
    pub c_cs_ff: f64,
    pub c_sigma_ff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    /// Primary probe power at the sample input.
    pub primary_power_dbm: f64,
    pub supporting_detuning_mhz: f64,
    /// Supporting power used when a sweep has no power axis.
    pub supporting_power_dbm: f64,
}

impl Default for DriveSection {
    fn default() -> Self {
        let p = DrivePlan::default();
        Self {
            primary_power_dbm: p.primary_power_dbm + p.primary_attenuation_db,
            supporting_detuning_mhz: 0.0,
            supporting_power_dbm: p.sample_power_dbm(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub bias_mv: Grid,
    /// Supporting-tone power at the sample input, dBm.
    pub power: Grid,
    pub probe_ghz: Grid,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            bias_mv: Grid::Range {
                start: 0.0,
                stop: 0.25,
                points: 51,
            },
            power: Grid::List(vec![-100.0, -84.4]),
            probe_ghz: Grid::Range {
                start: 8.79,
                stop: 8.86,
                points: 141,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub self_consistent: bool,
    pub mu_static: f64,
    pub lp_max: usize,
    pub min_ls: usize,
    pub truncation_tol: f64,
    pub pv_rel_tol: f64,
    pub cutoff_rel_tol: f64,
    pub cutoff_abs_khz: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let e = EnvironmentOptions::default();
        let pv = PvOptions::default();
        Self {
            self_consistent: false,
            mu_static: 0.0,
            lp_max: e.lp_max,
            min_ls: e.min_ls,
            truncation_tol: e.truncation_tol,
            pv_rel_tol: pv.rel_tol,
            cutoff_rel_tol: pv.cutoff_rel_tol,
            cutoff_abs_khz: tidy(angular_to_hz(pv.cutoff_abs_tol) * 1e-3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    pub noise_sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub points: usize,
    /// Half-span of each trace in units of the total linewidth.
    pub span_linewidths: f64,
    pub fano_phase: f64,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        Self {
            noise_sigma: 0.0,
            seed: None,
            points: 401,
            span_linewidths: 4.0,
            fano_phase: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatsubaraSection {
    pub bandwidth_uev: f64,
    pub chemical_potential_uev: f64,
    pub coupling_dos_product: f64,
    /// Absent: the primary-mode frequency.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode_frequency_ghz: Option<f64>,
    pub temperature_mk: Grid,
}

impl Default for MatsubaraSection {
    fn default() -> Self {
        Self {
            bandwidth_uev: 10_000.0,
            chemical_potential_uev: 4_000.0,
            coupling_dos_product: 0.003,
            mode_frequency_ghz: None,
            temperature_mk: Grid::Range {
                start: 50.0,
                stop: 900.0,
                points: 18,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Tsv,
}

impl OutputFormat {
    pub fn delimiter(self) -> u8 {
        match self {
            OutputFormat::Csv => b',',
            OutputFormat::Tsv => b'\t',
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Tsv => "tsv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub format: OutputFormat,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("qcr-out"),
            format: OutputFormat::Csv,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub junction: JunctionSection,
    pub primary: ModeSection,
    pub supporting: ModeSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkSection>,
    pub drive: DriveSection,
    pub sweep: SweepSection,
    pub model: ModelSection,
    pub synthesis: SynthesisSection,
    pub matsubara: MatsubaraSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            junction: JunctionSection::default(),
            primary: primary_default(),
            supporting: supporting_default(),
            network: None,
            drive: DriveSection::default(),
            sweep: SweepSection::default(),
            model: ModelSection::default(),
            synthesis: SynthesisSection::default(),
            matsubara: MatsubaraSection::default(),
            output: OutputSection::default(),
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, "must be positive"))
    }
}

impl RunConfig {
    /// Parses TOML text; keys not given keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Value = toml::from_str(text).map_err(|e| Error::config("<toml>", e.to_string()))?;
        let mut base = toml::Value::try_from(RunConfig::default())
            .map_err(|e| Error::config("<defaults>", e.to_string()))?;
        merge(&mut base, user);
        let cfg: RunConfig = base
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("<toml>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let j = &self.junction;
        positive("junction.gap_uev", j.gap_uev)?;
        positive("junction.electron_temperature_mk", j.electron_temperature_mk)?;
        positive("junction.on_state_coupling_mhz", j.on_state_coupling_mhz)?;
        if let Some(r) = j.tunneling_resistance_kohm {
            positive("junction.tunneling_resistance_kohm", r)?;
        }
        if !(j.charging_energy_uev >= 0.0 && j.charging_energy_uev.is_finite()) {
            return Err(Error::config("junction.charging_energy_uev", "must be >= 0"));
        }
        if let Some(n) = &self.network {
            for (name, v) in [
                ("c_p_ff", n.c_p_ff),
                ("c_s_ff", n.c_s_ff),
                ("c_cp_ff", n.c_cp_ff),
                ("c_cs_ff", n.c_cs_ff),
                ("c_sigma_ff", n.c_sigma_ff),
            ] {
                positive(&format!("network.{name}"), v)?;
            }
        }
        self.sweep.bias_mv.check("sweep.bias_mv")?;
        self.sweep.power.check("sweep.power")?;
        let probe = self.sweep.probe_ghz.check("sweep.probe_ghz")?;
        positive("sweep.probe_ghz", probe[0])?;
        let m = &self.model;
        if !(1..=2).contains(&m.lp_max) {
            return Err(Error::config("model.lp_max", "must be 1 or 2"));
        }
        if m.min_ls == 0 {
            return Err(Error::config("model.min_ls", "must be at least 1"));
        }
        positive("model.truncation_tol", m.truncation_tol)?;
        positive("model.pv_rel_tol", m.pv_rel_tol)?;
        positive("model.cutoff_rel_tol", m.cutoff_rel_tol)?;
        positive("model.cutoff_abs_khz", m.cutoff_abs_khz)?;
        if !m.mu_static.is_finite() {
            return Err(Error::config("model.mu_static", "must be finite"));
        }
        let s = &self.synthesis;
        if !(s.noise_sigma >= 0.0 && s.noise_sigma.is_finite()) {
            return Err(Error::config("synthesis.noise_sigma", "must be >= 0"));
        }
        if s.noise_sigma > 0.0 && s.seed.is_none() {
            return Err(Error::config("synthesis.seed", "required when noise_sigma > 0"));
        }
        if s.points < 5 {
            return Err(Error::config("synthesis.points", "need at least 5 points"));
        }
        positive("synthesis.span_linewidths", s.span_linewidths)?;
        let b = &self.matsubara;
        positive("matsubara.chemical_potential_uev", b.chemical_potential_uev)?;
        if !(b.bandwidth_uev > b.chemical_potential_uev) {
            return Err(Error::config("matsubara.bandwidth_uev", "must exceed the chemical potential"));
        }
        if !(b.coupling_dos_product >= 0.0 && b.coupling_dos_product.is_finite()) {
            return Err(Error::config("matsubara.coupling_dos_product", "must be >= 0"));
        }
        if let Some(f) = b.mode_frequency_ghz {
            positive("matsubara.mode_frequency_ghz", f)?;
        }
        let t = b.temperature_mk.check("matsubara.temperature_mk")?;
        positive("matsubara.temperature_mk", t[0])?;
        self.device(1.0)?;
        Ok(())
    }

    /// Device in SI units with the given tunneling resistance (Ω).
    pub fn device(&self, tunneling_resistance: f64) -> Result<Device> {
        let j = &self.junction;
        let mut junction = JunctionConfig {
            gap: micro_ev_to_joule(j.gap_uev),
            dynes: j.dynes,
            tunneling_resistance,
            electron_temperature: millikelvin_to_kelvin(j.electron_temperature_mk),
            charging_energy: micro_ev_to_joule(j.charging_energy_uev),
        };
        let mut primary = self.primary.to_mode();
        let mut supporting = self.supporting.to_mode();
        if let Some(n) = &self.network {
            let net = CapacitanceNetwork {
                c_p: femtofarad_to_farad(n.c_p_ff),
                c_s: femtofarad_to_farad(n.c_s_ff),
                c_cp: femtofarad_to_farad(n.c_cp_ff),
                c_cs: femtofarad_to_farad(n.c_cs_ff),
                c_sigma: femtofarad_to_farad(n.c_sigma_ff),
            };
            let r = capacitance_ratios(&net).map_err(|e| Error::config("network", e.to_string()))?;
            primary.alpha = r.alpha_p;
            supporting.alpha = r.alpha_s;
            junction.charging_energy = r.charging_energy;
        }
        let d = Device {
            junction,
            primary,
            supporting,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn fixed_tunneling_resistance(&self) -> Option<f64> {
        self.junction.tunneling_resistance_kohm.map(|r| r * 1e3)
    }

    pub fn on_state_coupling(&self) -> f64 {
        mhz_to_angular(self.junction.on_state_coupling_mhz)
    }

    pub fn environment_options(&self) -> EnvironmentOptions {
        EnvironmentOptions {
            lp_max: self.model.lp_max,
            min_ls: self.model.min_ls,
            truncation_tol: self.model.truncation_tol,
            ..EnvironmentOptions::default()
        }
    }

    pub fn lamb_options(&self) -> LambShiftOptions {
        LambShiftOptions {
            pv: PvOptions {
                rel_tol: self.model.pv_rel_tol,
                cutoff_rel_tol: self.model.cutoff_rel_tol,
                cutoff_abs_tol: khz_to_angular(self.model.cutoff_abs_khz),
                ..PvOptions::default()
            },
            mu: self.model.mu_static,
            ..LambShiftOptions::default()
        }
    }

    /// Drive plan with the supporting tone at `sample_dbm` at the sample input.
    pub fn drive_plan(&self, sample_dbm: f64) -> DrivePlan {
        let base = DrivePlan::default();
        DrivePlan {
            detuning: mhz_to_angular(self.drive.supporting_detuning_mhz),
            primary_power_dbm: self.drive.primary_power_dbm - base.primary_attenuation_db,
            ..base
        }
        .with_sample_power(sample_dbm)
    }

    pub fn bias_volts(&self) -> Vec<f64> {
        self.sweep.bias_mv.values().into_iter().map(millivolt_to_volt).collect()
    }

    pub fn powers_dbm(&self) -> Vec<f64> {
        self.sweep.power.values()
    }

    pub fn probe_angular(&self) -> Vec<f64> {
        self.sweep.probe_ghz.values().into_iter().map(ghz_to_angular).collect()
    }

    pub fn bath(&self) -> FermiBathConfig {
        let b = &self.matsubara;
        let t = self.matsubara_temperatures();
        FermiBathConfig {
            bandwidth: micro_ev_to_joule(b.bandwidth_uev),
            chemical_potential: micro_ev_to_joule(b.chemical_potential_uev),
            coupling_dos_product: b.coupling_dos_product,
            temperature: t[0],
            mode_frequency: b
                .mode_frequency_ghz
                .map(ghz_to_angular)
                .unwrap_or_else(|| ghz_to_angular(self.primary.frequency_ghz)),
        }
    }

    pub fn matsubara_temperatures(&self) -> Vec<f64> {
        self.matsubara
            .temperature_mk
            .values()
            .into_iter()
            .map(millikelvin_to_kelvin)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err_path(r: Result<RunConfig>) -> String {
        match r {
            Err(Error::Config { path, .. }) => path,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn printed_defaults_parse_back() {
        let text = RunConfig::default().to_toml_string();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_sections_keep_their_own_defaults() {
        let cfg = RunConfig::from_toml_str("[supporting]\nexcess_coupling_mhz = 0.3\n").unwrap();
        assert_eq!(cfg.supporting.frequency_ghz, RunConfig::default().supporting.frequency_ghz);
        assert_eq!(cfg.supporting.excess_coupling_mhz, 0.3);
        assert_eq!(cfg.primary, RunConfig::default().primary);
    }

    #[test]
    fn reference_device_matches_table() {
        let d = RunConfig::default().device(50e3).unwrap();
        let r = Device::reference(50e3);
        assert!((d.primary.bare_frequency - r.primary.bare_frequency).abs() <= 1e-12 * r.primary.bare_frequency);
        assert!((d.supporting.external_coupling - r.supporting.external_coupling).abs() <= 1e-9 * r.supporting.external_coupling);
        assert!((d.junction.gap - r.junction.gap).abs() <= 1e-12 * r.junction.gap);
        assert_eq!(d.primary.alpha, r.primary.alpha);
    }

    #[test]
    fn empty_power_grid_names_its_field() {
        assert_eq!(err_path(RunConfig::from_toml_str("[sweep]\npower = []\n")), "sweep.power");
        let unsorted = "[sweep]\nbias_mv = [0.2, 0.1]\n";
        assert_eq!(err_path(RunConfig::from_toml_str(unsorted)), "sweep.bias_mv");
        assert_eq!(err_path(RunConfig::from_toml_str("[model]\ntruncation_tol = 0.0\n")), "model.truncation_tol");
        assert_eq!(
            err_path(RunConfig::from_toml_str("[synthesis]\nnoise_sigma = 0.01\n")),
            "synthesis.seed"
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml_str("[junction]\ngap_mev = 0.2\n").is_err());
    }

    #[test]
    fn range_grid_is_inclusive() {
        let g = Grid::Range {
            start: 0.0,
            stop: 0.25,
            points: 51,
        };
        let v = g.values();
        assert_eq!(v.len(), 51);
        assert_eq!(v[0], 0.0);
        assert!((v[50] - 0.25).abs() < 1e-15);
        let cfg = RunConfig::from_toml_str("[sweep]\nbias_mv = { start = 0.0, stop = 0.1, points = 3 }\n").unwrap();
        assert_eq!(cfg.bias_volts().len(), 3);
    }

    #[test]
    fn unit_round_trips() {
        for x in [1e-3, 0.17, 8.8241, 17.651, 250.0] {
            assert!((angular_to_ghz(ghz_to_angular(x)) - x).abs() <= 1e-12 * x);
            assert!((angular_to_mhz(mhz_to_angular(x)) - x).abs() <= 1e-12 * x);
            assert!((volt_to_millivolt(millivolt_to_volt(x)) - x).abs() <= 1e-12 * x);
            assert!((kelvin_to_millikelvin(millikelvin_to_kelvin(x)) - x).abs() <= 1e-12 * x);
            assert!((joule_to_micro_ev(micro_ev_to_joule(x)) - x).abs() <= 1e-12 * x);
        }
        for p in [-120.0, -84.4, -13.0, 0.0, 10.0] {
            assert!((watts_to_dbm(dbm_to_watts(p, 0.0)) - p).abs() <= 1e-12 * p.abs().max(1.0));
        }
        let plan = RunConfig::default().drive_plan(-84.4);
        assert!((plan.sample_power_dbm() + 84.4).abs() < 1e-12);
    }

    #[test]
    fn network_overrides_ratios() {
        let text = "[network]\nc_p_ff = 800.0\nc_s_ff = 800.0\nc_cp_ff = 10.0\nc_cs_ff = 10.0\nc_sigma_ff = 30.0\n";
        let cfg = RunConfig::from_toml_str(text).unwrap();
        let d = cfg.device(50e3).unwrap();
        assert!(d.primary.alpha > 0.0 && d.primary.alpha < 1.0);
        assert!(d.junction.charging_energy > 0.0);
    }
}
