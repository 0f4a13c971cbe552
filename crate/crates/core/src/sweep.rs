//! Parameter sweeps over the run configuration. Grid points run on a rayon
//! pool; rows are written in grid order with a per-row status column, and a
//! manifest records the configuration hash and tolerances.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::drive::resolve_operating_point;
use crate::environment::{calibrate_tunneling_resistance, EnvironmentModel};
use crate::error::{Error, Result};
use crate::lamb_shift::{lamb_shift, required_frequency};
use crate::matsubara::{pole_shift, quadratic_temperature_coefficient, pole_shift_zero_temperature};
use crate::reflection::{
    fit_trace, initial_guess, read_manifest, reflection, write_manifest, FitParam, FitResult, ManifestEntry,
    ReflectionTrace, ResonanceParams,
};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use crate::units::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Damping,
    Lamb,
    Landscape,
    Temperature,
    Matsubara,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Damping => "damping",
            SweepKind::Lamb => "lamb",
            SweepKind::Landscape => "landscape",
            SweepKind::Temperature => "temperature",
            SweepKind::Matsubara => "matsubara",
        }
    }

    fn needs_lamb(self) -> bool {
        matches!(self, SweepKind::Lamb | SweepKind::Landscape)
    }
}

/// Environment model for a configuration, with R_T calibrated when the
/// configuration leaves it open.
pub struct Prepared {
    pub model: EnvironmentModel,
    pub tunneling_resistance: f64,
    pub calibrated: bool,
}

pub fn prepare(cfg: &RunConfig, with_lamb: bool) -> Result<Prepared> {
    let max_bias = cfg
        .bias_volts()
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    let (r, calibrated) = match cfg.fixed_tunneling_resistance() {
        Some(r) => (r, false),
        None => (1.0, true),
    };
    let device = cfg.device(r)?;
    let max_frequency = if with_lamb {
        required_frequency(&device, cfg.model.min_ls, max_bias)
    } else {
        2.0 * device.primary.bare_frequency.max(device.supporting.bare_frequency)
    };
    let mut model = EnvironmentModel::new(device, cfg.environment_options(), max_bias, max_frequency)?;
    let mut r_t = r;
    if calibrated {
        r_t = calibrate_tunneling_resistance(&model, cfg.on_state_coupling())?;
        model = model.with_device(device.with_tunneling_resistance(r_t))?;
    }
    Ok(Prepared {
        model,
        tunneling_resistance: r_t,
        calibrated,
    })
}

/// Delimited output table; the last column is always `status`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn failed_rows(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.last().map(|s| s != "ok").unwrap_or(true))
            .count()
    }

    pub fn write(&self, path: &Path, delimiter: u8) -> Result<()> {
        let io = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
        let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_path(path).map_err(io)?;
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// Builds a row from numeric columns, or blanks plus the error text.
fn row(n_cols: usize, prefix: &[f64], body: Result<Vec<f64>>) -> Vec<String> {
    let mut out: Vec<String> = prefix.iter().map(|&x| num(x)).collect();
    match body {
        Ok(v) => {
            out.extend(v.into_iter().map(num));
            out.push("ok".into());
        }
        Err(e) => {
            out.resize(n_cols - 1, String::new());
            out.push(e.to_string());
        }
    }
    out
}

fn pool(cfg: &RunConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.output.threads)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))
}

/// SHA-256 of the configuration with the output section reset, so the
/// hash identifies the computation rather than where it was written.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.output = Default::default();
    hex::encode(Sha256::digest(c.to_toml_string().as_bytes()))
}

fn grid_points(cfg: &RunConfig) -> Vec<(f64, f64)> {
    let volts = cfg.bias_volts();
    cfg.powers_dbm()
        .into_iter()
        .flat_map(|p| volts.iter().map(move |&v| (p, v)))
        .collect()
}

/// Resonance of the primary mode at one drive power (dBm at the sample)
/// and bias (V), including all frequency shifts.
pub fn operating_resonance(prep: &Prepared, cfg: &RunConfig, power_dbm: f64, bias: f64, fano_phase: f64) -> Result<ResonanceParams> {
    let op = resolve_operating_point(&cfg.drive_plan(power_dbm), &prep.model, bias, cfg.model.self_consistent)?;
    let ls = lamb_shift(&prep.model, &op.state, &cfg.lamb_options())?;
    let p = &prep.model.device().primary;
    Ok(ResonanceParams {
        omega_p: ls.total_frequency,
        gamma_tr: p.external_coupling,
        gamma_t_plus_0: ls.coupling + p.excess_coupling,
        fano_phase,
    })
}

fn damping_table(prep: &Prepared, cfg: &RunConfig, pts: &[(f64, f64)]) -> Table {
    let header = vec![
        "power_dbm", "bias_mv", "n_s", "n_p", "gamma_t_mhz", "t_eff_mk", "n_thermal", "up_rate_mhz",
        "down_rate_mhz", "status",
    ];
    let n = header.len();
    let rows = pts
        .par_iter()
        .map(|&(p, v)| {
            let body = (|| {
                let op = resolve_operating_point(&cfg.drive_plan(p), &prep.model, v, cfg.model.self_consistent)?;
                let c = prep.model.characterize(&op.state)?;
                Ok(vec![
                    op.state.supporting_occupation,
                    op.primary_occupation,
                    angular_to_mhz(c.coupling),
                    kelvin_to_millikelvin(c.temperature),
                    c.occupation,
                    angular_to_mhz(c.up_rate),
                    angular_to_mhz(c.down_rate),
                ])
            })();
            row(n, &[p, volt_to_millivolt(v)], body)
        })
        .collect();
    Table { header, rows }
}

fn temperature_table(prep: &Prepared, cfg: &RunConfig, pts: &[(f64, f64)]) -> Table {
    let header = vec!["power_dbm", "bias_mv", "n_s", "t_eff_mk", "n_thermal", "gamma_t_mhz", "status"];
    let n = header.len();
    let rows = pts
        .par_iter()
        .map(|&(p, v)| {
            let body = (|| {
                let op = resolve_operating_point(&cfg.drive_plan(p), &prep.model, v, cfg.model.self_consistent)?;
                let c = prep.model.characterize(&op.state)?;
                Ok(vec![
                    op.state.supporting_occupation,
                    kelvin_to_millikelvin(c.temperature),
                    c.occupation,
                    angular_to_mhz(c.coupling),
                ])
            })();
            row(n, &[p, volt_to_millivolt(v)], body)
        })
        .collect();
    Table { header, rows }
}

fn lamb_table(prep: &Prepared, cfg: &RunConfig, pts: &[(f64, f64)]) -> Table {
    let header = vec![
        "power_dbm", "bias_mv", "n_s", "gamma_t_mhz", "lamb_mhz", "damping_shift_khz", "static_shift_mhz",
        "frequency_ghz", "cutoff_ghz", "quad_error_khz", "status",
    ];
    let n = header.len();
    let opts = cfg.lamb_options();
    let rows = pts
        .par_iter()
        .map(|&(p, v)| {
            let body = (|| {
                let op = resolve_operating_point(&cfg.drive_plan(p), &prep.model, v, cfg.model.self_consistent)?;
                let ls = lamb_shift(&prep.model, &op.state, &opts)?;
                Ok(vec![
                    op.state.supporting_occupation,
                    angular_to_mhz(ls.coupling),
                    angular_to_mhz(ls.dynamic_shift),
                    angular_to_hz(ls.classical_damping_shift) * 1e-3,
                    angular_to_mhz(ls.static_shift),
                    angular_to_ghz(ls.total_frequency),
                    angular_to_ghz(ls.integration_cutoff),
                    angular_to_hz(ls.estimated_quadrature_error) * 1e-3,
                ])
            })();
            row(n, &[p, volt_to_millivolt(v)], body)
        })
        .collect();
    Table { header, rows }
}

fn landscape_table(prep: &Prepared, cfg: &RunConfig, pts: &[(f64, f64)]) -> Table {
    let header = vec!["power_dbm", "bias_mv", "probe_ghz", "abs_gamma", "re_gamma", "im_gamma", "status"];
    let n = header.len();
    let probes = cfg.probe_angular();
    let per_point: Vec<Result<ResonanceParams>> = pts
        .par_iter()
        .map(|&(p, v)| operating_resonance(prep, cfg, p, v, 0.0))
        .collect();
    let gamma_0 = prep.model.device().primary.excess_coupling;
    let mut rows = Vec::with_capacity(pts.len() * probes.len());
    for (&(p, v), res) in pts.iter().zip(&per_point) {
        for &w in &probes {
            let body = match res {
                Ok(r) => {
                    let g = reflection(w, r.omega_p, r.gamma_tr, r.gamma_t_plus_0 - gamma_0, gamma_0);
                    Ok(vec![g.norm(), g.re, g.im])
                }
                Err(e) => Err(e.clone()),
            };
            rows.push(row(n, &[p, volt_to_millivolt(v), angular_to_ghz(w)], body));
        }
    }
    Table { header, rows }
}

fn matsubara_table(cfg: &RunConfig) -> Table {
    let header = vec![
        "temperature_mk", "re_shift_mhz", "im_shift_mhz", "thermal_part_khz", "leading_order_thermal_khz", "status",
    ];
    let n = header.len();
    let bath = cfg.bath();
    let zero = pole_shift_zero_temperature(&bath);
    let coef = quadratic_temperature_coefficient(&bath);
    let rows = cfg
        .matsubara_temperatures()
        .par_iter()
        .map(|&t| {
            let body = (|| {
                let z = zero.clone()?;
                let s = pole_shift(&bath.with_temperature(t))?;
                Ok(vec![
                    angular_to_mhz(s.re),
                    angular_to_mhz(s.im),
                    angular_to_hz(s.re - z.re) * 1e-3,
                    angular_to_hz(coef * t * t) * 1e-3,
                ])
            })();
            row(n, &[kelvin_to_millikelvin(t)], body)
        })
        .collect();
    Table { header, rows }
}

#[derive(Debug, Clone, Serialize)]
struct Tolerances {
    self_consistent: bool,
    lp_max: usize,
    min_ls: usize,
    truncation_tol: f64,
    pv_rel_tol: f64,
    cutoff_rel_tol: f64,
    cutoff_abs_khz: f64,
    mu_static: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Manifest {
    kind: String,
    tool_version: String,
    config_sha256: String,
    table: String,
    rows: usize,
    failed: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    tunneling_resistance_ohm: Option<f64>,
    calibrated: bool,
    tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub table: PathBuf,
    pub manifest: PathBuf,
    pub rows: usize,
    pub failed: usize,
}

/// Computes one sweep without touching the file system.
pub fn compute_sweep(cfg: &RunConfig, kind: SweepKind) -> Result<(Table, Option<Prepared>)> {
    cfg.validate()?;
    pool(cfg)?.install(|| {
        if kind == SweepKind::Matsubara {
            return Ok((matsubara_table(cfg), None));
        }
        let prep = prepare(cfg, kind.needs_lamb())?;
        let pts = grid_points(cfg);
        let table = match kind {
            SweepKind::Damping => damping_table(&prep, cfg, &pts),
            SweepKind::Temperature => temperature_table(&prep, cfg, &pts),
            SweepKind::Lamb => lamb_table(&prep, cfg, &pts),
            SweepKind::Landscape => landscape_table(&prep, cfg, &pts),
            SweepKind::Matsubara => unreachable!(),
        };
        Ok((table, Some(prep)))
    })
}

pub fn run_sweep(cfg: &RunConfig, kind: SweepKind) -> Result<SweepOutput> {
    let (table, prep) = compute_sweep(cfg, kind)?;
    let dir = &cfg.output.directory;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let name = format!("{}.{}", kind.name(), cfg.output.format.extension());
    let table_path = dir.join(&name);
    table.write(&table_path, cfg.output.format.delimiter())?;
    let m = &cfg.model;
    let manifest = Manifest {
        kind: kind.name().into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: config_hash(cfg),
        table: name,
        rows: table.rows.len(),
        failed: table.failed_rows(),
        tunneling_resistance_ohm: prep.as_ref().map(|p| p.tunneling_resistance),
        calibrated: prep.as_ref().map(|p| p.calibrated).unwrap_or(false),
        tolerances: Tolerances {
            self_consistent: m.self_consistent,
            lp_max: m.lp_max,
            min_ls: m.min_ls,
            truncation_tol: m.truncation_tol,
            pv_rel_tol: m.pv_rel_tol,
            cutoff_rel_tol: m.cutoff_rel_tol,
            cutoff_abs_khz: m.cutoff_abs_khz,
            mu_static: m.mu_static,
        },
    };
    let manifest_path = dir.join(format!("{}_manifest.toml", kind.name()));
    let text = toml::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(&manifest_path, text).map_err(|e| Error::Io(format!("{}: {e}", manifest_path.display())))?;
    Ok(SweepOutput {
        table: table_path,
        manifest: manifest_path,
        rows: table.rows.len(),
        failed: table.failed_rows(),
    })
}

/// Adds circular complex Gaussian noise of per-component σ. Each trace gets
/// its own ChaCha stream, so results do not depend on scheduling.
pub fn add_noise(t: &mut ReflectionTrace, sigma: f64, seed: u64, stream: u64) -> Result<()> {
    if sigma == 0.0 {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let n = Normal::new(0.0, sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
    for v in &mut t.values {
        *v += Complex64::new(n.sample(&mut rng), n.sample(&mut rng));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOutput {
    pub manifest: PathBuf,
    pub truth: PathBuf,
    pub traces: usize,
    pub failed: usize,
}

/// Writes one trace per (power, bias) grid point from the model-resolved
/// resonance, a batch manifest and a table of the true parameters.
pub fn synthesize_traces(cfg: &RunConfig) -> Result<SynthesisOutput> {
    cfg.validate()?;
    let s = &cfg.synthesis;
    let pts = grid_points(cfg);
    let resolved: Vec<Result<ResonanceParams>> = pool(cfg)?.install(|| {
        let prep = prepare(cfg, true)?;
        Ok::<_, Error>(
            pts.par_iter()
                .map(|&(p, v)| operating_resonance(&prep, cfg, p, v, s.fano_phase))
                .collect(),
        )
    })?;
    let dir = &cfg.output.directory;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut entries = Vec::new();
    let header = vec![
        "file", "V_mV", "P_s_dBm", "f_p_ghz", "gamma_tr_mhz", "gamma_t0_mhz", "fano_phase", "status",
    ];
    let mut truth_rows = Vec::new();
    for (i, (&(p, v), res)) in pts.iter().zip(&resolved).enumerate() {
        let file = format!("trace_{i:04}.csv");
        let v_mv = volt_to_millivolt(v);
        match res {
            Ok(r) => {
                let mut t = ReflectionTrace::synthesize(r, s.span_linewidths * r.total_coupling(), s.points);
                t.bias_mv = Some(v_mv);
                t.power_dbm = Some(p);
                add_noise(&mut t, s.noise_sigma, s.seed.unwrap_or(0), i as u64)?;
                t.write_csv(&dir.join(&file))?;
                entries.push(ManifestEntry {
                    file: file.clone(),
                    v_mv,
                    p_s_dbm: p,
                });
                truth_rows.push(vec![
                    file,
                    num(v_mv),
                    num(p),
                    num(angular_to_ghz(r.omega_p)),
                    num(angular_to_mhz(r.gamma_tr)),
                    num(angular_to_mhz(r.gamma_t_plus_0)),
                    num(r.fano_phase),
                    "ok".into(),
                ]);
            }
            Err(e) => {
                let mut row = vec![String::new(), num(v_mv), num(p)];
                row.resize(header.len() - 1, String::new());
                row.push(e.to_string());
                truth_rows.push(row);
            }
        }
    }
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, &entries)?;
    let truth = dir.join("truth.csv");
    let failed = truth_rows.iter().filter(|r| r.last().unwrap() != "ok").count();
    Table {
        header,
        rows: truth_rows,
    }
    .write(&truth, b',')?;
    Ok(SynthesisOutput {
        manifest,
        truth,
        traces: entries.len(),
        failed,
    })
}

/// Fits every trace listed in a manifest (paths relative to the manifest).
pub fn fit_manifest(manifest: &Path) -> Result<Vec<(ManifestEntry, Result<FitResult>)>> {
    let entries = read_manifest(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    Ok(entries
        .into_par_iter()
        .map(|e| {
            let r = ReflectionTrace::read_csv(&base.join(&e.file)).and_then(|t| fit_trace(&t, &initial_guess(&t)?));
            (e, r)
        })
        .collect())
}

pub fn fit_table(results: &[(ManifestEntry, Result<FitResult>)]) -> Table {
    let mut header = vec!["file", "V_mV", "P_s_dBm", "f_p_ghz", "gamma_tr_mhz", "gamma_t0_mhz", "fano_phase", "rms"];
    header.extend([
        "f_p_lo_ghz", "f_p_hi_ghz", "gamma_tr_lo_mhz", "gamma_tr_hi_mhz", "gamma_t0_lo_mhz", "gamma_t0_hi_mhz",
        "fano_phase_lo", "fano_phase_hi", "status",
    ]);
    let scale = |p: FitParam, x: f64| match p {
        FitParam::Frequency => angular_to_ghz(x),
        FitParam::ExternalCoupling | FitParam::InternalCoupling => angular_to_mhz(x),
        FitParam::FanoPhase => x,
    };
    let rows = results
        .iter()
        .map(|(e, r)| {
            let mut out = vec![e.file.clone(), num(e.v_mv), num(e.p_s_dbm)];
            match r {
                Ok(f) => {
                    for p in FitParam::ALL {
                        out.push(num(scale(p, f.params.get(p))));
                    }
                    out.push(num(f.rms_error));
                    for p in FitParam::ALL {
                        match f.interval(p) {
                            Some(ci) => out.extend([num(scale(p, ci.lo)), num(scale(p, ci.hi))]),
                            None => out.extend([String::new(), String::new()]),
                        }
                    }
                    out.push("ok".into());
                }
                Err(err) => {
                    out.resize(header.len() - 1, String::new());
                    out.push(err.to_string());
                }
            }
            out
        })
        .collect();
    Table { header, rows }
}
