//! Probe reflection off the primary mode: forward models, trace I/O,
//! least-squares fits with heuristic confidence intervals and background
//! removal by trace ratios.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::{levenberg_marquardt, LmOptions};

/// Reflection coefficient of a weak probe with internal losses γ_T + γ_0.
pub fn reflection(probe: f64, omega_p: f64, gamma_tr: f64, gamma_t: f64, gamma_0: f64) -> Complex64 {
    let two_delta = 2.0 * (probe - omega_p);
    let num = Complex64::new(gamma_tr - gamma_t - gamma_0, two_delta);
    let den = Complex64::new(gamma_tr + gamma_t + gamma_0, -two_delta);
    num / den
}

/// Reflection with a complex Fano factor r₀ (|r₀| = 1); r₀ = 1 gives
/// [`reflection`].
pub fn fano_reflection(probe: f64, omega_p: f64, gamma_tr: f64, gamma_t_plus_0: f64, r0: Complex64) -> Complex64 {
    let den = Complex64::new(gamma_tr + gamma_t_plus_0, -2.0 * (probe - omega_p));
    (2.0 * gamma_tr - r0 * den) / den
}

/// Parameters of the Fano-corrected resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceParams {
    pub omega_p: f64,
    pub gamma_tr: f64,
    /// γ_T + γ_0.
    pub gamma_t_plus_0: f64,
    /// arg r₀.
    pub fano_phase: f64,
}

impl ResonanceParams {
    pub fn r0(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.fano_phase)
    }

    pub fn total_coupling(&self) -> f64 {
        self.gamma_tr + self.gamma_t_plus_0
    }

    pub fn eval(&self, probe: f64) -> Complex64 {
        fano_reflection(probe, self.omega_p, self.gamma_tr, self.gamma_t_plus_0, self.r0())
    }

    pub fn get(&self, p: FitParam) -> f64 {
        match p {
            FitParam::Frequency => self.omega_p,
            FitParam::ExternalCoupling => self.gamma_tr,
            FitParam::InternalCoupling => self.gamma_t_plus_0,
            FitParam::FanoPhase => self.fano_phase,
        }
    }

    pub fn with(mut self, p: FitParam, v: f64) -> Self {
        match p {
            FitParam::Frequency => self.omega_p = v,
            FitParam::ExternalCoupling => self.gamma_tr = v,
            FitParam::InternalCoupling => self.gamma_t_plus_0 = v,
            FitParam::FanoPhase => self.fano_phase = v,
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitParam {
    Frequency,
    ExternalCoupling,
    InternalCoupling,
    FanoPhase,
}

impl FitParam {
    pub const ALL: [FitParam; 4] = [
        FitParam::Frequency,
        FitParam::ExternalCoupling,
        FitParam::InternalCoupling,
        FitParam::FanoPhase,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FitParam::Frequency => "omega_p",
            FitParam::ExternalCoupling => "gamma_tr",
            FitParam::InternalCoupling => "gamma_t_plus_0",
            FitParam::FanoPhase => "fano_phase",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionTrace {
    /// Probe frequencies (rad/s), strictly increasing.
    pub frequencies: Vec<f64>,
    pub values: Vec<Complex64>,
    pub bias_mv: Option<f64>,
    pub power_dbm: Option<f64>,
}

impl ReflectionTrace {
    pub fn new(frequencies: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        let t = Self {
            frequencies,
            values,
            bias_mv: None,
            power_dbm: None,
        };
        t.validate()?;
        Ok(t)
    }

    /// Samples `params` on `n` points spanning `half_width` around ω_p.
    pub fn synthesize(params: &ResonanceParams, half_width: f64, n: usize) -> Self {
        let frequencies: Vec<f64> = (0..n)
            .map(|i| params.omega_p - half_width + 2.0 * half_width * i as f64 / (n - 1) as f64)
            .collect();
        let values = frequencies.iter().map(|&w| params.eval(w)).collect();
        Self {
            frequencies,
            values,
            bias_mv: None,
            power_dbm: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequencies.len() != self.values.len() {
            return Err(Error::InvalidInput("frequency and value counts differ".into()));
        }
        if self.frequencies.len() < 5 {
            return Err(Error::InvalidInput("trace needs at least 5 points".into()));
        }
        if self.frequencies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("probe frequencies must be strictly increasing".into()));
        }
        if self.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidInput("trace contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn rms_deviation(&self, params: &ResonanceParams) -> f64 {
        let s: f64 = self
            .frequencies
            .iter()
            .zip(&self.values)
            .map(|(&w, &v)| (params.eval(w) - v).norm_sqr())
            .sum();
        (s / self.len() as f64).sqrt()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["freq_hz", "re", "im"])?;
        for (&f, v) in self.frequencies.iter().zip(&self.values) {
            w.write_record(&[
                format!("{:.17e}", f / (2.0 * PI)),
                format!("{:.17e}", v.re),
                format!("{:.17e}", v.im),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            freq_hz: f64,
            re: f64,
            im: f64,
        }
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let mut frequencies = Vec::new();
        let mut values = Vec::new();
        for row in r.deserialize() {
            let row: Row = row?;
            frequencies.push(row.freq_hz * 2.0 * PI);
            values.push(Complex64::new(row.re, row.im));
        }
        Self::new(frequencies, values)
    }
}

/// One line of a batch manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    #[serde(rename = "V_mV")]
    pub v_mv: f64,
    #[serde(rename = "P_s_dBm")]
    pub p_s_dbm: f64,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in entries {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

/// Signed number of turns of the sampled trace around `center`.
pub fn winding_number(values: &[Complex64], center: Complex64) -> i64 {
    let mut total = 0.0;
    for w in values.windows(2) {
        let a = (w[0] - center).arg();
        let b = (w[1] - center).arg();
        let mut d = b - a;
        while d > PI {
            d -= 2.0 * PI;
        }
        while d < -PI {
            d += 2.0 * PI;
        }
        total += d;
    }
    (total / (2.0 * PI)).round() as i64
}

/// 1σ interval of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ResonanceParams,
    /// RMS of |model − data| over the trace.
    pub rms_error: f64,
    pub iterations: usize,
    /// Per parameter in [`FitParam::ALL`] order; `None` when unbounded.
    pub ci: Vec<Option<Interval>>,
}

impl FitResult {
    pub fn interval(&self, p: FitParam) -> Option<Interval> {
        let i = FitParam::ALL.iter().position(|&q| q == p).unwrap();
        self.ci[i]
    }
}

/// Starting point read off the trace: far-detuned level gives r₀, the peak
/// of |Γ + r₀| the resonance and its half-power width the total coupling.
pub fn initial_guess(t: &ReflectionTrace) -> Result<ResonanceParams> {
    t.validate()?;
    let n = t.len();
    let far = (t.values[0] + t.values[n - 1]) * 0.5;
    if far.norm() == 0.0 {
        return Err(Error::FitFailed("cannot infer the off-resonant level".into()));
    }
    let r0 = -far / far.norm();
    let d2: Vec<f64> = t.values.iter().map(|v| (v + r0).norm_sqr()).collect();
    let (imax, &peak) = d2
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let half = 0.5 * peak;
    let mut lo = imax;
    while lo > 0 && d2[lo] > half {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < n && d2[hi] > half {
        hi += 1;
    }
    let width = (t.frequencies[hi] - t.frequencies[lo]).max(t.frequencies[1] - t.frequencies[0]);
    let gamma_tr = 0.5 * peak.sqrt() * width;
    Ok(ResonanceParams {
        omega_p: t.frequencies[imax],
        gamma_tr,
        gamma_t_plus_0: (width - gamma_tr).max(0.05 * width),
        fano_phase: r0.arg(),
    })
}

fn stacked_residuals(t: &ReflectionTrace, p: &ResonanceParams) -> DVector<f64> {
    let mut r = DVector::zeros(2 * t.len());
    for (i, (&w, &v)) in t.frequencies.iter().zip(&t.values).enumerate() {
        let d = p.eval(w) - v;
        r[2 * i] = d.re;
        r[2 * i + 1] = d.im;
    }
    r
}

/// Scaled coordinates: ω_p offset and couplings in units of `scale`.
struct Scaling {
    omega: f64,
    scale: f64,
}

impl Scaling {
    fn new(guess: &ResonanceParams) -> Self {
        Self {
            omega: guess.omega_p,
            scale: guess.total_coupling().abs().max(1e-300),
        }
    }

    fn to_x(&self, p: &ResonanceParams) -> [f64; 4] {
        [
            (p.omega_p - self.omega) / self.scale,
            p.gamma_tr / self.scale,
            p.gamma_t_plus_0 / self.scale,
            p.fano_phase,
        ]
    }

    fn from_x(&self, x: &[f64]) -> ResonanceParams {
        ResonanceParams {
            omega_p: self.omega + x[0] * self.scale,
            gamma_tr: x[1] * self.scale,
            gamma_t_plus_0: x[2] * self.scale,
            fano_phase: x[3],
        }
    }
}

fn wrap_phase(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Least-squares fit of the Fano resonance to a trace, with 1σ intervals.
pub fn fit_trace(t: &ReflectionTrace, guess: &ResonanceParams) -> Result<FitResult> {
    t.validate()?;
    let sc = Scaling::new(guess);
    let x0 = DVector::from_row_slice(&sc.to_x(guess));
    let res = levenberg_marquardt(
        |x: &DVector<f64>| stacked_residuals(t, &sc.from_x(x.as_slice())),
        x0,
        &LmOptions::default(),
    )?;
    let mut params = sc.from_x(res.x.as_slice());
    params.fano_phase = wrap_phase(params.fano_phase);
    if !(params.gamma_tr >= 0.0 && params.gamma_t_plus_0 >= 0.0) {
        return Err(Error::FitFailed(format!(
            "negative coupling (gamma_tr {:e}, gamma_t_plus_0 {:e})",
            params.gamma_tr, params.gamma_t_plus_0
        )));
    }
    let rms_error = t.rms_deviation(&params);
    let depth = dip_depth(t, &params);
    if depth < 3.0 * rms_error {
        return Err(Error::IllConditioned { depth, noise: rms_error });
    }
    let mut fit = FitResult {
        params,
        rms_error,
        iterations: res.iterations,
        ci: Vec::new(),
    };
    fit.ci = FitParam::ALL
        .iter()
        .map(|&p| confidence_interval(&fit, p).ok())
        .collect();
    Ok(fit)
}

/// Spread of |Γ| of the fitted model over the probed band.
fn dip_depth(t: &ReflectionTrace, p: &ResonanceParams) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let mut probe = |w: f64| {
        let m = p.eval(w).norm();
        lo = lo.min(m);
        hi = hi.max(m);
    };
    for &w in &t.frequencies {
        probe(w);
    }
    if p.omega_p >= t.frequencies[0] && p.omega_p <= t.frequencies[t.len() - 1] {
        probe(p.omega_p);
    }
    hi - lo
}

/// Displacement of the model's value at the fitted resonance when one
/// parameter is moved to `v`.
fn resonance_displacement(fit: &FitResult, p: FitParam, v: f64) -> f64 {
    let base = fit.params;
    let w = base.omega_p;
    (base.with(p, v).eval(w) - base.eval(w)).norm()
}

/// Range of one parameter, others held at the optimum, over which the
/// resonance point moves by at most the RMS fit error.
pub fn confidence_interval(fit: &FitResult, p: FitParam) -> Result<Interval> {
    let v0 = fit.params.get(p);
    let threshold = fit.rms_error;
    let span = match p {
        FitParam::FanoPhase => PI,
        _ => v0.abs(),
    };
    let edge = |sign: f64| -> Result<f64> {
        let mut far = v0 + sign * span;
        if matches!(p, FitParam::ExternalCoupling | FitParam::InternalCoupling) && far < 0.0 {
            far = 0.0;
        }
        if resonance_displacement(fit, p, far) <= threshold {
            return Err(Error::UnboundedInterval(p.name().to_string()));
        }
        let (mut inside, mut outside) = (v0, far);
        for _ in 0..200 {
            let mid = 0.5 * (inside + outside);
            if mid == inside || mid == outside {
                break;
            }
            if resonance_displacement(fit, p, mid) <= threshold {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        Ok(inside)
    };
    let lo = edge(-1.0)?;
    let hi = edge(1.0)?;
    Ok(Interval { lo, hi })
}

/// Γ_a/Γ_b of two Fano resonances.
pub fn ratio_model(probe: f64, a: &ResonanceParams, b: &ResonanceParams) -> Complex64 {
    a.eval(probe) / b.eval(probe)
}

/// Joint fit of both resonances to a measured ratio trace.
pub fn fit_ratio(
    freqs: &[f64],
    ratio: &[Complex64],
    guess_a: &ResonanceParams,
    guess_b: &ResonanceParams,
) -> Result<(ResonanceParams, ResonanceParams)> {
    let sa = Scaling::new(guess_a);
    let sb = Scaling::new(guess_b);
    let mut x0 = Vec::with_capacity(8);
    x0.extend_from_slice(&sa.to_x(guess_a));
    x0.extend_from_slice(&sb.to_x(guess_b));
    let residual = |x: &DVector<f64>| {
        let a = sa.from_x(&x.as_slice()[..4]);
        let b = sb.from_x(&x.as_slice()[4..]);
        let mut r = DVector::zeros(2 * freqs.len());
        for (i, (&w, &v)) in freqs.iter().zip(ratio).enumerate() {
            let d = ratio_model(w, &a, &b) - v;
            r[2 * i] = d.re;
            r[2 * i + 1] = d.im;
        }
        r
    };
    let res = levenberg_marquardt(residual, DVector::from_vec(x0), &LmOptions::default())?;
    let mut a = sa.from_x(&res.x.as_slice()[..4]);
    let mut b = sb.from_x(&res.x.as_slice()[4..]);
    a.fano_phase = wrap_phase(a.fano_phase);
    b.fano_phase = wrap_phase(b.fano_phase);
    Ok((a, b))
}

/// Background removal for a batch of (raw, off-state) trace pairs on shared
/// grids: fit each ratio, average the off-state parameters over the batch
/// and rebuild every trace as ratio × averaged off-state model.
pub fn background_subtract_batch(pairs: &[(ReflectionTrace, ReflectionTrace)]) -> Result<Vec<ReflectionTrace>> {
    let mut fits = Vec::with_capacity(pairs.len());
    for (raw, off) in pairs {
        raw.validate()?;
        off.validate()?;
        if raw.frequencies != off.frequencies {
            return Err(Error::InvalidInput("raw and off-state traces must share a frequency grid".into()));
        }
        let ratio: Vec<Complex64> = raw.values.iter().zip(&off.values).map(|(a, b)| a / b).collect();
        let gb = seed(off)?;
        let ga = seed(raw)?;
        let (_, b) = fit_ratio(&raw.frequencies, &ratio, &ga, &gb)
            .map_err(|e| Error::FitFailed(format!("ratio fit: {e}")))?;
        fits.push((ratio, b));
    }
    if fits.is_empty() {
        return Ok(Vec::new());
    }
    let n = fits.len() as f64;
    let mut avg = ResonanceParams {
        omega_p: 0.0,
        gamma_tr: 0.0,
        gamma_t_plus_0: 0.0,
        fano_phase: 0.0,
    };
    let mut phasor = Complex64::new(0.0, 0.0);
    for (_, b) in &fits {
        avg.omega_p += b.omega_p / n;
        avg.gamma_tr += b.gamma_tr / n;
        avg.gamma_t_plus_0 += b.gamma_t_plus_0 / n;
        phasor += b.r0();
    }
    avg.fano_phase = phasor.arg();
    Ok(pairs
        .iter()
        .zip(fits)
        .map(|((raw, _), (ratio, _))| ReflectionTrace {
            frequencies: raw.frequencies.clone(),
            values: raw
                .frequencies
                .iter()
                .zip(&ratio)
                .map(|(&w, r)| r * avg.eval(w))
                .collect(),
            bias_mv: raw.bias_mv,
            power_dbm: raw.power_dbm,
        })
        .collect())
}

fn seed(t: &ReflectionTrace) -> Result<ResonanceParams> {
    let g = initial_guess(t)?;
    Ok(fit_trace(t, &g).map(|f| f.params).unwrap_or(g))
}

pub fn background_subtract(raw: &ReflectionTrace, off_state: &ReflectionTrace) -> Result<ReflectionTrace> {
    Ok(background_subtract_batch(&[(raw.clone(), off_state.clone())])?.remove(0))
}
