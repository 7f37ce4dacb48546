//! Model parameterization: piecewise-linear baselines, sum-of-exponentials
//! kernels, event logs and the quantities derived from them.
//!
//! Kernel parameters are indexed per `(target, source, exponential)`. The
//! intensity of `target` is
//!
//! ```text
//! λ_target(t) = μ_target(t) + Σ_source Σ_i α[target][source][i] Σ_{t_k < t} exp(-(t - t_k) / τ[target][source][i])
//! ```
//!
//! where the inner sum runs over events of the *source* stream. Excitation is
//! read as cross-excitation against each source stream, which is the standard
//! multivariate parameterization.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};

/// Tolerance used when classifying the spectral radius against 1.
pub const CRITICALITY_TOLERANCE: f64 = 1e-9;

/// Slack allowed when matching a query time or knot against the horizon.
const HORIZON_SLACK: f64 = 1e-9;

/// Sum-of-exponentials kernel amplitudes (1/s²) and timescales (s).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    dim: usize,
    exps: usize,
    alpha: Vec<f64>,
    tau: Vec<f64>,
}

impl KernelParams {
    /// Builds a kernel from flat arrays laid out as `(target * dim + source) * exps + i`.
    pub fn new(dim: usize, exps: usize, alpha: Vec<f64>, tau: Vec<f64>) -> Result<Self> {
        if dim == 0 || exps == 0 {
            return Err(HawkesError::invalid("kernel needs R >= 1 and M >= 1"));
        }
        let len = dim * dim * exps;
        if alpha.len() != len || tau.len() != len {
            return Err(HawkesError::invalid(format!(
                "kernel arrays must have R*R*M = {len} entries (got alpha {}, tau {})",
                alpha.len(),
                tau.len()
            )));
        }
        if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(HawkesError::invalid(format!("alpha must be finite and >= 0, got {a}")));
        }
        if let Some(t) = tau.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(HawkesError::invalid(format!("tau must be finite and > 0, got {t}")));
        }
        Ok(Self { dim, exps, alpha, tau })
    }

    /// Builds a kernel from nested `[target][source][i]` arrays.
    pub fn from_nested(alpha: &[Vec<Vec<f64>>], tau: &[Vec<Vec<f64>>]) -> Result<Self> {
        let dim = alpha.len();
        let exps = alpha.first().and_then(|row| row.first()).map_or(0, Vec::len);
        let mut flat_alpha = Vec::with_capacity(dim * dim * exps);
        let mut flat_tau = Vec::with_capacity(dim * dim * exps);
        if tau.len() != dim {
            return Err(HawkesError::invalid("alpha and tau must have the same shape"));
        }
        for (a_row, t_row) in alpha.iter().zip(tau) {
            if a_row.len() != dim || t_row.len() != dim {
                return Err(HawkesError::invalid("kernel arrays must be R x R x M"));
            }
            for (a, t) in a_row.iter().zip(t_row) {
                if a.len() != exps || t.len() != exps {
                    return Err(HawkesError::invalid("kernel arrays must be R x R x M"));
                }
                flat_alpha.extend_from_slice(a);
                flat_tau.extend_from_slice(t);
            }
        }
        Self::new(dim, exps, flat_alpha, flat_tau)
    }

    /// Kernel with no excitation at all; every timescale set to `tau`.
    pub fn zeros(dim: usize, exps: usize, tau: f64) -> Result<Self> {
        Self::new(dim, exps, vec![0.0; dim * dim * exps], vec![tau; dim * dim * exps])
    }

    /// Number of event types R.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of exponentials per pair M.
    pub fn exps(&self) -> usize {
        self.exps
    }

    #[inline]
    pub fn index(&self, target: usize, source: usize, i: usize) -> usize {
        (target * self.dim + source) * self.exps + i
    }

    #[inline]
    pub fn alpha(&self, target: usize, source: usize, i: usize) -> f64 {
        self.alpha[self.index(target, source, i)]
    }

    #[inline]
    pub fn tau(&self, target: usize, source: usize, i: usize) -> f64 {
        self.tau[self.index(target, source, i)]
    }

    pub fn alpha_flat(&self) -> &[f64] {
        &self.alpha
    }

    pub fn tau_flat(&self) -> &[f64] {
        &self.tau
    }

    /// Amplitudes of all exponentials feeding `target`, laid out `source * M + i`.
    pub fn target_alpha(&self, target: usize) -> &[f64] {
        let w = self.dim * self.exps;
        &self.alpha[target * w..(target + 1) * w]
    }

    /// Timescales of all exponentials feeding `target`, laid out `source * M + i`.
    pub fn target_tau(&self, target: usize) -> &[f64] {
        let w = self.dim * self.exps;
        &self.tau[target * w..(target + 1) * w]
    }

    pub fn nested_alpha(&self) -> Vec<Vec<Vec<f64>>> {
        self.nested(&self.alpha)
    }

    pub fn nested_tau(&self) -> Vec<Vec<Vec<f64>>> {
        self.nested(&self.tau)
    }

    fn nested(&self, flat: &[f64]) -> Vec<Vec<Vec<f64>>> {
        flat.chunks(self.dim * self.exps)
            .map(|row| row.chunks(self.exps).map(<[f64]>::to_vec).collect())
            .collect()
    }

    /// Branching matrix `n[target][source] = Σ_i α τ`.
    pub fn branching_ratio(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |target, source| {
            (0..self.exps)
                .map(|i| self.alpha(target, source, i) * self.tau(target, source, i))
                .sum()
        })
    }

    /// Total half-life `Σ_i τ_i ln 2` of the `(target, source)` kernel.
    pub fn half_life(&self, target: usize, source: usize) -> f64 {
        (0..self.exps)
            .map(|i| self.tau(target, source, i))
            .sum::<f64>()
            * std::f64::consts::LN_2
    }

    pub fn half_life_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |t, s| self.half_life(t, s))
    }

    /// Largest eigenvalue magnitude of the branching matrix.
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.branching_ratio())
    }

    pub fn stability_flag(&self) -> Stability {
        Stability::classify(self.spectral_radius())
    }
}

pub fn spectral_radius(matrix: &DMatrix<f64>) -> f64 {
    if matrix.nrows() == 1 {
        return matrix[(0, 0)].abs();
    }
    matrix
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Subcritical,
    Critical,
    Supercritical,
}

impl Stability {
    pub fn classify(radius: f64) -> Self {
        if (radius - 1.0).abs() <= CRITICALITY_TOLERANCE {
            Self::Critical
        } else if radius < 1.0 {
            Self::Subcritical
        } else {
            Self::Supercritical
        }
    }
}

/// Baseline intensity given by linear interpolation between knot values.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearBaseline {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinearBaseline {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(HawkesError::invalid("baseline needs at least two knots"));
        }
        if knots.len() != values.len() {
            return Err(HawkesError::invalid("knots and values must have equal length"));
        }
        if knots[0] != 0.0 {
            return Err(HawkesError::invalid("first knot must be 0"));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) || !knots.iter().all(|k| k.is_finite()) {
            return Err(HawkesError::invalid("knots must be finite and strictly increasing"));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(HawkesError::invalid(format!("baseline values must be >= 0, got {v}")));
        }
        Ok(Self { knots, values })
    }

    pub fn constant(rate: f64, horizon: f64) -> Result<Self> {
        Self::new(vec![0.0, horizon], vec![rate, rate])
    }

    /// `values.len()` equally spaced knots over `[0, horizon]`.
    pub fn uniform(horizon: f64, values: Vec<f64>) -> Result<Self> {
        let knots = uniform_knots(horizon, values.len())?;
        Self::new(knots, values)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        *self.knots.last().expect("at least two knots")
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        let horizon = self.horizon();
        if !(t >= 0.0 && t <= horizon + HORIZON_SLACK) {
            return Err(HawkesError::domain(format!("t = {t} outside [0, {horizon}]")));
        }
        Ok(t.min(horizon))
    }

    /// Index `k` of the segment `[knots[k], knots[k + 1]]` containing `t`.
    #[inline]
    fn segment(&self, t: f64) -> usize {
        let k = self.knots.partition_point(|&x| x <= t);
        k.saturating_sub(1).min(self.knots.len() - 2)
    }

    #[inline]
    fn interpolate(&self, k: usize, t: f64) -> f64 {
        let (x0, x1) = (self.knots[k], self.knots[k + 1]);
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        y0 + (y1 - y0) * (t - x0) / (x1 - x0)
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        let t = self.check_time(t)?;
        Ok(self.value_unchecked(t))
    }

    /// Interpolated value for `t` already known to lie in `[0, T]`.
    #[inline]
    pub fn value_unchecked(&self, t: f64) -> f64 {
        self.interpolate(self.segment(t), t)
    }

    /// Expected count `∫_{t0}^{t1} μ(t) dt` as a sum of trapezoids.
    pub fn integral(&self, t0: f64, t1: f64) -> Result<f64> {
        let t0 = self.check_time(t0)?;
        let t1 = self.check_time(t1)?;
        if t1 < t0 {
            return Err(HawkesError::domain(format!("reversed bounds [{t0}, {t1}]")));
        }
        Ok(self.integral_unchecked(t0, t1))
    }

    pub fn integral_unchecked(&self, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return 0.0;
        }
        let k0 = self.segment(t0);
        let k1 = self.segment(t1);
        if k0 == k1 {
            return 0.5 * (t1 - t0) * (self.interpolate(k0, t0) + self.interpolate(k0, t1));
        }
        let mut total = 0.5 * (self.knots[k0 + 1] - t0) * (self.interpolate(k0, t0) + self.values[k0 + 1]);
        for k in k0 + 1..k1 {
            total += 0.5 * (self.knots[k + 1] - self.knots[k]) * (self.values[k] + self.values[k + 1]);
        }
        total + 0.5 * (t1 - self.knots[k1]) * (self.values[k1] + self.interpolate(k1, t1))
    }

    /// Time-averaged intensity over the whole horizon.
    pub fn mean(&self) -> f64 {
        self.integral_unchecked(0.0, self.horizon()) / self.horizon()
    }

    /// Maximum of μ over `[t, T]`.
    pub fn max_from(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.horizon());
        let k = self.segment(t);
        self.values[k + 1..]
            .iter()
            .copied()
            .fold(self.interpolate(k, t), f64::max)
    }
}

pub fn uniform_knots(horizon: f64, count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(HawkesError::invalid("baseline needs at least two knots"));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(HawkesError::invalid(format!("horizon must be > 0, got {horizon}")));
    }
    let step = horizon / (count - 1) as f64;
    let mut knots: Vec<f64> = (0..count).map(|k| k as f64 * step).collect();
    knots[count - 1] = horizon;
    Ok(knots)
}

/// Baselines for every event type together with the excitation kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct HawkesModel {
    baselines: Vec<PiecewiseLinearBaseline>,
    kernel: KernelParams,
    horizon: f64,
}

impl HawkesModel {
    /// All baselines must share the same knot grid, ending at the horizon.
    pub fn new(baselines: Vec<PiecewiseLinearBaseline>, kernel: KernelParams) -> Result<Self> {
        if baselines.len() != kernel.dim() {
            return Err(HawkesError::invalid(format!(
                "expected {} baselines, got {}",
                kernel.dim(),
                baselines.len()
            )));
        }
        let knots = baselines[0].knots();
        if baselines.iter().any(|b| b.knots() != knots) {
            return Err(HawkesError::invalid("all baselines must share one knot grid"));
        }
        let horizon = baselines[0].horizon();
        Ok(Self { baselines, kernel, horizon })
    }

    /// Constant-baseline model.
    pub fn with_constant_baseline(rates: &[f64], kernel: KernelParams, horizon: f64) -> Result<Self> {
        let baselines = rates
            .iter()
            .map(|&r| PiecewiseLinearBaseline::constant(r, horizon))
            .collect::<Result<Vec<_>>>()?;
        Self::new(baselines, kernel)
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn exps(&self) -> usize {
        self.kernel.exps()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn baselines(&self) -> &[PiecewiseLinearBaseline] {
        &self.baselines
    }

    pub fn baseline(&self, target: usize) -> &PiecewiseLinearBaseline {
        &self.baselines[target]
    }

    pub fn knots(&self) -> &[f64] {
        self.baselines[0].knots()
    }

    pub fn branching_ratio(&self) -> DMatrix<f64> {
        self.kernel.branching_ratio()
    }

    pub fn stability_flag(&self) -> Stability {
        self.kernel.stability_flag()
    }

    pub(crate) fn check_log(&self, log: &EventLog) -> Result<()> {
        if log.dim() != self.dim() {
            return Err(HawkesError::domain(format!(
                "log has {} types, model has {}",
                log.dim(),
                self.dim()
            )));
        }
        if (log.horizon() - self.horizon).abs() > HORIZON_SLACK * self.horizon.max(1.0) {
            return Err(HawkesError::domain(format!(
                "log horizon {} differs from model horizon {}",
                log.horizon(),
                self.horizon
            )));
        }
        Ok(())
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            r: self.dim(),
            m: self.exps(),
            t: self.horizon,
            knots: self.knots().to_vec(),
            baseline_values: self.baselines.iter().map(|b| b.values().to_vec()).collect(),
            alpha: self.kernel.nested_alpha(),
            tau: self.kernel.nested_tau(),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        let kernel = KernelParams::from_nested(&doc.alpha, &doc.tau)?;
        if kernel.dim() != doc.r || kernel.exps() != doc.m {
            return Err(HawkesError::invalid("R/M fields disagree with kernel arrays"));
        }
        if doc.knots.last().copied() != Some(doc.t) {
            return Err(HawkesError::invalid("last knot must equal T"));
        }
        let baselines = doc
            .baseline_values
            .iter()
            .map(|v| PiecewiseLinearBaseline::new(doc.knots.clone(), v.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(baselines, kernel)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(text)?)
    }
}

/// JSON layout of a [`HawkesModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    #[serde(rename = "R")]
    pub r: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "T")]
    pub t: f64,
    pub knots: Vec<f64>,
    pub baseline_values: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<Vec<f64>>>,
    pub tau: Vec<Vec<Vec<f64>>>,
}

/// Per-type event timestamps over `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    events: Vec<Vec<f64>>,
    horizon: f64,
    labels: Vec<String>,
}

impl EventLog {
    pub fn new(events: Vec<Vec<f64>>, horizon: f64) -> Result<Self> {
        let labels = default_labels(events.len());
        Self::with_labels(events, horizon, labels)
    }

    pub fn with_labels(events: Vec<Vec<f64>>, horizon: f64, labels: Vec<String>) -> Result<Self> {
        if events.is_empty() {
            return Err(HawkesError::invalid("event log needs at least one type"));
        }
        if labels.len() != events.len() {
            return Err(HawkesError::invalid("one label per event type required"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(HawkesError::invalid(format!("horizon must be > 0, got {horizon}")));
        }
        for (r, seq) in events.iter().enumerate() {
            if seq.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(HawkesError::invalid(format!("type {} timestamps not strictly increasing", r + 1)));
            }
            if let Some(t) = seq.iter().find(|t| !(**t >= 0.0 && **t <= horizon)) {
                return Err(HawkesError::invalid(format!("type {} timestamp {t} outside [0, {horizon}]", r + 1)));
            }
        }
        Ok(Self { events, horizon, labels })
    }

    pub fn empty(dim: usize, horizon: f64) -> Result<Self> {
        Self::new(vec![Vec::new(); dim], horizon)
    }

    pub fn dim(&self) -> usize {
        self.events.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn events(&self, r: usize) -> &[f64] {
        &self.events[r]
    }

    pub fn all_events(&self) -> &[Vec<f64>] {
        &self.events
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> Vec<usize> {
        self.events.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.events.iter().map(Vec::len).sum()
    }

    /// Keeps only the first `dim` types.
    pub fn truncate_types(&self, dim: usize) -> Result<Self> {
        let dim = dim.min(self.dim());
        Self::with_labels(self.events[..dim].to_vec(), self.horizon, self.labels[..dim].to_vec())
    }

    /// Rounds timestamps to the microsecond grid used by the CSV format,
    /// resolving collisions with the cumulative +1 µs rule. Events pushed past
    /// the horizon are dropped. Returns the new log with the number of
    /// perturbed and dropped events.
    pub fn quantized(&self) -> Result<(Self, usize, usize)> {
        let mut perturbed = 0;
        let mut dropped = 0;
        let mut events = Vec::with_capacity(self.dim());
        for seq in &self.events {
            let mut micros: Vec<i64> = Vec::with_capacity(seq.len());
            for &t in seq {
                let mut m = (t * 1e6).round() as i64;
                if let Some(&last) = micros.last() {
                    if m <= last {
                        m = last + 1;
                        perturbed += 1;
                    }
                }
                micros.push(m);
            }
            let limit = (self.horizon * 1e6).floor() as i64;
            let before = micros.len();
            micros.retain(|&m| m <= limit);
            dropped += before - micros.len();
            events.push(micros.into_iter().map(|m| m as f64 / 1e6).collect());
        }
        Ok((Self::with_labels(events, self.horizon, self.labels.clone())?, perturbed, dropped))
    }

    /// Writes `type_index,timestamp_sec` rows (1-based types, 6 decimals),
    /// ordered by type then time.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["type_index", "timestamp_sec"])?;
        for (r, seq) in self.events.iter().enumerate() {
            for t in seq {
                w.write_record([(r + 1).to_string(), format!("{t:.6}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, dim: usize, horizon: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().map(str::trim).collect::<Vec<_>>() != ["type_index", "timestamp_sec"] {
            return Err(HawkesError::Parse(format!("unexpected event log header {headers:?}")));
        }
        let mut events = vec![Vec::new(); dim];
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let bad = |what: &str| HawkesError::Parse(format!("row {}: bad {what}", line + 2));
            let r: usize = record.get(0).and_then(|s| s.trim().parse().ok()).ok_or_else(|| bad("type_index"))?;
            let t: f64 = record.get(1).and_then(|s| s.trim().parse().ok()).ok_or_else(|| bad("timestamp"))?;
            if r == 0 || r > dim {
                return Err(bad("type_index"));
            }
            events[r - 1].push(t);
        }
        for seq in &mut events {
            seq.sort_by(f64::total_cmp);
        }
        Self::new(events, horizon)
    }
}

fn default_labels(dim: usize) -> Vec<String> {
    (1..=dim).map(|r| format!("type_{r}")).collect()
}

/// Conditional intensity of `target` at `t`, counting only events strictly before `t`.
pub fn intensity_at(model: &HawkesModel, log: &EventLog, target: usize, t: f64) -> Result<f64> {
    model.check_log(log)?;
    if target >= model.dim() {
        return Err(HawkesError::domain(format!("target {target} out of range")));
    }
    let mut lambda = model.baseline(target).value(t)?;
    let kernel = model.kernel();
    for source in 0..model.dim() {
        let events = log.events(source);
        let before = &events[..events.partition_point(|&s| s < t)];
        for i in 0..kernel.exps() {
            let alpha = kernel.alpha(target, source, i);
            if alpha == 0.0 {
                continue;
            }
            let tau = kernel.tau(target, source, i);
            let sum: f64 = before.iter().map(|&s| (-(t - s) / tau).exp()).sum();
            lambda += alpha * sum;
        }
    }
    Ok(lambda)
}
