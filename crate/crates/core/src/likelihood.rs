//! Per-target log-likelihood of a multivariate Hawkes process with a
//! sum-of-exponentials kernel and piecewise-linear baseline.
//!
//! For target `r` with events `t_1 < ... < t_n` on `[0, T]`:
//!
//! ```text
//! ln L_r = -∫_0^T μ_r(t) dt
//!          - Σ_s Σ_i α_{r,s,i} τ_{r,s,i} Σ_{t_k ∈ N_s} (1 - exp(-(T - t_k) / τ_{r,s,i}))
//!          + Σ_j ln[ μ_r(t_j) + Σ_s Σ_i α_{r,s,i} R_{s,i}(j) ]
//! ```
//!
//! with `R_{s,i}(j) = Σ_{t_k ∈ N_s, t_k < t_j} exp(-(t_j - t_k) / τ_{r,s,i})`
//! evaluated recursively in one pass over the target events.

use std::io::Write;

use crate::error::{HawkesError, Result};
use crate::model::{EventLog, HawkesModel, KernelParams};

/// Running values of `R_{s,i}(j)` for one target, laid out `source * M + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionState {
    pub values: Vec<f64>,
    pub last_target_time: Option<f64>,
}

impl RecursionState {
    pub fn new(dim: usize, exps: usize) -> Self {
        Self {
            values: vec![0.0; dim * exps],
            last_target_time: None,
        }
    }

    /// Moves the recursion from the previous target event to `next_t`.
    ///
    /// `windows[s]` holds the source-`s` events in `[prev_t, next_t)`, where
    /// `prev_t` is the previous target event (or 0 before the first one).
    /// For `s == target` with a previous target event the self form
    /// `R(j) = exp(-Δ/τ) (1 + R(j-1))` is used and the window is ignored.
    pub fn advance(
        &mut self,
        kernel: &KernelParams,
        target: usize,
        next_t: f64,
        windows: &[&[f64]],
    ) -> Result<()> {
        let dim = kernel.dim();
        let exps = kernel.exps();
        if windows.len() != dim {
            return Err(HawkesError::domain(format!("expected {dim} source windows, got {}", windows.len())));
        }
        let prev_t = self.last_target_time.unwrap_or(0.0);
        let ordered = match self.last_target_time {
            Some(prev) => next_t > prev,
            None => next_t >= 0.0,
        };
        if !ordered {
            return Err(HawkesError::domain(format!("target time {next_t} not after {prev_t}")));
        }
        for (source, window) in windows.iter().enumerate() {
            let self_form = source == target && self.last_target_time.is_some();
            if !self_form {
                let in_window = window.iter().all(|&t| t >= prev_t && t < next_t);
                let sorted = window.windows(2).all(|w| w[0] < w[1]);
                if !(in_window && sorted) {
                    return Err(HawkesError::domain(format!(
                        "source {source} window not ordered within [{prev_t}, {next_t})"
                    )));
                }
            }
            let taus = kernel.target_tau(target);
            for i in 0..exps {
                let tau = taus[source * exps + i];
                let slot = &mut self.values[source * exps + i];
                let decay = (-(next_t - prev_t) / tau).exp();
                *slot = if self_form {
                    decay * (1.0 + *slot)
                } else {
                    decay * *slot + window.iter().map(|&t| (-(next_t - t) / tau).exp()).sum::<f64>()
                };
            }
        }
        self.last_target_time = Some(next_t);
        Ok(())
    }
}

/// Functional form of [`RecursionState::advance`].
pub fn advance_recursion(
    state: &RecursionState,
    kernel: &KernelParams,
    target: usize,
    next_t: f64,
    windows: &[&[f64]],
) -> Result<RecursionState> {
    let mut next = state.clone();
    next.advance(kernel, target, next_t, windows)?;
    Ok(next)
}

/// Log-likelihood of `target` via the recursive evaluation.
pub fn log_likelihood(model: &HawkesModel, log: &EventLog, target: usize) -> Result<f64> {
    model.check_log(log)?;
    check_target(model, target)?;
    let problem = TargetLikelihood::new(log, target, model.knots())?;
    let kernel = model.kernel();
    problem.evaluate(
        model.baseline(target).values(),
        kernel.target_alpha(target),
        kernel.target_tau(target),
    )
}

pub fn total_log_likelihood(model: &HawkesModel, log: &EventLog) -> Result<f64> {
    (0..model.dim()).map(|r| log_likelihood(model, log, r)).sum()
}

/// Brute-force O(N²) evaluation of the same likelihood; testing oracle.
pub fn log_likelihood_direct(model: &HawkesModel, log: &EventLog, target: usize) -> Result<f64> {
    model.check_log(log)?;
    check_target(model, target)?;
    let kernel = model.kernel();
    let horizon = model.horizon();
    let baseline = model.baseline(target);
    let mut ll = -baseline.integral(0.0, horizon)?;
    for source in 0..model.dim() {
        for i in 0..kernel.exps() {
            let (alpha, tau) = (kernel.alpha(target, source, i), kernel.tau(target, source, i));
            for &tk in log.events(source) {
                ll -= alpha * tau * (1.0 - (-(horizon - tk) / tau).exp());
            }
        }
    }
    for (j, &tj) in log.events(target).iter().enumerate() {
        let mut lambda = baseline.value(tj)?;
        for source in 0..model.dim() {
            for &tk in log.events(source).iter().take_while(|&&tk| tk < tj) {
                for i in 0..kernel.exps() {
                    lambda += kernel.alpha(target, source, i) * (-(tj - tk) / kernel.tau(target, source, i)).exp();
                }
            }
        }
        if !(lambda > 0.0) {
            return Err(HawkesError::ZeroIntensity { target, index: j, time: tj });
        }
        ll += lambda.ln();
    }
    Ok(ll)
}

fn check_target(model: &HawkesModel, target: usize) -> Result<()> {
    if target >= model.dim() {
        return Err(HawkesError::domain(format!("target {target} out of range for R = {}", model.dim())));
    }
    Ok(())
}

/// Precomputed layout of one target's likelihood for fast repeated
/// evaluation under varying parameters (the calibrator's inner loop).
#[derive(Debug, Clone)]
pub struct TargetLikelihood {
    target: usize,
    dim: usize,
    horizon: f64,
    /// `∫μ = Σ_k weights[k] · values[k]` for the shared knot grid.
    integral_weights: Vec<f64>,
    /// Per target event: baseline segment and interpolation fraction.
    interp: Vec<(usize, f64)>,
    target_events: Vec<f64>,
    /// Per source: events, and per target event `j` the window `[lo, hi)`
    /// into them holding events in `[t_{j-1}, t_j)`.
    sources: Vec<SourceWindows>,
}

#[derive(Debug, Clone)]
struct SourceWindows {
    events: Vec<f64>,
    /// Time to horizon `T - t_k` for each event.
    remaining: Vec<f64>,
    bounds: Vec<(usize, usize)>,
}

impl TargetLikelihood {
    pub fn new(log: &EventLog, target: usize, knots: &[f64]) -> Result<Self> {
        if target >= log.dim() {
            return Err(HawkesError::domain(format!("target {target} out of range")));
        }
        if knots.len() < 2 || knots[0] != 0.0 || (knots[knots.len() - 1] - log.horizon()).abs() > 1e-9 * log.horizon().max(1.0) {
            return Err(HawkesError::domain("knot grid must span [0, T] of the log"));
        }
        let horizon = log.horizon();
        let mut integral_weights = vec![0.0; knots.len()];
        for k in 0..knots.len() - 1 {
            let half = 0.5 * (knots[k + 1] - knots[k]);
            integral_weights[k] += half;
            integral_weights[k + 1] += half;
        }
        let target_events = log.events(target).to_vec();
        let interp = target_events
            .iter()
            .map(|&t| {
                let k = knots.partition_point(|&x| x <= t).saturating_sub(1).min(knots.len() - 2);
                (k, (t - knots[k]) / (knots[k + 1] - knots[k]))
            })
            .collect();
        let sources = (0..log.dim())
            .map(|s| {
                let events = log.events(s).to_vec();
                let mut bounds = Vec::with_capacity(target_events.len());
                let mut lo = 0;
                for &tj in &target_events {
                    let hi = lo + events[lo..].partition_point(|&x| x < tj);
                    bounds.push((lo, hi));
                    lo = hi;
                }
                let remaining = events.iter().map(|&t| horizon - t).collect();
                SourceWindows { events, remaining, bounds }
            })
            .collect();
        Ok(Self {
            target,
            dim: log.dim(),
            horizon,
            integral_weights,
            interp,
            target_events,
            sources,
        })
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn event_count(&self) -> usize {
        self.target_events.len()
    }

    pub fn knot_count(&self) -> usize {
        self.integral_weights.len()
    }

    /// Log-likelihood for baseline knot values `mu` and the target's
    /// `alpha`/`tau` rows laid out `source * M + i`.
    pub fn evaluate(&self, mu: &[f64], alpha: &[f64], tau: &[f64]) -> Result<f64> {
        let exps = alpha.len() / self.dim;
        debug_assert_eq!(mu.len(), self.integral_weights.len());
        debug_assert_eq!(alpha.len(), self.dim * exps);

        let mut ll = -self.integral_weights.iter().zip(mu).map(|(w, v)| w * v).sum::<f64>();

        for (s, src) in self.sources.iter().enumerate() {
            for i in 0..exps {
                let a = alpha[s * exps + i];
                if a == 0.0 {
                    continue;
                }
                let inv_tau = 1.0 / tau[s * exps + i];
                let mass: f64 = src.remaining.iter().map(|&d| 1.0 - (-d * inv_tau).exp()).sum();
                ll -= a * tau[s * exps + i] * mass;
            }
        }

        let mut state = vec![0.0; self.dim * exps];
        let inv_tau: Vec<f64> = tau.iter().map(|t| 1.0 / t).collect();
        let mut prev = 0.0;
        for (j, &tj) in self.target_events.iter().enumerate() {
            let dt = tj - prev;
            for (s, src) in self.sources.iter().enumerate() {
                let self_form = s == self.target && j > 0;
                let (lo, hi) = src.bounds[j];
                let window = &src.events[lo..hi];
                for i in 0..exps {
                    let idx = s * exps + i;
                    let decay = (-dt * inv_tau[idx]).exp();
                    state[idx] = if self_form {
                        decay * (1.0 + state[idx])
                    } else {
                        let fresh: f64 = window.iter().map(|&tk| (-(tj - tk) * inv_tau[idx]).exp()).sum();
                        decay * state[idx] + fresh
                    };
                }
            }
            let (k, w) = self.interp[j];
            let mut lambda = (1.0 - w) * mu[k] + w * mu[k + 1];
            lambda += alpha.iter().zip(&state).map(|(a, r)| a * r).sum::<f64>();
            if !(lambda > 0.0) {
                return Err(HawkesError::ZeroIntensity { target: self.target, index: j, time: tj });
            }
            ll += lambda.ln();
            prev = tj;
        }
        Ok(ll)
    }
}

/// One row of a dumped recursion trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub target: usize,
    pub j: usize,
    pub source: usize,
    pub i: usize,
    pub value: f64,
}

/// Replays the recursion for `target`, recording `R_{s,i}(j)` at every target event.
pub fn recursion_trace(model: &HawkesModel, log: &EventLog, target: usize) -> Result<Vec<TraceRow>> {
    model.check_log(log)?;
    check_target(model, target)?;
    let kernel = model.kernel();
    let mut state = RecursionState::new(model.dim(), model.exps());
    let mut cursors = vec![0usize; model.dim()];
    let mut rows = Vec::new();
    for (j, &tj) in log.events(target).iter().enumerate() {
        let windows: Vec<&[f64]> = (0..model.dim())
            .map(|s| {
                let events = log.events(s);
                let lo = cursors[s];
                let hi = lo + events[lo..].partition_point(|&x| x < tj);
                cursors[s] = hi;
                &events[lo..hi]
            })
            .collect();
        state.advance(kernel, target, tj, &windows)?;
        for s in 0..model.dim() {
            for i in 0..model.exps() {
                rows.push(TraceRow { target, j: j + 1, source: s, i, value: state.values[s * model.exps() + i] });
            }
        }
    }
    Ok(rows)
}

/// Writes trace rows as CSV `target,j,source,i,value` (1-based indices).
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["target", "j", "source", "i", "value"])?;
    for row in rows {
        w.write_record([
            (row.target + 1).to_string(),
            row.j.to_string(),
            (row.source + 1).to_string(),
            (row.i + 1).to_string(),
            format!("{:.6}", row.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}
