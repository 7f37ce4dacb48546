//! Maximum-likelihood calibration.
//!
//! Each target's likelihood depends only on that target's baseline and
//! kernel row, so targets are fitted independently: a genetic search over
//! the parameter box seeds a projected quasi-Newton refinement, and the
//! best refined candidate wins.
//!
//! Internal coordinates per target are `[μ_k / scale..., ln α..., ln τ...]`
//! where `scale` is the target's empirical event rate.

pub mod genetic;
pub mod harness;
pub mod local;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::likelihood::TargetLikelihood;
use crate::model::{uniform_knots, EventLog, HawkesModel, KernelParams, ModelDocument, PiecewiseLinearBaseline};

pub use harness::{fit_report, stability_run, DayFit, FitReport, StabilityReport};

/// Smallest amplitude representable in log space when the box allows α = 0.
pub const ALPHA_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationOptions {
    /// Exponentials per kernel pair (M).
    #[serde(rename = "M")]
    pub exps: usize,
    /// Baseline knots, equally spaced over the session (4 knots = 3 periods).
    pub knots: usize,
    pub alpha_bounds: [f64; 2],
    pub tau_bounds: [f64; 2],
    /// Baseline knot box; `None` uses `[0, 10 × empirical rate]` per target.
    pub mu_bounds: Option<[f64; 2]>,
    pub population_size: usize,
    pub generations: usize,
    pub local_max_iters: usize,
    pub local_tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            exps: 1,
            knots: 4,
            alpha_bounds: [0.0, 1e3],
            tau_bounds: [1e-3, 600.0],
            mu_bounds: None,
            population_size: 60,
            generations: 80,
            local_max_iters: 500,
            local_tolerance: 1e-6,
            restarts: 3,
            seed: 0,
        }
    }
}

impl CalibrationOptions {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, [lo, hi]: [f64; 2]| {
            if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
                return Err(HawkesError::Config(format!("{name} bounds must satisfy 0 <= lo < hi, got [{lo}, {hi}]")));
            }
            Ok(())
        };
        check("alpha", self.alpha_bounds)?;
        check("tau", self.tau_bounds)?;
        if let Some(mu) = self.mu_bounds {
            check("mu", mu)?;
        }
        if self.tau_bounds[0] <= 0.0 {
            return Err(HawkesError::Config("tau lower bound must be > 0".into()));
        }
        if self.alpha_bounds[1] <= ALPHA_FLOOR {
            return Err(HawkesError::Config("alpha upper bound too small".into()));
        }
        if self.exps == 0 {
            return Err(HawkesError::Config("M must be >= 1".into()));
        }
        if self.knots < 2 {
            return Err(HawkesError::Config("baseline needs at least 2 knots".into()));
        }
        if self.population_size < 2 || self.restarts == 0 || self.local_max_iters == 0 {
            return Err(HawkesError::Config("population_size >= 2, restarts >= 1 and local_max_iters >= 1 required".into()));
        }
        if !(self.local_tolerance > 0.0) {
            return Err(HawkesError::Config("local_tolerance must be > 0".into()));
        }
        Ok(())
    }
}

/// Calibration outcome for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetFit {
    pub target: usize,
    pub baseline_values: Vec<f64>,
    /// Kernel row laid out `source * M + i`.
    pub alpha: Vec<f64>,
    pub tau: Vec<f64>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    /// Best log-likelihood among the initial (pre-evolution) population.
    pub initial_best: f64,
    /// Best log-likelihood after the genetic search.
    pub global_best: f64,
    /// Log-likelihood of every seed handed to the local optimizer.
    pub seed_log_likelihoods: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: HawkesModel,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    pub wall_time: f64,
    /// `branching[target][source]`.
    pub branching: Vec<Vec<f64>>,
    pub half_lives: Vec<Vec<f64>>,
    pub spectral_radius: f64,
    pub targets: Vec<TargetFit>,
    pub warnings: Vec<String>,
}

/// JSON layout of a [`FitResult`]. Wall time is kept out of it so that
/// reruns produce identical documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub model: ModelDocument,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    pub branching_ratio: Vec<Vec<f64>>,
    pub half_life: Vec<Vec<f64>>,
    pub spectral_radius: f64,
    pub targets: Vec<TargetFit>,
    pub warnings: Vec<String>,
    pub options: CalibrationOptions,
}

impl FitResult {
    fn assemble(log: &EventLog, fits: Vec<TargetFit>, knots: &[f64], exps: usize, wall_time: f64) -> Result<Self> {
        let dim = log.dim();
        let baselines = fits
            .iter()
            .map(|f| PiecewiseLinearBaseline::new(knots.to_vec(), f.baseline_values.clone()))
            .collect::<Result<Vec<_>>>()?;
        let alpha = fits.iter().flat_map(|f| f.alpha.iter().copied()).collect();
        let tau = fits.iter().flat_map(|f| f.tau.iter().copied()).collect();
        let kernel = KernelParams::new(dim, exps, alpha, tau)?;
        let model = HawkesModel::new(baselines, kernel)?;
        let branching = matrix_rows(&model.branching_ratio());
        let half_lives = matrix_rows(&model.kernel().half_life_matrix());
        let spectral_radius = model.kernel().spectral_radius();
        let mut warnings = Vec::new();
        if spectral_radius >= 1.0 {
            warnings.push(format!("fitted spectral radius {spectral_radius:.6} >= 1 (not subcritical)"));
        }
        for f in fits.iter().filter(|f| !f.converged) {
            warnings.push(format!("target {} did not converge", f.target + 1));
        }
        Ok(Self {
            log_likelihood: fits.iter().map(|f| f.log_likelihood).sum(),
            converged: fits.iter().all(|f| f.converged),
            iterations: fits.iter().map(|f| f.iterations).sum(),
            wall_time,
            branching,
            half_lives,
            spectral_radius,
            targets: fits,
            warnings,
            model,
        })
    }

    pub fn to_document(&self, options: &CalibrationOptions) -> FitDocument {
        FitDocument {
            model: self.model.to_document(),
            log_likelihood: self.log_likelihood,
            converged: self.converged,
            iterations: self.iterations,
            branching_ratio: self.branching.clone(),
            half_life: self.half_lives.clone(),
            spectral_radius: self.spectral_radius,
            targets: self.targets.clone(),
            warnings: self.warnings.clone(),
            options: options.clone(),
        }
    }

    pub fn from_document(doc: &FitDocument) -> Result<Self> {
        Ok(Self {
            model: HawkesModel::from_document(&doc.model)?,
            log_likelihood: doc.log_likelihood,
            converged: doc.converged,
            iterations: doc.iterations,
            wall_time: 0.0,
            branching: doc.branching_ratio.clone(),
            half_lives: doc.half_life.clone(),
            spectral_radius: doc.spectral_radius,
            targets: doc.targets.clone(),
            warnings: doc.warnings.clone(),
        })
    }

    /// Self-excitation branching ratio of each type (diagonal of the matrix).
    pub fn self_branching(&self) -> Vec<f64> {
        (0..self.branching.len()).map(|r| self.branching[r][r]).collect()
    }

    pub fn self_half_lives(&self) -> Vec<f64> {
        (0..self.half_lives.len()).map(|r| self.half_lives[r][r]).collect()
    }
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

/// Box and coordinate mapping for one target.
#[derive(Debug, Clone)]
struct Layout {
    dim: usize,
    exps: usize,
    knots: usize,
    scale: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
    alpha_bounds: [f64; 2],
    tau_bounds: [f64; 2],
    mu_bounds: [f64; 2],
}

impl Layout {
    fn new(problem: &TargetLikelihood, dim: usize, options: &CalibrationOptions) -> Self {
        let rate = problem.event_count() as f64 / problem.horizon();
        let scale = if rate > 0.0 { rate } else { 1.0 };
        let mu_bounds = options.mu_bounds.unwrap_or([0.0, 10.0 * scale]);
        let exps = options.exps;
        let knots = problem.knot_count();
        let n_kernel = dim * exps;
        let alpha_lo = options.alpha_bounds[0].max(ALPHA_FLOOR).ln();
        let alpha_hi = options.alpha_bounds[1].ln();
        let (tau_lo, tau_hi) = (options.tau_bounds[0].ln(), options.tau_bounds[1].ln());
        let mut lo = vec![mu_bounds[0] / scale; knots];
        let mut hi = vec![mu_bounds[1] / scale; knots];
        lo.extend(std::iter::repeat(alpha_lo).take(n_kernel));
        hi.extend(std::iter::repeat(alpha_hi).take(n_kernel));
        lo.extend(std::iter::repeat(tau_lo).take(n_kernel));
        hi.extend(std::iter::repeat(tau_hi).take(n_kernel));
        Self { dim, exps, knots, scale, lo, hi, alpha_bounds: options.alpha_bounds, tau_bounds: options.tau_bounds, mu_bounds }
    }

    fn n_kernel(&self) -> usize {
        self.dim * self.exps
    }

    /// Parameters in natural units, clamped into their boxes.
    fn decode(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let k = self.knots;
        let nk = self.n_kernel();
        let mu = x[..k].iter().map(|v| (v * self.scale).clamp(self.mu_bounds[0], self.mu_bounds[1])).collect();
        let alpha = x[k..k + nk]
            .iter()
            .map(|v| {
                let a = v.exp().clamp(self.alpha_bounds[0], self.alpha_bounds[1]);
                if self.alpha_bounds[0] == 0.0 && *v <= ALPHA_FLOOR.ln() {
                    0.0
                } else {
                    a
                }
            })
            .collect();
        let tau = x[k + nk..].iter().map(|v| v.exp().clamp(self.tau_bounds[0], self.tau_bounds[1])).collect();
        (mu, alpha, tau)
    }

    fn encode(&self, mu: &[f64], alpha: &[f64], tau: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = mu.iter().map(|m| m / self.scale).collect();
        x.extend(alpha.iter().map(|a| a.max(ALPHA_FLOOR).ln()));
        x.extend(tau.iter().map(|t| t.ln()));
        for (v, (lo, hi)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*lo, *hi);
        }
        x
    }

    /// Orders each source's exponentials by increasing timescale.
    fn canonicalize(&self, x: &mut [f64]) {
        if self.exps < 2 {
            return;
        }
        let (k, nk, m) = (self.knots, self.n_kernel(), self.exps);
        for s in 0..self.dim {
            let mut pairs: Vec<(f64, f64)> = (0..m).map(|i| (x[k + s * m + i], x[k + nk + s * m + i])).collect();
            pairs.sort_by(|a, b| a.1.total_cmp(&b.1));
            for (i, (a, t)) in pairs.into_iter().enumerate() {
                x[k + s * m + i] = a;
                x[k + nk + s * m + i] = t;
            }
        }
    }

    /// Starting points: 70% of the rate in the baseline and a total
    /// branching of 0.3 split evenly over geometrically spaced timescales.
    /// Each start uses a different timescale range.
    fn heuristics(&self) -> Vec<Vec<f64>> {
        const SPREADS: [(f64, f64); 3] = [(0.1, 30.0), (0.03, 3.0), (0.3, 300.0)];
        let m = self.exps;
        SPREADS
            .iter()
            .map(|&(fast, slow)| {
                let taus: Vec<f64> = (0..m)
                    .map(|i| {
                        let t = if m == 1 { (fast * slow).sqrt() } else { fast * (slow / fast).powf(i as f64 / (m - 1) as f64) };
                        t.clamp(self.tau_bounds[0], self.tau_bounds[1])
                    })
                    .collect();
                let share = 0.3 / self.n_kernel() as f64;
                let mu = vec![0.7 * self.scale; self.knots];
                let tau: Vec<f64> = (0..self.n_kernel()).map(|j| taus[j % m]).collect();
                let alpha: Vec<f64> = tau.iter().map(|t| share / t).collect();
                self.encode(&mu, &alpha, &tau)
            })
            .collect()
    }
}

fn objective(problem: &TargetLikelihood, layout: &Layout, x: &[f64]) -> f64 {
    let (mu, alpha, tau) = layout.decode(x);
    problem.evaluate(&mu, &alpha, &tau).unwrap_or(f64::NEG_INFINITY)
}

fn refine(problem: &TargetLikelihood, layout: &Layout, start: &[f64], options: &CalibrationOptions) -> local::LocalResult {
    let settings = local::LocalSettings {
        max_iters: options.local_max_iters,
        tolerance: options.local_tolerance,
        ..Default::default()
    };
    let neg = |x: &[f64]| -objective(problem, layout, x);
    let mut result = local::minimize(&neg, start, &layout.lo, &layout.hi, &settings);
    layout.canonicalize(&mut result.x);
    result.value = -result.value;
    result
}

fn target_rng(seed: u64, target: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(target as u64);
    rng
}

fn check_log(log: &EventLog, target: usize) -> Result<()> {
    if target >= log.dim() {
        return Err(HawkesError::domain(format!("target {target} out of range")));
    }
    if log.events(target).is_empty() {
        return Err(HawkesError::Infeasible(format!("target {} has no events to fit", target + 1)));
    }
    Ok(())
}

/// Fits the baseline and kernel row of a single target.
pub fn calibrate_target(log: &EventLog, target: usize, options: &CalibrationOptions) -> Result<TargetFit> {
    options.validate()?;
    check_log(log, target)?;
    let knots = uniform_knots(log.horizon(), options.knots)?;
    let problem = TargetLikelihood::new(log, target, &knots)?;
    let layout = Layout::new(&problem, log.dim(), options);
    let fitness = |x: &[f64]| objective(&problem, &layout, x);
    let canon = |x: &mut [f64]| layout.canonicalize(x);
    let settings = genetic::GeneticSettings {
        population_size: options.population_size,
        generations: options.generations,
        ..Default::default()
    };
    let mut rng = target_rng(options.seed, target);
    let starts = layout.heuristics();
    let outcome = genetic::evolve(&fitness, &canon, &layout.lo, &layout.hi, &starts, &settings, &mut rng);
    let global_best = outcome.population[0].fitness;
    if !global_best.is_finite() {
        return Err(HawkesError::Infeasible(format!(
            "every candidate for target {} has a zero-intensity event",
            target + 1
        )));
    }

    // the best `restarts` distinct survivors, plus the heuristic starts so a
    // component the search drove to the amplitude floor can still be found
    let mut seeds: Vec<genetic::Individual> = Vec::with_capacity(options.restarts + starts.len());
    for ind in outcome.population.iter().filter(|i| i.fitness.is_finite()) {
        if seeds.len() == options.restarts {
            break;
        }
        if !seeds.iter().any(|s| s.genes == ind.genes) {
            seeds.push(ind.clone());
        }
    }
    for mut genes in starts {
        canon(&mut genes);
        let fitness = fitness(&genes);
        if fitness.is_finite() && !seeds.iter().any(|s| s.genes == genes) {
            seeds.push(genetic::Individual { genes, fitness });
        }
    }
    let refined: Vec<local::LocalResult> = seeds.par_iter().map(|s| refine(&problem, &layout, &s.genes, options)).collect();
    let best = refined
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.value.total_cmp(&b.1.value).then(b.0.cmp(&a.0)))
        .map(|(_, r)| r)
        .expect("at least one seed");
    let (baseline_values, alpha, tau) = layout.decode(&best.x);
    Ok(TargetFit {
        target,
        baseline_values,
        alpha,
        tau,
        log_likelihood: best.value,
        converged: best.converged,
        iterations: refined.iter().map(|r| r.iterations).sum(),
        evaluations: outcome.evaluations + refined.iter().map(|r| r.evaluations).sum::<usize>(),
        initial_best: outcome.initial_best,
        global_best,
        seed_log_likelihoods: seeds.iter().map(|s| s.fitness).collect(),
    })
}

/// Fits every target independently and assembles the joint model.
pub fn calibrate(log: &EventLog, options: &CalibrationOptions) -> Result<FitResult> {
    options.validate()?;
    let started = Instant::now();
    let fits = (0..log.dim())
        .into_par_iter()
        .map(|target| calibrate_target(log, target, options))
        .collect::<Result<Vec<_>>>()?;
    let knots = uniform_knots(log.horizon(), options.knots)?;
    FitResult::assemble(log, fits, &knots, options.exps, started.elapsed().as_secs_f64())
}

/// Local refinement only, starting from `initial`; no global search.
pub fn refine_model(log: &EventLog, initial: &HawkesModel, options: &CalibrationOptions) -> Result<FitResult> {
    options.validate()?;
    initial.check_log(log)?;
    if initial.exps() != options.exps {
        return Err(HawkesError::Config("initial model M differs from options".into()));
    }
    let started = Instant::now();
    let knots = initial.knots().to_vec();
    let fits = (0..log.dim())
        .into_par_iter()
        .map(|target| {
            check_log(log, target)?;
            let problem = TargetLikelihood::new(log, target, &knots)?;
            let layout = Layout::new(&problem, log.dim(), options);
            let kernel = initial.kernel();
            let start = layout.encode(initial.baseline(target).values(), kernel.target_alpha(target), kernel.target_tau(target));
            let start_ll = objective(&problem, &layout, &start);
            let r = refine(&problem, &layout, &start, options);
            let (baseline_values, alpha, tau) = layout.decode(&r.x);
            Ok(TargetFit {
                target,
                baseline_values,
                alpha,
                tau,
                log_likelihood: r.value,
                converged: r.converged,
                iterations: r.iterations,
                evaluations: r.evaluations,
                initial_best: start_ll,
                global_best: start_ll,
                seed_log_likelihoods: vec![start_ll],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FitResult::assemble(log, fits, &knots, options.exps, started.elapsed().as_secs_f64())
}
