//! Thinning simulation of multivariate Hawkes processes with
//! piecewise-linear baselines.
//!
//! Excitation is tracked per `(target, source, i)` as
//! `S = Σ_{t_k < t} exp(-(t - t_k)/τ)`, which decays between events and
//! jumps by one when a source event fires. The dominating rate is the sum
//! over targets of the remaining-horizon baseline maximum plus the current
//! excitation, and is recomputed after every proposal.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::model::{EventLog, HawkesModel, Stability};

/// Name and version of the generator recorded in simulation metadata.
pub const GENERATOR: &str = "ChaCha8 (rand_chacha 0.3)";

pub const DEFAULT_MAX_EVENTS: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub horizon: f64,
    pub seed: u64,
    pub max_events: usize,
}

impl SimulationConfig {
    pub fn new(horizon: f64, seed: u64) -> Self {
        Self { horizon, seed, max_events: DEFAULT_MAX_EVENTS }
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(HawkesError::invalid(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if self.max_events == 0 {
            return Err(HawkesError::invalid("max_events must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationStats {
    pub proposals: u64,
    pub accepted: u64,
    pub acceptance_rate: f64,
    pub truncated: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub log: EventLog,
    pub stats: SimulationStats,
}

/// Simulates `model` over `[0, config.horizon]`. The model's own horizon must
/// match the configured one.
pub fn simulate(model: &HawkesModel, config: &SimulationConfig) -> Result<Simulation> {
    config.validate()?;
    let horizon = config.horizon;
    if (model.horizon() - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(HawkesError::invalid(format!(
            "config horizon {horizon} differs from model horizon {}",
            model.horizon()
        )));
    }
    let dim = model.dim();
    let exps = model.exps();
    let kernel = model.kernel();
    let alpha = kernel.alpha_flat();
    let inv_tau: Vec<f64> = kernel.tau_flat().iter().map(|t| 1.0 / t).collect();

    let mut warnings = Vec::new();
    let stability = model.stability_flag();
    if stability != Stability::Subcritical {
        warnings.push(format!(
            "model is {stability:?} (spectral radius {:.6}); simulation may explode",
            kernel.spectral_radius()
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut excitation = vec![0.0; alpha.len()];
    let mut events: Vec<Vec<f64>> = vec![Vec::new(); dim];
    let mut rates = vec![0.0; dim];
    let mut t = 0.0;
    let mut last_event = f64::NEG_INFINITY;
    let mut proposals = 0u64;
    let mut accepted = 0u64;
    let mut truncated = false;

    let excited = |excitation: &[f64], target: usize| -> f64 {
        let w = dim * exps;
        alpha[target * w..(target + 1) * w]
            .iter()
            .zip(&excitation[target * w..(target + 1) * w])
            .map(|(a, s)| a * s)
            .sum()
    };

    loop {
        let bound: f64 = (0..dim)
            .map(|r| model.baseline(r).max_from(t) + excited(&excitation, r))
            .sum();
        if !(bound > 0.0) {
            break;
        }
        let u: f64 = rng.gen();
        let step = -(1.0 - u).ln() / bound;
        let next = t + step;
        if next > horizon {
            break;
        }
        proposals += 1;
        for (s, x) in excitation.iter_mut().enumerate() {
            *x *= (-step * inv_tau[s]).exp();
        }
        t = next;
        for (r, rate) in rates.iter_mut().enumerate() {
            *rate = model.baseline(r).value_unchecked(t) + excited(&excitation, r);
        }
        let total: f64 = rates.iter().sum();
        let v: f64 = rng.gen::<f64>() * bound;
        if v >= total {
            continue;
        }
        // attribute to a target with probability λ_r / Σλ
        let mut pick = v;
        let mut target = dim - 1;
        for (r, rate) in rates.iter().enumerate() {
            if pick < *rate {
                target = r;
                break;
            }
            pick -= rate;
        }
        if t <= last_event {
            // two proposals at the same floating-point instant; vanishingly rare
            continue;
        }
        events[target].push(t);
        last_event = t;
        accepted += 1;
        for r in 0..dim {
            let base = (r * dim + target) * exps;
            for x in &mut excitation[base..base + exps] {
                *x += 1.0;
            }
        }
        if accepted as usize >= config.max_events {
            truncated = true;
            warnings.push(format!(
                "max_events = {} reached at t = {t:.6}; log truncated (likely supercritical)",
                config.max_events
            ));
            break;
        }
    }

    let stats = SimulationStats {
        proposals,
        accepted,
        acceptance_rate: if proposals > 0 { accepted as f64 / proposals as f64 } else { 0.0 },
        truncated,
        warnings,
    };
    Ok(Simulation { log: EventLog::new(events, horizon)?, stats })
}

/// Stationary per-type event rates `(I - n)^{-1} μ̄`, with `μ̄` the
/// time-averaged baselines.
pub fn expected_count(model: &HawkesModel) -> Result<Vec<f64>> {
    let dim = model.dim();
    let branching = model.branching_ratio();
    if model.stability_flag() != Stability::Subcritical {
        return Err(HawkesError::Supercritical(format!(
            "spectral radius {:.6} >= 1",
            model.kernel().spectral_radius()
        )));
    }
    let system = DMatrix::<f64>::identity(dim, dim) - branching;
    let mean_baseline = DVector::from_iterator(dim, model.baselines().iter().map(|b| b.mean()));
    let solved = system
        .lu()
        .solve(&mean_baseline)
        .ok_or_else(|| HawkesError::Supercritical("I - n is singular".into()))?;
    Ok(solved.iter().copied().collect())
}

/// JSON sidecar written next to a simulated event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationMetadata {
    pub model: crate::model::ModelDocument,
    pub seed: u64,
    pub generator: String,
    pub max_events: usize,
    pub counts: Vec<usize>,
    pub stats: SimulationStats,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{KernelParams, PiecewiseLinearBaseline};
    use approx::assert_relative_eq;

    fn scalar_model(mu: f64, alpha: f64, tau: f64, horizon: f64) -> HawkesModel {
        HawkesModel::with_constant_baseline(&[mu], KernelParams::new(1, 1, vec![alpha], vec![tau]).unwrap(), horizon).unwrap()
    }

    #[test]
    fn poisson_counts() {
        let model = scalar_model(0.5, 0.0, 1.0, 10_000.0);
        let sim = simulate(&model, &SimulationConfig::new(10_000.0, 1)).unwrap();
        let n = sim.log.total() as f64;
        assert!((n - 5000.0).abs() < 3.0 * 5000f64.sqrt(), "{n}");
        assert!(sim.stats.warnings.is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let model = scalar_model(0.5, 0.8, 0.5, 500.0);
        let a = simulate(&model, &SimulationConfig::new(500.0, 9)).unwrap();
        let b = simulate(&model, &SimulationConfig::new(500.0, 9)).unwrap();
        let c = simulate(&model, &SimulationConfig::new(500.0, 10)).unwrap();
        assert_eq!(a.log, b.log);
        assert_ne!(a.log, c.log);
    }

    #[test]
    fn stationary_rate_scalar() {
        let model = scalar_model(0.5, 0.8, 0.5, 100_000.0);
        assert_relative_eq!(expected_count(&model).unwrap()[0], 0.5 / 0.6, epsilon = 1e-12);
        let sim = simulate(&model, &SimulationConfig::new(100_000.0, 3)).unwrap();
        let rate = sim.log.total() as f64 / 100_000.0;
        assert!((rate / (0.5 / 0.6) - 1.0).abs() < 0.05, "{rate}");
    }

    #[test]
    fn expected_count_cases() {
        let baseline = PiecewiseLinearBaseline::new(vec![0.0, 10.0], vec![1.0, 3.0]).unwrap();
        let poisson = HawkesModel::new(vec![baseline], KernelParams::zeros(1, 1, 1.0).unwrap()).unwrap();
        assert_relative_eq!(expected_count(&poisson).unwrap()[0], 2.0, epsilon = 1e-12);

        let kernel = KernelParams::new(2, 1, vec![0.3, 0.0, 0.0, 0.5], vec![1.0; 4]).unwrap();
        let diag = HawkesModel::with_constant_baseline(&[1.0, 2.0], kernel, 10.0).unwrap();
        let rates = expected_count(&diag).unwrap();
        assert_relative_eq!(rates[0], 1.0 / 0.7, epsilon = 1e-12);
        assert_relative_eq!(rates[1], 2.0 / 0.5, epsilon = 1e-12);

        assert!(matches!(expected_count(&scalar_model(1.0, 3.0, 1.0, 10.0)), Err(HawkesError::Supercritical(_))));
    }

    #[test]
    fn multivariate_rates_match_linear_system() {
        let kernel = KernelParams::new(2, 2, vec![0.4, 0.1, 0.2, 0.0, 0.0, 0.3, 0.5, 0.05], vec![0.5, 4.0, 1.0, 2.0, 1.0, 0.5, 0.4, 3.0]).unwrap();
        let model = HawkesModel::with_constant_baseline(&[0.3, 0.4], kernel, 50_000.0).unwrap();
        let expected = expected_count(&model).unwrap();
        let sim = simulate(&model, &SimulationConfig::new(50_000.0, 17)).unwrap();
        for r in 0..2 {
            let rate = sim.log.events(r).len() as f64 / 50_000.0;
            assert!((rate / expected[r] - 1.0).abs() < 0.06, "type {r}: {rate} vs {}", expected[r]);
        }
    }

    #[test]
    fn supercritical_truncates_with_warning() {
        let model = scalar_model(1.0, 3.0, 1.0, 1_000.0);
        let config = SimulationConfig { horizon: 1_000.0, seed: 1, max_events: 5_000 };
        let sim = simulate(&model, &config).unwrap();
        assert!(sim.stats.truncated);
        assert_eq!(sim.log.total(), 5_000);
        assert!(sim.stats.warnings.len() >= 2);
    }

    #[test]
    fn counts_scale_with_horizon() {
        let make = |h: f64| scalar_model(0.5, 0.8, 0.5, h);
        let short = simulate(&make(20_000.0), &SimulationConfig::new(20_000.0, 5)).unwrap().log.total() as f64;
        let long = simulate(&make(40_000.0), &SimulationConfig::new(40_000.0, 6)).unwrap().log.total() as f64;
        assert!((long / short / 2.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn increasing_baseline_is_respected() {
        // ramp from 0 to 4 events/s: expected count 2 * horizon
        let baseline = PiecewiseLinearBaseline::new(vec![0.0, 5_000.0], vec![0.0, 4.0]).unwrap();
        let model = HawkesModel::new(vec![baseline], KernelParams::zeros(1, 1, 1.0).unwrap()).unwrap();
        let sim = simulate(&model, &SimulationConfig::new(5_000.0, 8)).unwrap();
        let n = sim.log.total() as f64;
        assert!((n - 10_000.0).abs() < 4.0 * 100.0, "{n}");
        // the first half holds a quarter of the mass
        let early = sim.log.events(0).iter().filter(|&&t| t < 2_500.0).count() as f64;
        assert!((early / n - 0.25).abs() < 0.02);
    }
}
