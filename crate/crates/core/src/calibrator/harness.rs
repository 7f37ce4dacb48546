//! Repeated-calibration stability runs and per-day goodness-of-fit reports.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{calibrate, CalibrationOptions, FitResult};
use crate::diagnostics::gof::TestKind;
use crate::diagnostics::{battery, summarize, BatteryOptions, TargetBattery, TestSummary};
use crate::error::{HawkesError, Result};
use crate::model::EventLog;

/// Header shared by the stability and daily goodness tables.
pub const GOODNESS_HEADER: [&str; 9] = ["M", "KS_H0", "KS_p", "ED_H0", "ED_p", "LBQ_H0", "LBQ_p", "KPSS_H0", "KPSS_p"];

/// Mean and sample standard deviation; `std` is `None` for a single value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub mean: f64,
    pub std: Option<f64>,
    pub count: usize,
}

impl Dispersion {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = if values.iter().all(|v| *v == values[0]) { values[0] } else { values.iter().sum::<f64>() / n };
        let std = (values.len() > 1)
            .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Some(Self { mean, std, count: values.len() })
    }

    /// Coefficient of variation, `std / |mean|`.
    pub fn cv(&self) -> Option<f64> {
        self.std.map(|s| if self.mean == 0.0 { if s == 0.0 { 0.0 } else { f64::INFINITY } } else { s / self.mean.abs() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatOutcome {
    pub repeat: usize,
    pub seed: u64,
    pub fit: Option<FitSummary>,
    pub batteries: Vec<TargetBattery>,
    pub error: Option<String>,
}

/// The parts of a fit the stability report needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub log_likelihood: f64,
    pub branching: Vec<Vec<f64>>,
    pub half_lives: Vec<Vec<f64>>,
    pub spectral_radius: f64,
    pub converged: bool,
}

impl From<&FitResult> for FitSummary {
    fn from(fit: &FitResult) -> Self {
        Self {
            log_likelihood: fit.log_likelihood,
            branching: fit.branching.clone(),
            half_lives: fit.half_lives.clone(),
            spectral_radius: fit.spectral_radius,
            converged: fit.converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub exps: usize,
    pub repeats: Vec<RepeatOutcome>,
    /// Pass fraction and mean p-value per test, pooled over repeats and targets.
    pub summary: Vec<TestSummary>,
    /// Dispersion of each type's self-excitation branching ratio across repeats.
    pub branching: Vec<Option<Dispersion>>,
}

impl StabilityReport {
    pub fn succeeded(&self) -> usize {
        self.repeats.iter().filter(|r| r.fit.is_some()).count()
    }

    /// Per-repeat p-values of one test, pooled over targets.
    pub fn p_values(&self, test: TestKind) -> Vec<f64> {
        self.repeats
            .iter()
            .flat_map(|r| r.batteries.iter().filter_map(move |b| b.outcome(test).map(|o| o.p_value())))
            .collect()
    }
}

/// Calibrates the same data `repeats` times. With `vary_seed` the k-th
/// repeat uses `options.seed + k`; otherwise every repeat reuses the seed.
/// A failing repeat is recorded and the others continue.
pub fn stability_run(
    log: &EventLog,
    options: &CalibrationOptions,
    battery_options: &BatteryOptions,
    repeats: usize,
    vary_seed: bool,
) -> Result<StabilityReport> {
    if repeats < 2 {
        return Err(HawkesError::Config(format!("stability run needs at least 2 repeats, got {repeats}")));
    }
    options.validate()?;
    let outcomes: Vec<RepeatOutcome> = (0..repeats)
        .map(|repeat| {
            let seed = if vary_seed { options.seed.wrapping_add(repeat as u64) } else { options.seed };
            let opts = CalibrationOptions { seed, ..options.clone() };
            let run = calibrate(log, &opts).and_then(|fit| {
                let batteries = battery(&fit.model, log, battery_options)?;
                Ok((fit, batteries))
            });
            match run {
                Ok((fit, batteries)) => RepeatOutcome { repeat, seed, fit: Some(FitSummary::from(&fit)), batteries, error: None },
                Err(e) => RepeatOutcome { repeat, seed, fit: None, batteries: Vec::new(), error: Some(e.to_string()) },
            }
        })
        .collect();
    let summary = summarize(outcomes.iter().flat_map(|r| r.batteries.iter()));
    let branching = (0..log.dim())
        .map(|r| {
            let values: Vec<f64> = outcomes.iter().filter_map(|o| o.fit.as_ref().map(|f| f.branching[r][r])).collect();
            Dispersion::of(&values)
        })
        .collect();
    Ok(StabilityReport { exps: options.exps, repeats: outcomes, summary, branching })
}

/// One day's calibration at one M with its residual tests.
#[derive(Debug, Clone, PartialEq)]
pub struct DayFit {
    pub day: String,
    pub exps: usize,
    pub branching: Vec<Vec<f64>>,
    pub half_lives: Vec<Vec<f64>>,
    pub batteries: Vec<TargetBattery>,
}

impl DayFit {
    pub fn new(day: &str, fit: &FitResult, batteries: Vec<TargetBattery>) -> Self {
        Self {
            day: day.to_string(),
            exps: fit.model.exps(),
            branching: fit.branching.clone(),
            half_lives: fit.half_lives.clone(),
            batteries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodnessRow {
    pub exps: usize,
    pub summary: Vec<TestSummary>,
}

impl GoodnessRow {
    pub fn get(&self, test: TestKind) -> &TestSummary {
        self.summary.iter().find(|s| s.test == test).expect("all tests summarized")
    }
}

/// Per-type summary of a fitted quantity across days at one M.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub exps: usize,
    pub target: usize,
    pub stats: Dispersion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// One row per M, ascending.
    pub goodness: Vec<GoodnessRow>,
    /// Self-excitation branching ratio per (M, type).
    pub branching: Vec<ParameterRow>,
    /// Self-excitation half-life per (M, type).
    pub half_lives: Vec<ParameterRow>,
    pub days: usize,
}

impl FitReport {
    pub fn row(&self, exps: usize) -> Option<&GoodnessRow> {
        self.goodness.iter().find(|r| r.exps == exps)
    }
}

/// Aggregates per-day fits by M. Each day is an independent realisation;
/// acceptance fractions pool every (day, target) test outcome.
pub fn fit_report(fits: &[DayFit]) -> FitReport {
    let mut by_m: BTreeMap<usize, Vec<&DayFit>> = BTreeMap::new();
    for f in fits {
        by_m.entry(f.exps).or_default().push(f);
    }
    let mut goodness = Vec::new();
    let mut branching = Vec::new();
    let mut half_lives = Vec::new();
    for (&exps, days) in &by_m {
        goodness.push(GoodnessRow { exps, summary: summarize(days.iter().flat_map(|d| d.batteries.iter())) });
        let dim = days.iter().map(|d| d.branching.len()).max().unwrap_or(0);
        for target in 0..dim {
            let pick = |m: &dyn Fn(&DayFit) -> &Vec<Vec<f64>>| -> Vec<f64> {
                days.iter().filter_map(|d| m(d).get(target).and_then(|row| row.get(target)).copied()).collect()
            };
            if let Some(stats) = Dispersion::of(&pick(&|d| &d.branching)) {
                branching.push(ParameterRow { exps, target, stats });
            }
            if let Some(stats) = Dispersion::of(&pick(&|d| &d.half_lives)) {
                half_lives.push(ParameterRow { exps, target, stats });
            }
        }
    }
    let days = fits.iter().map(|f| f.day.as_str()).collect::<std::collections::BTreeSet<_>>().len();
    FitReport { goodness, branching, half_lives, days }
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

/// Writes rows in the `M,KS_H0,KS_p,ED_H0,ED_p,LBQ_H0,LBQ_p,KPSS_H0,KPSS_p` layout.
pub fn write_goodness_csv<W: Write>(rows: &[GoodnessRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(GOODNESS_HEADER)?;
    for row in rows {
        let mut record = vec![row.exps.to_string()];
        for test in TestKind::ALL {
            let s = row.get(test);
            record.push(f6(s.accept_fraction));
            record.push(f6(s.mean_p));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_goodness_csv<R: std::io::Read>(reader: R) -> Result<Vec<GoodnessRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let num = |k: usize| -> Result<f64> {
            record.get(k).unwrap_or("").trim().parse().map_err(|_| HawkesError::Parse(format!("bad goodness field {k}")))
        };
        let exps = num(0)? as usize;
        let summary = TestKind::ALL
            .iter()
            .enumerate()
            .map(|(i, &test)| Ok(TestSummary { test, accept_fraction: num(1 + 2 * i)?, mean_p: num(2 + 2 * i)?, count: 0 }))
            .collect::<Result<Vec<_>>>()?;
        rows.push(GoodnessRow { exps, summary });
    }
    Ok(rows)
}

/// Writes `M,type,mean,std,days`; `std` is empty when only one day exists.
pub fn write_parameter_csv<W: Write>(rows: &[ParameterRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["M", "type", "mean", "std", "days"])?;
    for row in rows {
        w.write_record([
            row.exps.to_string(),
            (row.target + 1).to_string(),
            f6(row.stats.mean),
            row.stats.std.map(f6).unwrap_or_default(),
            row.stats.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `repeat,seed,test,p_value,accept` rows, one per target outcome.
pub fn write_stability_samples<W: Write>(report: &StabilityReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["M", "repeat", "seed", "target", "test", "p_value", "accept"])?;
    for r in &report.repeats {
        for b in &r.batteries {
            for o in &b.outcomes {
                w.write_record([
                    report.exps.to_string(),
                    r.repeat.to_string(),
                    r.seed.to_string(),
                    (b.target + 1).to_string(),
                    o.test().code().to_string(),
                    f6(o.p_value()),
                    o.accepted().to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
