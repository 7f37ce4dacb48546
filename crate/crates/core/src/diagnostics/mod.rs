//! Generalized residuals via the random time change, and the goodness-of-fit
//! battery run on them.
//!
//! For a correctly specified model the compensator increments between
//! adjacent events of one type are iid Exp(1).

pub mod gof;
pub mod special;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::model::{EventLog, HawkesModel};

pub use gof::{
    default_lags, excess_dispersion_test, kpss_test, ks_test, ljung_box_test, TestKind, TestReport, ED_LEVEL,
    KPSS_LEVEL, KS_LEVEL, LBQ_LEVEL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub target: usize,
    pub values: Vec<f64>,
    /// Whether the first value is the leading interval `[0, t_1]`.
    pub includes_leading: bool,
}

/// Compensator `Λ(t) = ∫_0^t λ_target(s) ds` in closed form.
pub fn compensator(model: &HawkesModel, log: &EventLog, target: usize, t: f64) -> Result<f64> {
    model.check_log(log)?;
    if target >= model.dim() {
        return Err(HawkesError::domain(format!("target {target} out of range")));
    }
    let kernel = model.kernel();
    let mut total = model.baseline(target).integral(0.0, t)?;
    for source in 0..model.dim() {
        let events = log.events(source);
        let before = &events[..events.partition_point(|&s| s < t)];
        for i in 0..kernel.exps() {
            let (alpha, tau) = (kernel.alpha(target, source, i), kernel.tau(target, source, i));
            if alpha == 0.0 {
                continue;
            }
            total += alpha * tau * before.iter().map(|&s| -(-(t - s) / tau).exp_m1()).sum::<f64>();
        }
    }
    Ok(total)
}

/// Compensator increments between adjacent `target` events, optionally
/// preceded by the leading interval `[0, t_1]`.
///
/// Each increment is computed directly from the excitation state carried
/// across the interval rather than as a difference of cumulative values.
pub fn residuals(model: &HawkesModel, log: &EventLog, target: usize, include_leading: bool) -> Result<ResidualSeries> {
    model.check_log(log)?;
    if target >= model.dim() {
        return Err(HawkesError::domain(format!("target {target} out of range")));
    }
    let kernel = model.kernel();
    let (dim, exps) = (model.dim(), model.exps());
    let baseline = model.baseline(target);
    let alpha = kernel.target_alpha(target);
    let tau = kernel.target_tau(target);

    // excitation state: Σ_{t_k <= a} exp(-(a - t_k)/τ) at the current left endpoint a
    let mut state = vec![0.0; dim * exps];
    let mut cursors = vec![0usize; dim];
    let mut a = 0.0;
    for (s, cursor) in cursors.iter_mut().enumerate() {
        let events = log.events(s);
        while *cursor < events.len() && events[*cursor] <= 0.0 {
            for i in 0..exps {
                state[s * exps + i] += 1.0;
            }
            *cursor += 1;
        }
    }

    let targets = log.events(target);
    let mut values = Vec::with_capacity(targets.len());
    for (j, &b) in targets.iter().enumerate() {
        let mut increment = baseline.integral_unchecked(a, b);
        for s in 0..dim {
            let events = log.events(s);
            let start = cursors[s];
            let mut end = start;
            while end < events.len() && events[end] <= b {
                end += 1;
            }
            for i in 0..exps {
                let idx = s * exps + i;
                let (al, ta) = (alpha[idx], tau[idx]);
                let decay_m1 = (-(b - a) / ta).exp_m1();
                let mut fresh_mass = 0.0;
                let mut fresh_state = 0.0;
                for &tk in &events[start..end] {
                    let e = (-(b - tk) / ta).exp_m1();
                    fresh_mass -= e;
                    fresh_state += 1.0 + e;
                }
                if al != 0.0 {
                    increment += al * ta * (state[idx] * -decay_m1 + fresh_mass);
                }
                state[idx] = state[idx] * (1.0 + decay_m1) + fresh_state;
            }
            cursors[s] = end;
        }
        if j > 0 || include_leading {
            values.push(increment);
        }
        a = b;
    }
    Ok(ResidualSeries { target, values, includes_leading: include_leading })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryOptions {
    pub ks_level: f64,
    pub ed_level: f64,
    pub lbq_level: f64,
    pub kpss_level: f64,
    /// Ljung-Box lags; `None` selects `min(20, ⌊n/4⌋)`.
    pub lbq_lags: Option<usize>,
    pub include_leading: bool,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        Self {
            ks_level: KS_LEVEL,
            ed_level: ED_LEVEL,
            lbq_level: LBQ_LEVEL,
            kpss_level: KPSS_LEVEL,
            lbq_lags: None,
            include_leading: false,
        }
    }
}

/// Outcome of one test in the battery. A test that cannot be computed
/// (degenerate residuals) is kept with its reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TestOutcome {
    Done(TestReport),
    Failed { test: TestKind, reason: String },
}

impl TestOutcome {
    pub fn test(&self) -> TestKind {
        match self {
            Self::Done(r) => r.test,
            Self::Failed { test, .. } => *test,
        }
    }

    /// Failed tests count as rejections.
    pub fn accepted(&self) -> bool {
        matches!(self, Self::Done(r) if r.accept_h0)
    }

    /// Failed tests contribute a p-value of 0.
    pub fn p_value(&self) -> f64 {
        match self {
            Self::Done(r) => r.reported_p().unwrap_or(0.0),
            Self::Failed { .. } => 0.0,
        }
    }

    pub fn statistic(&self) -> Option<f64> {
        match self {
            Self::Done(r) => Some(r.statistic),
            Self::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetBattery {
    pub target: usize,
    pub residual_count: usize,
    /// Empty when the target was skipped.
    pub outcomes: Vec<TestOutcome>,
    pub notice: Option<String>,
}

impl TargetBattery {
    pub fn outcome(&self, test: TestKind) -> Option<&TestOutcome> {
        self.outcomes.iter().find(|o| o.test() == test)
    }

    pub fn accepted_count(&self) -> usize {
        self.outcomes.iter().filter(|o| o.accepted()).count()
    }
}

/// Runs all four tests on the residuals of one sample.
pub fn run_tests(sample: &[f64], options: &BatteryOptions) -> Vec<TestOutcome> {
    let lags = options.lbq_lags.unwrap_or_else(|| default_lags(sample.len()));
    let wrap = |test: TestKind, r: Result<TestReport>| match r {
        Ok(report) => TestOutcome::Done(report),
        Err(e) => TestOutcome::Failed { test, reason: e.to_string() },
    };
    vec![
        wrap(TestKind::KolmogorovSmirnov, ks_test(sample, options.ks_level)),
        wrap(TestKind::ExcessDispersion, excess_dispersion_test(sample, options.ed_level)),
        wrap(TestKind::LjungBox, ljung_box_test(sample, lags, options.lbq_level)),
        wrap(TestKind::Kpss, kpss_test(sample, options.kpss_level)),
    ]
}

/// Residuals and the four tests for every target.
pub fn battery(model: &HawkesModel, log: &EventLog, options: &BatteryOptions) -> Result<Vec<TargetBattery>> {
    (0..model.dim())
        .map(|target| {
            let series = residuals(model, log, target, options.include_leading)?;
            if series.values.is_empty() {
                return Ok(TargetBattery {
                    target,
                    residual_count: 0,
                    outcomes: Vec::new(),
                    notice: Some(format!("target {} skipped: no residuals (fewer than two events)", target + 1)),
                });
            }
            Ok(TargetBattery {
                target,
                residual_count: series.values.len(),
                outcomes: run_tests(&series.values, options),
                notice: None,
            })
        })
        .collect()
}

/// Acceptance fraction and mean p-value per test over a set of batteries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub test: TestKind,
    pub accept_fraction: f64,
    pub mean_p: f64,
    pub count: usize,
}

pub fn summarize<'a>(batteries: impl IntoIterator<Item = &'a TargetBattery>) -> Vec<TestSummary> {
    let mut acc = [(0usize, 0.0f64, 0usize); 4];
    for battery in batteries {
        for outcome in &battery.outcomes {
            let k = TestKind::ALL.iter().position(|t| *t == outcome.test()).expect("known test");
            acc[k].0 += usize::from(outcome.accepted());
            acc[k].1 += outcome.p_value();
            acc[k].2 += 1;
        }
    }
    TestKind::ALL
        .iter()
        .zip(acc)
        .map(|(&test, (accepted, p_sum, count))| {
            let denom = count.max(1) as f64;
            TestSummary {
                test,
                accept_fraction: accepted as f64 / denom,
                mean_p: p_sum / denom,
                count,
            }
        })
        .collect()
}

/// One `day,target,M,test,statistic,p_value,accept` row.
#[derive(Debug, Clone, PartialEq)]
pub struct TestRow {
    pub day: String,
    pub target: usize,
    pub exps: usize,
    pub test: TestKind,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub accept: bool,
}

impl TestRow {
    pub fn from_battery(day: &str, exps: usize, battery: &TargetBattery) -> Vec<Self> {
        battery
            .outcomes
            .iter()
            .map(|o| TestRow {
                day: day.to_string(),
                target: battery.target,
                exps,
                test: o.test(),
                statistic: o.statistic(),
                p_value: match o {
                    TestOutcome::Done(r) => r.reported_p(),
                    TestOutcome::Failed { .. } => None,
                },
                accept: o.accepted(),
            })
            .collect()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

pub fn write_test_rows<W: Write>(rows: &[TestRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["day", "target", "M", "test", "statistic", "p_value", "accept"])?;
    for row in rows {
        w.write_record([
            row.day.clone(),
            (row.target + 1).to_string(),
            row.exps.to_string(),
            row.test.code().to_string(),
            fmt_opt(row.statistic),
            fmt_opt(row.p_value),
            row.accept.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_test_rows<R: std::io::Read>(reader: R) -> Result<Vec<TestRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let field = |k: usize| record.get(k).unwrap_or("").trim().to_string();
        let parse_opt = |k: usize| -> Result<Option<f64>> {
            let s = field(k);
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| HawkesError::Parse(format!("bad number {s}")))
            }
        };
        let bad = |what: &str| HawkesError::Parse(format!("bad {what} in test row"));
        rows.push(TestRow {
            day: field(0),
            target: field(1).parse::<usize>().map_err(|_| bad("target"))?.checked_sub(1).ok_or_else(|| bad("target"))?,
            exps: field(2).parse().map_err(|_| bad("M"))?,
            test: TestKind::from_code(&field(3)).ok_or_else(|| bad("test"))?,
            statistic: parse_opt(4)?,
            p_value: parse_opt(5)?,
            accept: field(6).parse().map_err(|_| bad("accept"))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{KernelParams, PiecewiseLinearBaseline};
    use approx::assert_relative_eq;

    #[test]
    fn poisson_residuals_are_scaled_gaps() {
        let model = HawkesModel::with_constant_baseline(&[1.0], KernelParams::zeros(1, 1, 1.0).unwrap(), 5.0).unwrap();
        let log = EventLog::new(vec![vec![1.0, 2.5, 3.0]], 5.0).unwrap();
        let r = residuals(&model, &log, 0, false).unwrap();
        assert_eq!(r.values.len(), 2);
        assert_relative_eq!(r.values[0], 1.5, epsilon = 1e-15);
        assert_relative_eq!(r.values[1], 0.5, epsilon = 1e-15);
        let lead = residuals(&model, &log, 0, true).unwrap();
        assert_eq!(lead.values.len(), 3);
        assert_relative_eq!(lead.values[0], 1.0, epsilon = 1e-15);

        let model2 = HawkesModel::with_constant_baseline(&[2.0], KernelParams::zeros(1, 1, 1.0).unwrap(), 5.0).unwrap();
        let r2 = residuals(&model2, &log, 0, false).unwrap();
        assert_relative_eq!(r2.values[0], 3.0, epsilon = 1e-15);
        assert_relative_eq!(r2.values[1], 1.0, epsilon = 1e-15);
    }

    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let whole = (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        rec(f, a, b, f(a), f(m), f(b), whole, tol, depth)
    }

    #[test]
    fn residuals_match_quadrature_of_intensity() {
        let kernel = KernelParams::new(1, 1, vec![0.8], vec![0.5]).unwrap();
        let baseline = PiecewiseLinearBaseline::new(vec![0.0, 3.0, 8.0], vec![0.5, 1.0, 0.2]).unwrap();
        let model = HawkesModel::new(vec![baseline], kernel).unwrap();
        let events = vec![0.4, 0.9, 1.0, 2.7, 3.3, 5.0, 7.9];
        let log = EventLog::new(vec![events.clone()], 8.0).unwrap();
        let r = residuals(&model, &log, 0, false).unwrap();
        for (k, w) in events.windows(2).enumerate() {
            // integrate piecewise between kinks (events and knots) so the integrand is smooth
            let lam = |t: f64| crate::model::intensity_at(&model, &log, 0, t).unwrap();
            let mut cuts = vec![w[0], w[1]];
            if w[0] < 3.0 && 3.0 < w[1] {
                cuts.insert(1, 3.0);
            }
            let quad: f64 = cuts.windows(2).map(|c| adaptive_simpson(&lam, c[0] + 1e-13, c[1], 1e-12, 40)).sum();
            assert!((r.values[k] - quad).abs() < 1e-6, "{} vs {quad}", r.values[k]);
        }
    }

    #[test]
    fn telescoping_identity_multivariate() {
        let kernel = KernelParams::new(2, 2, vec![0.3, 0.1, 0.2, 0.05, 0.1, 0.4, 0.2, 0.2], vec![0.5, 3.0, 1.0, 4.0, 0.2, 2.0, 0.7, 6.0]).unwrap();
        let baseline = PiecewiseLinearBaseline::uniform(20.0, vec![0.5, 0.2, 0.3, 0.6]).unwrap();
        let model = HawkesModel::new(vec![baseline.clone(), baseline], kernel).unwrap();
        let log = EventLog::new(vec![vec![0.0, 1.0, 2.0, 2.5, 8.0, 13.0, 19.5], vec![0.5, 1.0, 2.2, 7.0, 13.0, 20.0]], 20.0).unwrap();
        for target in 0..2 {
            let r = residuals(&model, &log, target, false).unwrap();
            let ev = log.events(target);
            let span = compensator(&model, &log, target, ev[ev.len() - 1]).unwrap() - compensator(&model, &log, target, ev[0]).unwrap();
            assert!((r.values.iter().sum::<f64>() - span).abs() < 1e-10);
            let lead = residuals(&model, &log, target, true).unwrap();
            assert!((lead.values.iter().sum::<f64>() - compensator(&model, &log, target, ev[ev.len() - 1]).unwrap()).abs() < 1e-10);
            assert_eq!(r.values.len() + 1, ev.len());
        }
    }

    #[test]
    fn battery_skips_empty_targets() {
        let model = HawkesModel::with_constant_baseline(&[1.0, 1.0], KernelParams::zeros(2, 1, 1.0).unwrap(), 100.0).unwrap();
        let first: Vec<f64> = (1..90).map(|k| k as f64 + 0.1 * ((k * 7) % 10) as f64).collect();
        let log = EventLog::new(vec![first, vec![]], 100.0).unwrap();
        let result = battery(&model, &log, &BatteryOptions::default()).unwrap();
        assert_eq!(result[0].outcomes.len(), 4);
        assert!(result[1].outcomes.is_empty() && result[1].notice.is_some());
        let summary = summarize(&result);
        assert!(summary.iter().all(|s| s.count == 1));
    }

    #[test]
    fn test_rows_round_trip() {
        let rows = vec![TestRow {
            day: "2013-09-02".into(),
            target: 2,
            exps: 3,
            test: TestKind::Kpss,
            statistic: Some(0.123456),
            p_value: Some(0.1),
            accept: true,
        }];
        let mut buf = Vec::new();
        write_test_rows(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "day,target,M,test,statistic,p_value,accept\n2013-09-02,3,3,KPSS,0.123456,0.100000,true\n");
        assert_eq!(read_test_rows(buf.as_slice()).unwrap(), rows);
    }
}
