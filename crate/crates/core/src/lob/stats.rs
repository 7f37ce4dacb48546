//! Empirical intensity and session statistics of extracted event logs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::model::EventLog;

pub const DEFAULT_WINDOW: f64 = 300.0;

/// Event counts per window, per type. `times[k]` is the window end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensitySeries {
    pub window: f64,
    pub rolling: bool,
    pub times: Vec<f64>,
    /// `counts[type][k]`.
    pub counts: Vec<Vec<usize>>,
}

/// Counts events per non-overlapping window (the last one may be partial).
/// With `rolling`, counts over `(t - window, t]` sampled every `window / 10`.
pub fn empirical_intensity(log: &EventLog, window: f64, rolling: bool) -> Result<IntensitySeries> {
    if !(window > 0.0 && window.is_finite()) {
        return Err(HawkesError::domain(format!("window must be > 0, got {window}")));
    }
    let horizon = log.horizon();
    let (step, start) = if rolling { (window / 10.0, window.min(horizon)) } else { (window, window.min(horizon)) };
    let mut times = Vec::new();
    let mut k = 0usize;
    loop {
        let t = (start + k as f64 * step).min(horizon);
        times.push(t);
        if t >= horizon {
            break;
        }
        k += 1;
    }
    let counts = log
        .all_events()
        .iter()
        .map(|seq| {
            times
                .iter()
                .enumerate()
                .map(|(j, &end)| {
                    let begin = if rolling { end - window } else if j == 0 { 0.0 } else { times[j - 1] };
                    // windows starting at the origin also hold events at exactly t = 0
                    let begin = if begin <= 0.0 { f64::NEG_INFINITY } else { begin };
                    let lo = seq.partition_point(|&x| x <= begin);
                    let hi = seq.partition_point(|&x| x <= end);
                    hi - lo
                })
                .collect()
        })
        .collect();
    Ok(IntensitySeries { window, rolling, times, counts })
}

pub fn write_intensity_csv<W: Write>(series: &IntensitySeries, labels: &[String], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["window_end".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for (k, t) in series.times.iter().enumerate() {
        let mut rec = vec![format!("{t:.6}")];
        rec.extend(series.counts.iter().map(|c| c[k].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyProfile {
    /// Wall-clock hour of day.
    pub hour: u32,
    /// Per type, mean count in this hour across days.
    pub mean: Vec<f64>,
    /// Per type, sample standard deviation across days (0 for one day).
    pub sd: Vec<f64>,
}

/// Hourly event counts per type averaged over days. `open` is the
/// wall-clock second at which session time 0 falls.
pub fn hourly_profile(logs: &[EventLog], open: f64) -> Vec<HourlyProfile> {
    let Some(first) = logs.first() else {
        return Vec::new();
    };
    let dim = first.dim();
    let hour_of = |t: f64| ((open + t) / 3600.0).floor() as i64;
    let first_hour = hour_of(0.0);
    let last_hour = logs.iter().map(|l| hour_of(l.horizon()) - i64::from((open + l.horizon()) % 3600.0 == 0.0)).max().unwrap_or(first_hour);
    (first_hour..=last_hour.max(first_hour))
        .map(|h| {
            let per_day: Vec<Vec<f64>> = logs
                .iter()
                .map(|l| (0..dim.min(l.dim())).map(|r| l.events(r).iter().filter(|&&t| hour_of(t) == h).count() as f64).collect())
                .collect();
            let n = per_day.len() as f64;
            let mean: Vec<f64> = (0..dim).map(|r| per_day.iter().map(|d| d.get(r).copied().unwrap_or(0.0)).sum::<f64>() / n).collect();
            let sd = (0..dim)
                .map(|r| {
                    if per_day.len() < 2 {
                        0.0
                    } else {
                        let ss: f64 = per_day.iter().map(|d| (d.get(r).copied().unwrap_or(0.0) - mean[r]).powi(2)).sum();
                        (ss / (n - 1.0)).sqrt()
                    }
                })
                .collect();
            HourlyProfile { hour: h.rem_euclid(24) as u32, mean, sd }
        })
        .collect()
}

pub fn write_hourly_csv<W: Write>(profile: &[HourlyProfile], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["hour", "type", "mean", "sd"])?;
    for p in profile {
        for (r, (m, s)) in p.mean.iter().zip(&p.sd).enumerate() {
            w.write_record([p.hour.to_string(), (r + 1).to_string(), format!("{m:.6}"), format!("{s:.6}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub days: usize,
    pub total: Vec<usize>,
    pub mean: Vec<f64>,
    /// Sample standard deviation per type; 0 when `single_day`.
    pub sd: Vec<f64>,
    pub single_day: bool,
    pub warnings: Vec<String>,
}

/// Per-type totals, means and sample standard deviations of daily counts.
pub fn session_stats(logs: &[EventLog], dim: usize) -> SessionStats {
    let days = logs.len();
    let mut warnings = Vec::new();
    if days == 0 {
        warnings.push("no sessions: statistics are zero".to_string());
        return SessionStats { days, total: vec![0; dim], mean: vec![0.0; dim], sd: vec![0.0; dim], single_day: false, warnings };
    }
    let counts: Vec<Vec<usize>> = logs.iter().map(|l| (0..dim).map(|r| if r < l.dim() { l.events(r).len() } else { 0 }).collect()).collect();
    let total: Vec<usize> = (0..dim).map(|r| counts.iter().map(|c| c[r]).sum()).collect();
    let n = days as f64;
    let mean: Vec<f64> = total.iter().map(|t| *t as f64 / n).collect();
    let single_day = days == 1;
    if single_day {
        warnings.push("single day: standard deviation reported as 0".to_string());
    }
    let sd = (0..dim)
        .map(|r| {
            if single_day {
                0.0
            } else {
                (counts.iter().map(|c| (c[r] as f64 - mean[r]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            }
        })
        .collect();
    SessionStats { days, total, mean, sd, single_day, warnings }
}

/// Writes `type,label,total,mean_per_day,sd_per_day,days`.
pub fn write_session_csv<W: Write>(stats: &SessionStats, labels: &[String], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["type", "label", "total", "mean_per_day", "sd_per_day", "days"])?;
    for r in 0..stats.total.len() {
        w.write_record([
            (r + 1).to_string(),
            labels.get(r).cloned().unwrap_or_default(),
            stats.total[r].to_string(),
            format!("{:.6}", stats.mean[r]),
            format!("{:.6}", stats.sd[r]),
            stats.days.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{simulate, SimulationConfig};
    use crate::{HawkesModel, KernelParams, PiecewiseLinearBaseline};

    fn day_with(n: usize) -> EventLog {
        let seq: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) * 100.0 / n as f64).collect();
        EventLog::new(vec![seq], 100.0).unwrap()
    }

    #[test]
    fn table_one_totals() {
        let logs: Vec<EventLog> = [300, 310, 320, 330, 323].iter().map(|&n| day_with(n)).collect();
        let s = session_stats(&logs, 1);
        assert_eq!(s.total, vec![1583]);
        assert!((s.mean[0] - 316.6).abs() < 1e-12);
        let direct = ([300.0f64, 310.0, 320.0, 330.0, 323.0].iter().map(|c| (c - 316.6).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((s.sd[0] - direct).abs() < 1e-12);
        let one = session_stats(&logs[..1], 1);
        assert!(one.single_day && one.sd == vec![0.0]);
        let none = session_stats(&[], 4);
        assert_eq!(none.total, vec![0; 4]);
        assert!(!none.warnings.is_empty());
    }

    #[test]
    fn intensity_windows() {
        let log = EventLog::new(vec![(0..10).map(|k| k as f64 * 30.0).collect()], 300.0).unwrap();
        assert_eq!(empirical_intensity(&log, 300.0, false).unwrap().counts, vec![vec![10]]);
        let empty = EventLog::empty(2, 900.0).unwrap();
        let s = empirical_intensity(&empty, 300.0, false).unwrap();
        assert_eq!(s.counts, vec![vec![0, 0, 0]; 2]);
        assert!(empirical_intensity(&empty, 0.0, false).is_err());
        let r = empirical_intensity(&log, 100.0, true).unwrap();
        assert_eq!(r.times.len(), 21);
        assert_eq!(r.counts[0][0], 4);
    }

    #[test]
    fn poisson_window_mean() {
        let kernel = KernelParams::zeros(1, 1, 1.0).unwrap();
        let model = HawkesModel::with_constant_baseline(&[1.0], kernel, 30_000.0).unwrap();
        let log = simulate(&model, &SimulationConfig::new(30_000.0, 9)).unwrap().log;
        let s = empirical_intensity(&log, 300.0, false).unwrap();
        let mean = s.counts[0].iter().sum::<usize>() as f64 / s.counts[0].len() as f64;
        assert!((mean - 300.0).abs() < 3.0 * 300f64.sqrt());
    }

    #[test]
    fn hourly_profiles() {
        let kernel = KernelParams::zeros(1, 1, 1.0).unwrap();
        let horizon = 8.0 * 3600.0;
        let flat: Vec<f64> = (0..8 * 60).map(|k| k as f64 * 60.0 + 1.0).collect();
        let log = EventLog::new(vec![flat], horizon).unwrap();
        let p = hourly_profile(&[log.clone(), log], 9.0 * 3600.0);
        assert_eq!(p.len(), 8);
        assert_eq!(p[0].hour, 9);
        assert!(p.iter().all(|h| h.mean == vec![60.0] && h.sd == vec![0.0]));

        let u = PiecewiseLinearBaseline::new(vec![0.0, horizon / 2.0, horizon], vec![0.2, 0.02, 0.2]).unwrap();
        let model = HawkesModel::new(vec![u], kernel).unwrap();
        let logs: Vec<EventLog> = (0..3).map(|s| simulate(&model, &SimulationConfig::new(horizon, s)).unwrap().log).collect();
        let p = hourly_profile(&logs, 9.0 * 3600.0);
        let mid = (p[3].mean[0] + p[4].mean[0]) / 2.0;
        assert!(p[0].mean[0] > mid && p[7].mean[0] > mid);
    }
}
