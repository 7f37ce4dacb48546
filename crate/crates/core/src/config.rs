//! JSON run configuration for the command-line pipeline.
//!
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibrator::CalibrationOptions;
use crate::diagnostics::BatteryOptions;
use crate::error::{HawkesError, Result};
use crate::lob::{SessionWindow, DEFAULT_TICK_SIZE};
use crate::model::ModelDocument;
use crate::simulator::DEFAULT_MAX_EVENTS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every stage's outputs.
    pub output_dir: PathBuf,
    #[serde(default)]
    pub extract: Option<ExtractConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub calibrate: CalibrateConfig,
    #[serde(default)]
    pub diagnose: DiagnoseConfig,
    #[serde(default)]
    pub stability: Option<StabilityConfig>,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractConfig {
    pub ticks: PathBuf,
    /// Day key for files with numeric timestamps; ISO timestamps carry their own date.
    #[serde(default)]
    pub day: Option<String>,
    #[serde(default)]
    pub session: Option<SessionWindow>,
    #[serde(default = "default_tick_size")]
    pub tick_size: f64,
    #[serde(default = "yes")]
    pub strict_between_quotes: bool,
    #[serde(default)]
    pub include_passive: bool,
    #[serde(default)]
    pub book_trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Inline model document, or use `model_path`.
    #[serde(default)]
    pub model: Option<ModelDocument>,
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    /// One simulated session per day key; day `k` uses seed `seed + k`.
    pub days: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_events")]
    pub max_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    #[serde(rename = "M", default = "default_ms")]
    pub exps: Vec<usize>,
    /// Fit only the first `types` event types (default: all in the log).
    #[serde(default)]
    pub types: Option<usize>,
    #[serde(default)]
    pub options: CalibrationOptions,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self { exps: default_ms(), types: None, options: CalibrationOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    #[serde(default)]
    pub levels: Option<Levels>,
    #[serde(default)]
    pub lbq_lags: Option<usize>,
    #[serde(default)]
    pub include_leading: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Levels {
    pub ks: f64,
    pub ed: f64,
    pub lbq: f64,
    pub kpss: f64,
}

impl DiagnoseConfig {
    pub fn battery_options(&self) -> BatteryOptions {
        let mut o = BatteryOptions { lbq_lags: self.lbq_lags, include_leading: self.include_leading, ..Default::default() };
        if let Some(l) = self.levels {
            o.ks_level = l.ks;
            o.ed_level = l.ed;
            o.lbq_level = l.lbq;
            o.kpss_level = l.kpss;
        }
        o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    /// Day to recalibrate; defaults to the first available day.
    #[serde(default)]
    pub day: Option<String>,
    pub repeats: usize,
    #[serde(default = "yes")]
    pub vary_seed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    #[serde(default = "default_window")]
    pub window: f64,
    /// Wall-clock second of the session open, for hourly profiles.
    #[serde(default)]
    pub session_open: f64,
    #[serde(default)]
    pub rolling: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { window: default_window(), session_open: 0.0, rolling: false }
    }
}

fn default_tick_size() -> f64 {
    DEFAULT_TICK_SIZE
}
fn yes() -> bool {
    true
}
fn default_max_events() -> usize {
    DEFAULT_MAX_EVENTS
}
fn default_ms() -> Vec<usize> {
    vec![1, 2, 3]
}
fn default_window() -> f64 {
    300.0
}

fn config_err(msg: impl Into<String>) -> HawkesError {
    HawkesError::Config(msg.into())
}

fn check_level(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(config_err(format!("{name} level must lie in (0, 1), got {v}")));
    }
    Ok(())
}

/// Day keys become file names, so keep them to a safe alphabet.
pub fn check_day(day: &str) -> Result<()> {
    if day.is_empty() || !day.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(config_err(format!("day key {day:?} must be nonempty and use only [A-Za-z0-9_-]")));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config: Self = serde_json::from_str(text).map_err(|e| config_err(format!("config: {e}")))?;
        config.base_dir = base_dir.to_path_buf();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn validate(&self) -> Result<()> {
        if self.calibrate.exps.is_empty() || self.calibrate.exps.contains(&0) {
            return Err(config_err("M list must be nonempty with every M >= 1"));
        }
        if self.calibrate.types == Some(0) {
            return Err(config_err("types must be >= 1"));
        }
        self.calibrate.options.validate()?;
        if let Some(l) = self.diagnose.levels {
            check_level("ks", l.ks)?;
            check_level("ed", l.ed)?;
            check_level("lbq", l.lbq)?;
            check_level("kpss", l.kpss)?;
            crate::diagnostics::gof::kpss_critical_value(l.kpss).map_err(|e| config_err(e.to_string()))?;
        }
        if self.diagnose.lbq_lags == Some(0) {
            return Err(config_err("lbq_lags must be >= 1"));
        }
        if let Some(e) = &self.extract {
            if !(e.tick_size > 0.0 && e.tick_size.is_finite()) {
                return Err(config_err("tick_size must be > 0"));
            }
            if let Some(w) = e.session {
                if !(w.close > w.open) {
                    return Err(config_err("session close must be after open"));
                }
            }
            if let Some(d) = &e.day {
                check_day(d)?;
            }
        }
        if let Some(s) = &self.simulate {
            if s.model.is_some() == s.model_path.is_some() {
                return Err(config_err("simulate needs exactly one of model or model_path"));
            }
            if s.days.is_empty() {
                return Err(config_err("simulate needs at least one day"));
            }
            for d in &s.days {
                check_day(d)?;
            }
            if s.max_events == 0 {
                return Err(config_err("max_events must be >= 1"));
            }
        }
        if let Some(s) = &self.stability {
            if s.repeats < 2 {
                return Err(config_err(format!("stability repeats must be >= 2, got {}", s.repeats)));
            }
            if let Some(d) = &s.day {
                check_day(d)?;
            }
        }
        if !(self.report.window > 0.0 && self.report.window.is_finite()) {
            return Err(config_err("report window must be > 0"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let c = RunConfig::from_json(r#"{"output_dir": "out"}"#, Path::new("/tmp/x")).unwrap();
        assert_eq!(c.calibrate.exps, vec![1, 2, 3]);
        assert_eq!(c.output(), PathBuf::from("/tmp/x/out"));
        let bad = r#"{"output_dir": "out", "calibrate": {"options": {"tau_bounds": [0.0, 1.0]}}}"#;
        assert!(matches!(RunConfig::from_json(bad, Path::new(".")), Err(HawkesError::Config(_))));
        let typo = r#"{"output_dir": "out", "calibrat": {}}"#;
        assert!(RunConfig::from_json(typo, Path::new(".")).is_err());
        let one = r#"{"output_dir": "out", "stability": {"repeats": 1}}"#;
        assert!(RunConfig::from_json(one, Path::new(".")).is_err());
        let level = r#"{"output_dir": "o", "diagnose": {"levels": {"ks": 0.01, "ed": 0.01, "lbq": 1.5, "kpss": 0.05}}}"#;
        assert!(RunConfig::from_json(level, Path::new(".")).is_err());
        assert!(check_day("2024-01-02").is_ok() && check_day("../x").is_err());
    }
}
