//! Command-line pipeline: extract → calibrate → diagnose → report, plus
//! simulate and stability. Stages communicate through files under the
//! configured output directory:
//!
//! ```text
//! events/<day>.csv, events/<day>.json         event log and its metadata
//! fits/<day>_M<m>.json, .timing.json           calibration result, wall time
//! diagnostics/*.csv                            test rows and summary tables
//! stability/*.csv                              repeated-calibration tables
//! report/*.csv                                 plot-ready series
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrator::harness::{write_goodness_csv, write_parameter_csv, write_stability_samples, GoodnessRow, ParameterRow};
use crate::calibrator::{calibrate, fit_report, stability_run, CalibrationOptions, DayFit, FitDocument, FitResult};
use crate::config::{check_day, RunConfig};
use crate::diagnostics::{battery, write_test_rows, TestRow};
use crate::error::HawkesError;
use crate::lob::stats::{write_hourly_csv, write_intensity_csv, write_session_csv};
use crate::lob::{
    build_event_log, empirical_intensity, hourly_profile, parse_ticks, session_stats, split_by_day, write_book_trace,
    write_rejects, BuildOptions, ClassifyOptions, TickRecord,
};
use crate::model::{EventLog, HawkesModel, ModelDocument};
use crate::report::{write_box_csv, BoxStats};
use crate::simulator::{simulate, SimulationConfig, SimulationMetadata, GENERATOR};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_MISSING: i32 = 4;

const TYPE_LABELS: [&str; 8] = [
    "buy_moves_offer",
    "sell_moves_bid",
    "bid_between_quotes",
    "offer_between_quotes",
    "passive_buy",
    "passive_sell",
    "passive_bid",
    "passive_offer",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Extract,
    Simulate,
    Calibrate,
    Diagnose,
    Stability,
    Report,
}

#[derive(Debug, Parser)]
#[command(name = "hawkes-lob", version, about = "Hawkes process calibration and diagnostics for order book events")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    /// Recompute outputs that already exist.
    #[arg(long)]
    pub force: bool,
    /// Worker threads.
    #[arg(long, env = "HAWKES_LOB_JOBS")]
    pub jobs: Option<usize>,
    /// Overrides the configured base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parse and check the config, then exit.
    #[arg(long)]
    pub validate_config: bool,
    /// Rolling instead of binned intensity windows in `report`.
    #[arg(long)]
    pub rolling: bool,
}

#[derive(Debug)]
pub enum CliError {
    Input { kind: &'static str, path: Option<PathBuf>, message: String },
    Config(String),
    Missing(Vec<PathBuf>),
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Input { .. } => EXIT_INPUT,
            Self::Config(_) => EXIT_CONFIG,
            Self::Missing(_) => EXIT_MISSING,
            Self::Failed(_) => EXIT_FAILURE,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Self::Input { kind, path, message } => serde_json::json!({"error": kind, "path": path, "message": message}),
            Self::Config(m) => serde_json::json!({"error": "config_error", "message": m}),
            Self::Missing(paths) => serde_json::json!({
                "error": "missing_stage_outputs",
                "message": format!("{} required input(s) missing; run the earlier pipeline stage first", paths.len()),
                "missing": paths,
            }),
            Self::Failed(m) => serde_json::json!({"error": "failed", "message": m}),
        }
    }

    fn input(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::Input { kind: "input_invalid", path: Some(path.to_path_buf()), message: err.to_string() }
    }
}

impl From<HawkesError> for CliError {
    fn from(e: HawkesError) -> Self {
        match e {
            HawkesError::Config(m) => Self::Config(m),
            other => Self::Failed(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Input {
            kind: "input_not_found",
            path: Some(path.to_path_buf()),
            message: format!("{} does not exist", path.display()),
        },
        _ => CliError::input(path, e),
    })
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let fail = |e: std::io::Error| CliError::Failed(format!("writing {}: {e}", path.display()));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(fail)?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(fail)?;
    std::fs::rename(&tmp, path).map_err(fail)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> crate::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut text = serde_json::to_vec_pretty(value).map_err(|e| CliError::Failed(e.to_string()))?;
    text.push(b'\n');
    Ok(text)
}

fn warn(message: &str) {
    eprintln!("warning: {message}");
}

/// Sidecar describing a stored event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMeta {
    pub day: String,
    pub dim: usize,
    pub horizon: f64,
    pub labels: Vec<String>,
    pub counts: Vec<usize>,
    pub perturbations: usize,
    pub dropped: usize,
    pub source: String,
    pub warnings: Vec<String>,
}

struct Layout {
    root: PathBuf,
}

impl Layout {
    fn events_csv(&self, day: &str) -> PathBuf {
        self.root.join("events").join(format!("{day}.csv"))
    }
    fn events_meta(&self, day: &str) -> PathBuf {
        self.root.join("events").join(format!("{day}.json"))
    }
    fn fit(&self, day: &str, exps: usize) -> PathBuf {
        self.root.join("fits").join(format!("{day}_M{exps}.json"))
    }
    fn fit_timing(&self, day: &str, exps: usize) -> PathBuf {
        self.root.join("fits").join(format!("{day}_M{exps}.timing.json"))
    }
    fn dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Day keys with a stored event log, sorted.
    fn days(&self) -> Vec<String> {
        let Ok(entries) = std::fs::read_dir(self.root.join("events")) else {
            return Vec::new();
        };
        let mut days: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                let day = name.strip_suffix(".json")?;
                (!day.contains('.') && self.events_csv(day).exists()).then(|| day.to_string())
            })
            .collect();
        days.sort();
        days
    }

    fn load_log(&self, day: &str) -> CliResult<EventLog> {
        let meta_path = self.events_meta(day);
        let meta: EventMeta =
            serde_json::from_slice(&read_input(&meta_path)?).map_err(|e| CliError::input(&meta_path, e))?;
        let csv_path = self.events_csv(day);
        let log = EventLog::read_csv(read_input(&csv_path)?.as_slice(), meta.dim, meta.horizon)
            .map_err(|e| CliError::input(&csv_path, e))?;
        EventLog::with_labels(log.all_events().to_vec(), meta.horizon, meta.labels).map_err(|e| CliError::input(&meta_path, e))
    }

    fn store_log(&self, day: &str, log: &EventLog, perturbations: usize, source: &str, warnings: Vec<String>) -> CliResult<()> {
        let (quantized, perturbed, dropped) = log.quantized()?;
        write_atomic(&self.events_csv(day), &csv_bytes(|b| quantized.write_csv(b))?)?;
        let meta = EventMeta {
            day: day.to_string(),
            dim: quantized.dim(),
            horizon: quantized.horizon(),
            labels: quantized.labels().to_vec(),
            counts: quantized.counts(),
            perturbations: perturbations + perturbed,
            dropped,
            source: source.to_string(),
            warnings,
        };
        write_atomic(&self.events_meta(day), &json_bytes(&meta)?)
    }

    fn load_fit(&self, day: &str, exps: usize) -> CliResult<FitResult> {
        let path = self.fit(day, exps);
        let doc: FitDocument = serde_json::from_slice(&read_input(&path)?).map_err(|e| CliError::input(&path, e))?;
        FitResult::from_document(&doc).map_err(|e| CliError::input(&path, e))
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let text = read_input(&cli.config)?;
    let text = String::from_utf8(text).map_err(|e| CliError::Config(format!("config is not UTF-8: {e}")))?;
    let base = cli.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let config = RunConfig::from_json(&text, &base)?;
    if cli.validate_config {
        println!("config ok");
        return Ok(());
    }
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be >= 1".into()));
        }
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let layout = Layout { root: config.output() };
    match cli.command {
        Command::Extract => cmd_extract(&config, &layout),
        Command::Simulate => cmd_simulate(&config, &layout, cli.seed),
        Command::Calibrate => cmd_calibrate(&config, &layout, cli.force, cli.seed),
        Command::Diagnose => cmd_diagnose(&config, &layout),
        Command::Stability => cmd_stability(&config, &layout, cli.seed),
        Command::Report => cmd_report(&config, &layout, cli.rolling),
    }
}

fn cmd_extract(config: &RunConfig, layout: &Layout) -> CliResult<()> {
    let ex = config.extract.as_ref().ok_or_else(|| CliError::Config("config has no extract section".into()))?;
    let path = config.resolve(&ex.ticks);
    let parsed = parse_ticks(read_input(&path)?.as_slice()).map_err(|e| CliError::Input {
        kind: "parse_error",
        path: Some(path.clone()),
        message: e.to_string(),
    })?;
    if !parsed.rejects.is_empty() {
        warn(&format!("{} malformed tick row(s) rejected; see rejects.csv", parsed.rejects.len()));
    }
    let options = BuildOptions {
        classify: ClassifyOptions { tick_size: ex.tick_size, strict_between_quotes: ex.strict_between_quotes },
        include_passive: ex.include_passive,
        session: ex.session,
        trace: ex.book_trace,
    };
    let fallback = ex.day.clone().unwrap_or_else(|| "session".to_string());
    let mut days: Vec<(String, Vec<TickRecord>)> = split_by_day(&parsed.ticks)
        .into_iter()
        .map(|(d, t)| (d.map_or_else(|| fallback.clone(), |d| d.format("%Y-%m-%d").to_string()), t))
        .collect();
    if days.is_empty() {
        warn("no ticks in input: writing an empty session");
        days.push((fallback, Vec::new()));
    }
    let dim = if ex.include_passive { 8 } else { 4 };
    let labels: Vec<String> = TYPE_LABELS[..dim].iter().map(|s| s.to_string()).collect();
    let mut logs = Vec::new();
    for (day, ticks) in &days {
        check_day(day)?;
        let out = build_event_log(ticks, &options)?;
        for w in &out.warnings {
            warn(&format!("{day}: {w}"));
        }
        let log = EventLog::with_labels(out.log.all_events().to_vec(), out.log.horizon(), labels.clone())?;
        layout.store_log(day, &log, out.perturbations, "extract", out.warnings.clone())?;
        if ex.book_trace {
            let path = layout.dir("events").join(format!("{day}.book.csv"));
            write_atomic(&path, &csv_bytes(|b| write_book_trace(&out.trace, b))?)?;
        }
        logs.push(log);
    }
    write_atomic(&layout.dir("rejects.csv"), &csv_bytes(|b| write_rejects(&parsed.rejects, b))?)?;
    let stats = session_stats(&logs, dim);
    for w in &stats.warnings {
        warn(w);
    }
    write_atomic(&layout.dir("session_stats.csv"), &csv_bytes(|b| write_session_csv(&stats, &labels, b))?)
}

fn cmd_simulate(config: &RunConfig, layout: &Layout, seed: Option<u64>) -> CliResult<()> {
    let sim = config.simulate.as_ref().ok_or_else(|| CliError::Config("config has no simulate section".into()))?;
    let doc: ModelDocument = match (&sim.model, &sim.model_path) {
        (Some(doc), _) => doc.clone(),
        (None, Some(p)) => {
            let path = config.resolve(p);
            serde_json::from_slice(&read_input(&path)?).map_err(|e| CliError::input(&path, e))?
        }
        (None, None) => unreachable!("validated"),
    };
    let model = HawkesModel::from_document(&doc).map_err(|e| CliError::Config(format!("simulation model: {e}")))?;
    let base = seed.unwrap_or(sim.seed);
    for (k, day) in sim.days.iter().enumerate() {
        let cfg = SimulationConfig { horizon: model.horizon(), seed: base.wrapping_add(k as u64), max_events: sim.max_events };
        let out = simulate(&model, &cfg)?;
        for w in &out.stats.warnings {
            warn(&format!("{day}: {w}"));
        }
        layout.store_log(day, &out.log, 0, "simulate", out.stats.warnings.clone())?;
        let meta = SimulationMetadata {
            model: doc.clone(),
            seed: cfg.seed,
            generator: GENERATOR.to_string(),
            max_events: cfg.max_events,
            counts: out.log.counts(),
            stats: out.stats,
        };
        write_atomic(&layout.dir("events").join(format!("{day}.sim.json")), &json_bytes(&meta)?)?;
    }
    Ok(())
}

fn require_days(layout: &Layout) -> CliResult<Vec<String>> {
    let days = layout.days();
    if days.is_empty() {
        return Err(CliError::Missing(vec![layout.dir("events")]));
    }
    Ok(days)
}

fn fit_log(config: &RunConfig, log: &EventLog) -> CliResult<EventLog> {
    Ok(match config.calibrate.types {
        Some(t) => log.truncate_types(t)?,
        None => log.clone(),
    })
}

fn cmd_calibrate(config: &RunConfig, layout: &Layout, force: bool, seed: Option<u64>) -> CliResult<()> {
    let days = require_days(layout)?;
    let grid: Vec<(String, usize)> =
        days.iter().flat_map(|d| config.calibrate.exps.iter().map(move |&m| (d.clone(), m))).collect();
    let results: Vec<(String, usize, CliResult<Option<Vec<String>>>)> = grid
        .par_iter()
        .map(|(day, exps)| {
            let run = || -> CliResult<Option<Vec<String>>> {
                let path = layout.fit(day, *exps);
                if path.exists() && !force {
                    return Ok(None);
                }
                let log = fit_log(config, &layout.load_log(day)?)?;
                let options = CalibrationOptions {
                    exps: *exps,
                    seed: seed.unwrap_or(config.calibrate.options.seed),
                    ..config.calibrate.options.clone()
                };
                let fit = calibrate(&log, &options)?;
                write_atomic(&path, &json_bytes(&fit.to_document(&options))?)?;
                write_atomic(&layout.fit_timing(day, *exps), &json_bytes(&serde_json::json!({"wall_time_sec": fit.wall_time}))?)?;
                Ok(Some(fit.warnings))
            };
            (day.clone(), *exps, run())
        })
        .collect();
    let mut failures = Vec::new();
    for (day, exps, r) in results {
        match r {
            Ok(Some(warnings)) => warnings.iter().for_each(|w| warn(&format!("{day} M={exps}: {w}"))),
            Ok(None) => {}
            Err(e @ (CliError::Config(_) | CliError::Input { .. })) => return Err(e),
            Err(e) => {
                warn(&format!("{day} M={exps}: calibration failed: {}", e.to_json()["message"]));
                failures.push(format!("{day}_M{exps}"));
            }
        }
    }
    if failures.len() == grid.len() && !grid.is_empty() {
        return Err(CliError::Failed(format!("every calibration failed: {}", failures.join(", "))));
    }
    Ok(())
}

/// Loads the fit for every (day, M); a gap anywhere is reported all at once.
fn require_fits(config: &RunConfig, layout: &Layout, days: &[String]) -> CliResult<BTreeMap<(String, usize), FitResult>> {
    let missing: Vec<PathBuf> = days
        .iter()
        .flat_map(|d| config.calibrate.exps.iter().map(move |&m| layout.fit(d, m)))
        .filter(|p| !p.exists())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Missing(missing));
    }
    let mut fits = BTreeMap::new();
    for d in days {
        for &m in &config.calibrate.exps {
            fits.insert((d.clone(), m), layout.load_fit(d, m)?);
        }
    }
    Ok(fits)
}

fn cmd_diagnose(config: &RunConfig, layout: &Layout) -> CliResult<()> {
    let days = require_days(layout)?;
    let fits = require_fits(config, layout, &days)?;
    let options = config.diagnose.battery_options();
    let mut rows = Vec::new();
    let mut day_fits = Vec::new();
    for day in &days {
        let log = fit_log(config, &layout.load_log(day)?)?;
        for &m in &config.calibrate.exps {
            let fit = &fits[&(day.clone(), m)];
            if fit.model.dim() != log.dim() {
                return Err(CliError::Config(format!("fit {day}_M{m} has {} types but the log has {}", fit.model.dim(), log.dim())));
            }
            let batteries = battery(&fit.model, &log, &options)?;
            for b in &batteries {
                if let Some(n) = &b.notice {
                    warn(&format!("{day} M={m}: {n}"));
                }
                rows.extend(TestRow::from_battery(day, m, b));
            }
            day_fits.push(DayFit::new(day, fit, batteries));
        }
    }
    let report = fit_report(&day_fits);
    let dir = layout.dir("diagnostics");
    write_atomic(&dir.join("tests.csv"), &csv_bytes(|b| write_test_rows(&rows, b))?)?;
    write_atomic(&dir.join("goodness.csv"), &csv_bytes(|b| write_goodness_csv(&report.goodness, b))?)?;
    write_atomic(&dir.join("branching.csv"), &csv_bytes(|b| write_parameter_csv(&report.branching, b))?)?;
    write_atomic(&dir.join("half_life.csv"), &csv_bytes(|b| write_parameter_csv(&report.half_lives, b))?)
}

fn cmd_stability(config: &RunConfig, layout: &Layout, seed: Option<u64>) -> CliResult<()> {
    let st = config.stability.as_ref().ok_or_else(|| CliError::Config("config has no stability section".into()))?;
    let days = require_days(layout)?;
    let day = match &st.day {
        Some(d) if days.contains(d) => d.clone(),
        Some(d) => return Err(CliError::Missing(vec![layout.events_csv(d)])),
        None => days[0].clone(),
    };
    let log = fit_log(config, &layout.load_log(&day)?)?;
    let battery_options = config.diagnose.battery_options();
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    let mut dispersion = Vec::new();
    for &m in &config.calibrate.exps {
        let options = CalibrationOptions { exps: m, seed: seed.unwrap_or(config.calibrate.options.seed), ..config.calibrate.options.clone() };
        let report = stability_run(&log, &options, &battery_options, st.repeats, st.vary_seed)?;
        for r in report.repeats.iter().filter_map(|r| r.error.as_ref().map(|e| (r.repeat, e))) {
            warn(&format!("M={m} repeat {}: {}", r.0, r.1));
        }
        rows.push(GoodnessRow { exps: m, summary: report.summary.clone() });
        for (target, d) in report.branching.iter().enumerate() {
            if let Some(d) = d {
                dispersion.push((m, target, *d));
            }
        }
        samples.push(csv_bytes(|b| write_stability_samples(&report, b))?);
    }
    let dir = layout.dir("stability");
    write_atomic(&dir.join("stability.csv"), &csv_bytes(|b| write_goodness_csv(&rows, b))?)?;
    // one header, then each M's rows
    let mut merged = Vec::new();
    for (k, s) in samples.iter().enumerate() {
        let text = std::str::from_utf8(s).expect("utf-8 csv");
        let body = if k == 0 { text } else { text.split_once('\n').map_or("", |x| x.1) };
        merged.extend_from_slice(body.as_bytes());
    }
    write_atomic(&dir.join("samples.csv"), &merged)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Failed(e.to_string());
    w.write_record(["M", "type", "mean", "std", "cv", "repeats"]).map_err(io)?;
    for (m, target, d) in dispersion {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        w.write_record([m.to_string(), (target + 1).to_string(), format!("{:.6}", d.mean), f(d.std), f(d.cv()), d.count.to_string()])
            .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Failed(e.to_string()))?;
    write_atomic(&dir.join("branching_dispersion.csv"), &bytes)
}

fn cmd_report(config: &RunConfig, layout: &Layout, rolling: bool) -> CliResult<()> {
    let days = require_days(layout)?;
    let fits = require_fits(config, layout, &days)?;
    let dir = layout.dir("report");
    let rolling = rolling || config.report.rolling;
    let mut logs = Vec::new();
    for day in &days {
        let log = layout.load_log(day)?;
        let series = empirical_intensity(&log, config.report.window, rolling)?;
        write_atomic(&dir.join(format!("intensity_{day}.csv")), &csv_bytes(|b| write_intensity_csv(&series, log.labels(), b))?)?;
        logs.push(log);
    }
    let profile = hourly_profile(&logs, config.report.session_open);
    write_atomic(&dir.join("hourly.csv"), &csv_bytes(|b| write_hourly_csv(&profile, b))?)?;

    let mut baseline_rows = Vec::new();
    let mut branching_boxes = Vec::new();
    let mut half_life_boxes = Vec::new();
    for &m in &config.calibrate.exps {
        let per_day: Vec<&FitResult> = days.iter().map(|d| &fits[&(d.clone(), m)]).collect();
        let dim = per_day.iter().map(|f| f.model.dim()).min().unwrap_or(0);
        for target in 0..dim {
            let means: Vec<f64> = per_day.iter().map(|f| f.model.baseline(target).mean()).collect();
            if let Some(stats) = crate::calibrator::harness::Dispersion::of(&means) {
                baseline_rows.push(ParameterRow { exps: m, target, stats });
            }
            let n: Vec<f64> = per_day.iter().map(|f| f.branching[target][target]).collect();
            branching_boxes.push(("branching".to_string(), m, target, BoxStats::of(&n)?));
            let h: Vec<f64> = per_day.iter().map(|f| f.half_lives[target][target]).collect();
            half_life_boxes.push(("half_life".to_string(), m, target, BoxStats::of(&h)?));
        }
    }
    write_atomic(&dir.join("baseline_means.csv"), &csv_bytes(|b| write_parameter_csv(&baseline_rows, b))?)?;
    write_atomic(&dir.join("branching_box.csv"), &csv_bytes(|b| write_box_csv(&branching_boxes, b))?)?;
    write_atomic(&dir.join("half_life_box.csv"), &csv_bytes(|b| write_box_csv(&half_life_boxes, b))?)
}
