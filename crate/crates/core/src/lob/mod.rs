//! Level-1 tick replay and event classification.
//!
//! Ticks update a top-of-book state; every tick is classified against the
//! book as it stood just before the tick. Types:
//!
//! | type | event |
//! |---|---|
//! | 1 | buy trade that moves the offer |
//! | 2 | sell trade that moves the bid |
//! | 3 | bid between the quotes |
//! | 4 | offer between the quotes |
//! | 5 | passive buy trade |
//! | 6 | passive sell trade |
//! | 7 | passive bid quote |
//! | 8 | passive offer quote |

pub mod stats;

use std::io::{Read, Write};

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::model::EventLog;

pub use stats::{empirical_intensity, hourly_profile, session_stats, HourlyProfile, IntensitySeries, SessionStats};

pub const DEFAULT_TICK_SIZE: f64 = 0.01;
pub const TIE_BREAK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TickKind {
    Trade,
    BidQuote,
    AskQuote,
}

impl TickKind {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "trade" => Some(Self::Trade),
            "bid_quote" | "bid" => Some(Self::BidQuote),
            "ask_quote" | "ask" => Some(Self::AskQuote),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    /// Seconds; for ISO-8601 input, seconds since midnight of `date`.
    pub timestamp: f64,
    pub kind: TickKind,
    pub price: f64,
    pub volume: f64,
    pub date: Option<NaiveDate>,
}

impl TickRecord {
    pub fn new(timestamp: f64, kind: TickKind, price: f64, volume: f64) -> Self {
        Self { timestamp, kind, price, volume, date: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based line in the input file, header included.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedTicks {
    pub ticks: Vec<TickRecord>,
    pub rejects: Vec<Reject>,
}

fn parse_timestamp(s: &str) -> Option<(f64, Option<NaiveDate>)> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some((v, None));
    }
    let naive = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| chrono::DateTime::parse_from_rfc3339(s).ok().map(|d| d.naive_local()))?;
    let secs = naive.num_seconds_from_midnight() as f64 + naive.nanosecond() as f64 * 1e-9;
    Some((secs, Some(naive.date())))
}

/// Reads `timestamp,kind,price,volume` rows. Row-level problems go to the
/// rejects list; a wrong header is fatal.
pub fn parse_ticks<R: Read>(reader: R) -> Result<ParsedTicks> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["timestamp", "kind", "price", "volume"] {
        return Err(HawkesError::Parse(format!("expected header timestamp,kind,price,volume, got {:?}", headers)));
    }
    let mut out = ParsedTicks::default();
    let mut last: Option<(Option<NaiveDate>, f64)> = None;
    for (k, record) in rdr.records().enumerate() {
        let line = k + 2;
        let mut reject = |reason: &str| out.rejects.push(Reject { line, reason: reason.to_string() });
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                reject("unreadable row");
                continue;
            }
        };
        if record.len() != 4 {
            reject("wrong field count");
            continue;
        }
        let Some((timestamp, date)) = parse_timestamp(&record[0]) else {
            reject("bad timestamp");
            continue;
        };
        let Some(kind) = TickKind::parse(&record[1]) else {
            reject("unknown kind");
            continue;
        };
        let (Ok(price), Ok(volume)) = (record[2].trim().parse::<f64>(), record[3].trim().parse::<f64>()) else {
            reject("bad number");
            continue;
        };
        if !(price > 0.0 && price.is_finite()) {
            reject("nonpositive price");
            continue;
        }
        if !(volume > 0.0 && volume.is_finite()) {
            reject("nonpositive volume");
            continue;
        }
        if let Some(prev) = last {
            if (date, timestamp) < prev {
                reject("time regression");
                continue;
            }
        }
        last = Some((date, timestamp));
        out.ticks.push(TickRecord { timestamp, kind, price, volume, date });
    }
    Ok(out)
}

pub fn write_rejects<W: Write>(rejects: &[Reject], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["line", "reason"])?;
    for r in rejects {
        w.write_record([r.line.to_string(), r.reason.clone()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BookState {
    pub bid: Option<(f64, f64)>,
    pub ask: Option<(f64, f64)>,
}

impl BookState {
    pub fn new(bid: f64, bid_volume: f64, ask: f64, ask_volume: f64) -> Self {
        Self { bid: Some((bid, bid_volume)), ask: Some((ask, ask_volume)) }
    }

    /// Both sides seen.
    pub fn valid(&self) -> bool {
        self.bid.is_some() && self.ask.is_some()
    }

    pub fn spread(&self) -> Option<f64> {
        Some(self.ask?.0 - self.bid?.0)
    }

    /// Applies a quote tick, replacing that side's level-1 price and volume.
    /// A quote that would cross the book is refused and the book is left as is.
    pub fn apply(&mut self, tick: &TickRecord) -> Result<()> {
        let next = match tick.kind {
            TickKind::Trade => return Ok(()),
            TickKind::BidQuote => Self { bid: Some((tick.price, tick.volume)), ..*self },
            TickKind::AskQuote => Self { ask: Some((tick.price, tick.volume)), ..*self },
        };
        if let (Some((b, _)), Some((a, _))) = (next.bid, next.ask) {
            if b >= a {
                return Err(HawkesError::Parse(format!("crossed book at t={}: bid {b} >= ask {a}", tick.timestamp)));
            }
        }
        *self = next;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub tick_size: f64,
    /// Types 3/4 also require the new quote to stay inside the spread.
    pub strict_between_quotes: bool,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self { tick_size: DEFAULT_TICK_SIZE, strict_between_quotes: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedEvent {
    pub timestamp: f64,
    /// 1..=8, or `None` when no predicate fires.
    pub event_type: Option<u8>,
    pub tick: TickRecord,
    pub reason: Option<String>,
}

/// Classifies `tick` against the book prevailing before it.
pub fn classify_event(tick: &TickRecord, book: &BookState, options: &ClassifyOptions) -> ClassifiedEvent {
    let (event_type, reason) = classify_inner(tick, book, options);
    ClassifiedEvent { timestamp: tick.timestamp, event_type, tick: *tick, reason: reason.map(str::to_string) }
}

fn classify_inner(tick: &TickRecord, book: &BookState, options: &ClassifyOptions) -> (Option<u8>, Option<&'static str>) {
    let (Some((bid, bid_vol)), Some((ask, ask_vol))) = (book.bid, book.ask) else {
        return (None, Some("book not yet valid"));
    };
    let eps = 0.5 * options.tick_size;
    let eq = |x: f64, y: f64| (x - y).abs() < eps;
    let gt = |x: f64, y: f64| x >= y + eps;
    let lt = |x: f64, y: f64| x <= y - eps;
    let p = tick.price;
    match tick.kind {
        TickKind::Trade => {
            let buy = gt(p, ask) || eq(p, ask);
            let sell = lt(p, bid) || eq(p, bid);
            match (buy, sell) {
                (true, true) => (None, Some("trade side ambiguous")),
                (false, false) => (None, Some("trade inside the spread")),
                (true, false) => {
                    if gt(p, ask) || tick.volume >= ask_vol {
                        (Some(1), None)
                    } else {
                        (Some(5), None)
                    }
                }
                (false, true) => {
                    if lt(p, bid) || tick.volume >= bid_vol {
                        (Some(2), None)
                    } else {
                        (Some(6), None)
                    }
                }
            }
        }
        TickKind::BidQuote => {
            if gt(p, bid) {
                if options.strict_between_quotes && !lt(p, ask) {
                    (None, Some("bid at or through the offer"))
                } else {
                    (Some(3), None)
                }
            } else if lt(p, bid) {
                (Some(7), None)
            } else {
                (None, Some("quote at the touch"))
            }
        }
        TickKind::AskQuote => {
            if lt(p, ask) {
                if options.strict_between_quotes && !gt(p, bid) {
                    (None, Some("offer at or through the bid"))
                } else {
                    (Some(4), None)
                }
            } else if gt(p, ask) {
                (Some(8), None)
            } else {
                (None, Some("quote at the touch"))
            }
        }
    }
}

/// Session window in tick-timestamp seconds; ticks outside are discarded and
/// event times are measured from `open`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionWindow {
    pub open: f64,
    pub close: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub classify: ClassifyOptions,
    /// Emit types 5..=8 as well as 1..=4.
    pub include_passive: bool,
    pub session: Option<SessionWindow>,
    pub trace: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { classify: ClassifyOptions::default(), include_passive: false, session: None, trace: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BookSnapshot {
    pub timestamp: f64,
    pub bid: f64,
    pub bid_volume: f64,
    pub ask: f64,
    pub ask_volume: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedLog {
    pub log: EventLog,
    pub classified: Vec<ClassifiedEvent>,
    /// Counts per type 1..=8 before filtering to the emitted types.
    pub type_counts: [usize; 8],
    pub perturbations: usize,
    /// Book after each tick, while valid (session-relative times).
    pub trace: Vec<BookSnapshot>,
    pub warnings: Vec<String>,
}

/// Replays ticks and collects per-type event times.
pub fn build_event_log(ticks: &[TickRecord], options: &BuildOptions) -> Result<ExtractedLog> {
    let dim = if options.include_passive { 8 } else { 4 };
    let (open, close) = match options.session {
        Some(w) => {
            if !(w.close > w.open) {
                return Err(HawkesError::Config(format!("session window [{}, {}] is empty", w.open, w.close)));
            }
            (w.open, w.close)
        }
        None => (0.0, ticks.iter().map(|t| t.timestamp).fold(0.0, f64::max)),
    };
    let horizon = if close > open { close - open } else { 1.0 };
    let mut book = BookState::default();
    let mut events = vec![Vec::<f64>::new(); dim];
    let mut classified = Vec::new();
    let mut type_counts = [0usize; 8];
    let mut perturbations = 0;
    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut crossed = 0;

    for tick in ticks.iter().filter(|t| t.timestamp >= open && t.timestamp <= close) {
        let mut event = classify_event(tick, &book, &options.classify);
        event.timestamp = tick.timestamp - open;
        if let Some(ty) = event.event_type {
            type_counts[ty as usize - 1] += 1;
            let r = ty as usize - 1;
            if r < dim {
                let seq = &mut events[r];
                let mut t = event.timestamp;
                if let Some(&prev) = seq.last() {
                    if t <= prev {
                        t = prev + TIE_BREAK;
                        perturbations += 1;
                    }
                }
                if t <= horizon {
                    seq.push(t);
                } else {
                    warnings.push(format!("type {ty} event at {t} pushed past the session end, dropped"));
                }
            }
        }
        classified.push(event);
        if book.apply(tick).is_err() {
            crossed += 1;
        }
        if options.trace {
            if let (Some((b, bv)), Some((a, av))) = (book.bid, book.ask) {
                trace.push(BookSnapshot { timestamp: tick.timestamp - open, bid: b, bid_volume: bv, ask: a, ask_volume: av });
            }
        }
    }
    if crossed > 0 {
        warnings.push(format!("{crossed} quote(s) would have crossed the book and were ignored"));
    }
    if !book.valid() {
        warnings.push("session never had a valid book; event log is empty".to_string());
    }
    let log = EventLog::new(events, horizon)?;
    Ok(ExtractedLog { log, classified, type_counts, perturbations, trace, warnings })
}

pub fn write_book_trace<W: Write>(trace: &[BookSnapshot], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "bid", "bid_vol", "ask", "ask_vol"])?;
    for s in trace {
        w.write_record([
            format!("{:.6}", s.timestamp),
            format!("{:.6}", s.bid),
            format!("{:.6}", s.bid_volume),
            format!("{:.6}", s.ask),
            format!("{:.6}", s.ask_volume),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Splits ticks by calendar date; numeric-timestamp ticks share the `None` key.
pub fn split_by_day(ticks: &[TickRecord]) -> Vec<(Option<NaiveDate>, Vec<TickRecord>)> {
    let mut days: Vec<(Option<NaiveDate>, Vec<TickRecord>)> = Vec::new();
    for t in ticks {
        match days.last_mut() {
            Some((d, v)) if *d == t.date => v.push(*t),
            _ => days.push((t.date, vec![*t])),
        }
    }
    days
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn book() -> BookState {
        BookState::new(99.0, 100.0, 100.0, 100.0)
    }

    fn ty(kind: TickKind, price: f64, volume: f64) -> Option<u8> {
        classify_event(&TickRecord::new(1.0, kind, price, volume), &book(), &ClassifyOptions::default()).event_type
    }

    #[test]
    fn documented_examples() {
        assert_eq!(ty(TickKind::Trade, 101.0, 50.0), Some(1));
        assert_eq!(ty(TickKind::Trade, 100.0, 40.0), Some(5));
        assert_eq!(ty(TickKind::BidQuote, 99.5, 10.0), Some(3));
        assert_eq!(ty(TickKind::BidQuote, 98.0, 10.0), Some(7));
    }

    #[test]
    fn boundaries() {
        // equal volume at the touch is aggressive
        assert_eq!(ty(TickKind::Trade, 100.0, 100.0), Some(1));
        assert_eq!(ty(TickKind::Trade, 99.0, 100.0), Some(2));
        assert_eq!(ty(TickKind::Trade, 99.0, 99.0), Some(6));
        assert_eq!(ty(TickKind::Trade, 99.5, 10.0), None);
        assert_eq!(ty(TickKind::BidQuote, 99.0, 10.0), None);
        assert_eq!(ty(TickKind::AskQuote, 100.0, 10.0), None);
        // within half a tick counts as equal
        assert_eq!(ty(TickKind::Trade, 100.004, 40.0), Some(5));
        assert_eq!(ty(TickKind::BidQuote, 100.0, 10.0), None);
        let loose = ClassifyOptions { strict_between_quotes: false, ..Default::default() };
        let t = TickRecord::new(1.0, TickKind::BidQuote, 100.5, 1.0);
        assert_eq!(classify_event(&t, &book(), &loose).event_type, Some(3));
        let t = TickRecord::new(1.0, TickKind::Trade, 100.0, 1.0);
        assert_eq!(classify_event(&t, &BookState::default(), &loose).reason.as_deref(), Some("book not yet valid"));
    }

    #[test]
    fn parse_examples_and_rejects() {
        let text = "timestamp,kind,price,volume\n1.5,trade,100.0,200\n1.6,bid_quote,99,0\n1.0,ask_quote,101,5\n2.0,trade,-1,5\n2.0,cancel,1,1\n";
        let parsed = parse_ticks(text.as_bytes()).unwrap();
        assert_eq!(parsed.ticks, vec![TickRecord::new(1.5, TickKind::Trade, 100.0, 200.0)]);
        let reasons: Vec<_> = parsed.rejects.iter().map(|r| (r.line, r.reason.as_str())).collect();
        assert_eq!(reasons, vec![(3, "nonpositive volume"), (4, "time regression"), (5, "nonpositive price"), (6, "unknown kind")]);
        assert!(parse_ticks("a,b\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        write_rejects(&parsed.rejects[..1], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "line,reason\n3,nonpositive volume\n");
    }

    #[test]
    fn iso_timestamps() {
        let text = "timestamp,kind,price,volume\n2024-03-01T09:00:01.250,trade,1,1\n2024-03-02 08:00:00,trade,1,1\n";
        let parsed = parse_ticks(text.as_bytes()).unwrap();
        assert!(parsed.rejects.is_empty());
        assert!((parsed.ticks[0].timestamp - 32_401.25).abs() < 1e-9);
        let days = split_by_day(&parsed.ticks);
        assert_eq!(days.len(), 2);
        assert_eq!(days[1].0, NaiveDate::from_ymd_opt(2024, 3, 2));
    }

    #[test]
    fn single_aggressive_buy_and_tie_break() {
        let ticks = vec![
            TickRecord::new(0.0, TickKind::BidQuote, 99.0, 100.0),
            TickRecord::new(0.0, TickKind::AskQuote, 100.0, 100.0),
            TickRecord::new(5.0, TickKind::Trade, 101.0, 10.0),
            TickRecord::new(5.0, TickKind::Trade, 101.0, 10.0),
        ];
        let out = build_event_log(&ticks[..3], &BuildOptions::default()).unwrap();
        assert_eq!(out.log.counts(), vec![1, 0, 0, 0]);
        let out = build_event_log(&ticks, &BuildOptions { session: Some(SessionWindow { open: 0.0, close: 10.0 }), ..Default::default() }).unwrap();
        assert_eq!(out.log.events(0), &[5.0, 5.0 + 1e-6]);
        assert_eq!(out.perturbations, 1);
    }

    #[test]
    fn no_valid_book_gives_empty_log() {
        let ticks = vec![TickRecord::new(1.0, TickKind::Trade, 100.0, 1.0)];
        let out = build_event_log(&ticks, &BuildOptions::default()).unwrap();
        assert_eq!(out.log.total(), 0);
        assert!(!out.warnings.is_empty());
    }

    fn arb_tick() -> impl Strategy<Value = TickRecord> {
        (0..3u8, 9_000..11_000i64, 1..500u32).prop_map(|(k, cents, v)| {
            let kind = [TickKind::Trade, TickKind::BidQuote, TickKind::AskQuote][k as usize];
            TickRecord::new(0.0, kind, cents as f64 / 100.0, v as f64)
        })
    }

    proptest! {
        #[test]
        fn classification_is_exclusive(bid in 9_500..10_000i64, gap in 1..200i64, bv in 1..500u32, av in 1..500u32, tick in arb_tick()) {
            let book = BookState::new(bid as f64 / 100.0, bv as f64, (bid + gap) as f64 / 100.0, av as f64);
            let e = classify_event(&tick, &book, &ClassifyOptions::default());
            let (p, v) = (tick.price, tick.volume);
            let (b, a) = (book.bid.unwrap().0, book.ask.unwrap().0);
            let close = |x: f64, y: f64| (x - y).abs() < 0.005;
            let preds = match tick.kind {
                TickKind::Trade => [
                    (p > a + 0.005) || (close(p, a) && v >= av as f64),
                    (p < b - 0.005) || (close(p, b) && v >= bv as f64),
                    false, false,
                    close(p, a) && v < av as f64,
                    close(p, b) && v < bv as f64,
                    false, false,
                ],
                TickKind::BidQuote => [false, false, p > b + 0.005 && p < a - 0.005, false, false, false, p < b - 0.005, false],
                TickKind::AskQuote => [false, false, false, p < a - 0.005 && p > b + 0.005, false, false, false, p > a + 0.005],
            };
            prop_assert!(preds.iter().filter(|x| **x).count() <= 1);
            let expected = preds.iter().position(|x| *x).map(|k| k as u8 + 1);
            prop_assert_eq!(e.event_type, expected);
        }

        #[test]
        fn replay_is_deterministic_and_spread_moves_as_typed(seq in proptest::collection::vec(arb_tick(), 1..80)) {
            let mut ticks = vec![
                TickRecord::new(0.0, TickKind::BidQuote, 99.0, 100.0),
                TickRecord::new(0.0, TickKind::AskQuote, 101.0, 100.0),
            ];
            for (k, mut t) in seq.into_iter().enumerate() {
                t.timestamp = 1.0 + k as f64;
                ticks.push(t);
            }
            let opts = BuildOptions { trace: true, include_passive: true, ..Default::default() };
            let a = build_event_log(&ticks, &opts).unwrap();
            let b = build_event_log(&ticks, &opts).unwrap();
            prop_assert_eq!(&a.log, &b.log);
            // quotes: compare the spread before and after each quote event
            let mut book = BookState::default();
            for t in &ticks {
                let before = book;
                let ty = classify_event(t, &before, &opts.classify).event_type;
                let applied = book.apply(t).is_ok();
                if let (Some(ty), Some(s0), true) = (ty, before.spread(), applied) {
                    let s1 = book.spread().unwrap();
                    match ty {
                        3 | 4 => prop_assert!(s1 < s0),
                        7 | 8 => prop_assert!(s1 > s0),
                        _ => prop_assert!(s1 >= s0 - 1e-12),
                    }
                }
            }
        }
    }
}
