//! Alert data model and the line-delimited interchange format.
//!
//! An alert is one detected malicious event, a tuple of detection time,
//! source IPv4 address, category, volume and detector identifier. Alerts are
//! exchanged as UTF-8 line-delimited JSON, one object per line:
//!
//! ```text
//! {"ts":"2017-09-01T00:00:00Z","src":"192.0.2.7","cat":"scan","vol":12,"det":"hp1"}
//! ```
//!
//! Keys: `ts` (RFC 3339), `src` (dotted quad) or `srcs` (array of dotted
//! quads), `cat` (`"scan"` | `"access"`), `vol` (non-negative integer),
//! `det` (non-empty string). Lines beginning with `#` are comments. A record
//! with `srcs` stands for one event observed from several sources and is
//! expanded into one alert per source with the total volume split evenly
//! (see [`expand_multisource`]).

use std::fmt;
use std::io::BufRead;
use std::net::Ipv4Addr;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seconds since the Unix epoch, UTC, second resolution.
pub type Timestamp = i64;

/// One day in seconds.
pub const SECS_PER_DAY: i64 = 86_400;

/// Alert category. Only port scans and unauthorized access attempts are
/// modeled; records of any other category are rejected at parse time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Scan,
    Access,
}

impl Category {
    /// Stable integer code used in serialized forms: 0 = scan, 1 = access.
    pub fn code(self) -> u8 {
        match self {
            Category::Scan => 0,
            Category::Access => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Category> {
        match code {
            0 => Some(Category::Scan),
            1 => Some(Category::Access),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Scan => "scan",
            Category::Access => "access",
        }
    }

    /// Both categories, in code order.
    pub const ALL: [Category; 2] = [Category::Scan, Category::Access];
}

impl FromStr for Category {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scan" => Ok(Category::Scan),
            "access" => Ok(Category::Access),
            other => Err(ParseError::invalid("cat", format!("unknown category {other:?}"))),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One detected malicious event. Immutable once constructed; all invariants
/// (valid IPv4, known category, non-negative volume) are enforced by the
/// field types and the parser.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alert {
    t: Timestamp,
    e: Ipv4Addr,
    c: Category,
    v: u64,
    d: String,
}

impl Alert {
    pub fn new(t: Timestamp, e: Ipv4Addr, c: Category, v: u64, d: impl Into<String>) -> Alert {
        Alert { t, e, c, v, d: d.into() }
    }

    /// Detection time, seconds since epoch.
    pub fn time(&self) -> Timestamp {
        self.t
    }

    /// Source entity.
    pub fn source(&self) -> Ipv4Addr {
        self.e
    }

    pub fn category(&self) -> Category {
        self.c
    }

    /// Event volume, e.g. number of connection attempts.
    pub fn volume(&self) -> u64 {
        self.v
    }

    pub fn detector(&self) -> &str {
        &self.d
    }
}

/// Half-open time interval `[start, end)` over integer seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeRange {
    pub fn new(start: Timestamp, end: Timestamp) -> TimeRange {
        TimeRange { start, end }
    }

    /// The interval `(start, end]`. Exact over integer-second timestamps.
    pub fn left_open(start: Timestamp, end_inclusive: Timestamp) -> TimeRange {
        TimeRange { start: start + 1, end: end_inclusive + 1 }
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t < self.end
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

/// Prediction-time anchor and window lengths in whole days.
///
/// The history window `[t0 - w_h days, t0)` supplies features; the
/// prediction window `(t0, t0 + w_p days]` defines labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub t0: Timestamp,
    pub w_h: u32,
    pub w_p: u32,
}

impl WindowConfig {
    pub fn new(t0: Timestamp, w_h: u32, w_p: u32) -> Result<WindowConfig, ParseError> {
        if w_h < 1 {
            return Err(ParseError::invalid("w_h", "history window must be at least 1 day"));
        }
        if w_p < 1 {
            return Err(ParseError::invalid("w_p", "prediction window must be at least 1 day"));
        }
        Ok(WindowConfig { t0, w_h, w_p })
    }

    /// 7-day history, 1-day prediction.
    pub fn standard(t0: Timestamp) -> WindowConfig {
        WindowConfig { t0, w_h: 7, w_p: 1 }
    }

    /// History window `[t0 - w_h days, t0)`.
    pub fn history(&self) -> TimeRange {
        TimeRange::new(self.t0 - i64::from(self.w_h) * SECS_PER_DAY, self.t0)
    }

    /// Prediction window `(t0, t0 + w_p days]`.
    pub fn prediction(&self) -> TimeRange {
        TimeRange::left_open(self.t0, self.t0 + i64::from(self.w_p) * SECS_PER_DAY)
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },
}

impl ParseError {
    fn invalid(field: &'static str, reason: impl Into<String>) -> ParseError {
        ParseError::InvalidField { field, reason: reason.into() }
    }
}

/// A parse error with the 1-based line number it occurred on.
#[derive(Debug, Error)]
#[error("line {line}: {error}")]
pub struct LineError {
    pub line: u64,
    #[source]
    pub error: ParseError,
}

/// A validated interchange record before multi-source expansion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub t: Timestamp,
    pub sources: Vec<Ipv4Addr>,
    pub c: Category,
    pub v: u64,
    pub d: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRecord {
    ts: String,
    #[serde(default)]
    src: Option<String>,
    #[serde(default)]
    srcs: Option<Vec<String>>,
    cat: String,
    vol: i64,
    det: String,
}

#[derive(Serialize)]
struct WireAlert<'a> {
    ts: String,
    src: &'a Ipv4Addr,
    cat: &'a str,
    vol: u64,
    det: &'a str,
}

/// Parse an RFC 3339 timestamp to epoch seconds.
pub fn parse_ts(s: &str) -> Result<Timestamp, ParseError> {
    DateTime::parse_from_rfc3339(s)
        .map(|dt| dt.timestamp())
        .map_err(|e| ParseError::invalid("ts", e.to_string()))
}

/// Format epoch seconds as RFC 3339 UTC (`2017-09-01T00:00:00Z`).
pub fn format_ts(t: Timestamp) -> String {
    Utc.timestamp_opt(t, 0)
        .single()
        .expect("timestamp in range")
        .to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn parse_ipv4(s: &str) -> Result<Ipv4Addr, ParseError> {
    s.parse::<Ipv4Addr>()
        .map_err(|_| ParseError::invalid("src", format!("{s:?} is not a valid IPv4 address")))
}

/// Parse one interchange line into a validated record, without expanding
/// multi-source entries.
pub fn parse_record(line: &str) -> Result<RawRecord, ParseError> {
    let wire: WireRecord = serde_json::from_str(line)
        .map_err(|e| ParseError::MalformedRecord(e.to_string()))?;
    let t = parse_ts(&wire.ts)?;
    let c: Category = wire.cat.parse()?;
    if wire.vol < 0 {
        return Err(ParseError::invalid("vol", "volume must be non-negative"));
    }
    if wire.det.is_empty() {
        return Err(ParseError::invalid("det", "detector identifier must be non-empty"));
    }
    let sources = match (wire.src, wire.srcs) {
        (Some(one), None) => vec![parse_ipv4(&one)?],
        (None, Some(many)) => {
            if many.is_empty() {
                return Err(ParseError::MalformedRecord(
                    "multi-source record with no sources".into(),
                ));
            }
            many.iter().map(|s| parse_ipv4(s)).collect::<Result<Vec<_>, _>>()?
        }
        (Some(_), Some(_)) => {
            return Err(ParseError::MalformedRecord(
                "record has both `src` and `srcs`".into(),
            ))
        }
        (None, None) => {
            return Err(ParseError::MalformedRecord(
                "record has neither `src` nor `srcs`".into(),
            ))
        }
    };
    Ok(RawRecord { t, sources, c, v: wire.vol as u64, d: wire.det })
}

/// Parse a single-source interchange line into an alert.
///
/// Multi-source records (`srcs`) are rejected here; parse them with
/// [`parse_record`] and expand with [`expand_multisource`].
pub fn parse_alert(line: &str) -> Result<Alert, ParseError> {
    let rec = parse_record(line)?;
    if rec.sources.len() != 1 {
        return Err(ParseError::MalformedRecord(
            "multi-source record; expand with expand_multisource".into(),
        ));
    }
    let RawRecord { t, sources, c, v, d } = rec;
    Ok(Alert::new(t, sources[0], c, v, d))
}

/// Expand a record with k sources into k alerts, one per source.
///
/// The total volume is preserved exactly: every alert gets `v / k` and the
/// first `v mod k` sources get one extra unit.
pub fn expand_multisource(record: &RawRecord) -> Result<Vec<Alert>, ParseError> {
    let k = record.sources.len() as u64;
    if k == 0 {
        return Err(ParseError::MalformedRecord("multi-source record with no sources".into()));
    }
    let base = record.v / k;
    let extra = record.v % k;
    Ok(record
        .sources
        .iter()
        .enumerate()
        .map(|(i, &ip)| {
            let v = base + u64::from((i as u64) < extra);
            Alert::new(record.t, ip, record.c, v, record.d.clone())
        })
        .collect())
}

/// Serialize an alert as one interchange line (no trailing newline).
pub fn render_alert(a: &Alert) -> String {
    let wire = WireAlert {
        ts: format_ts(a.t),
        src: &a.e,
        cat: a.c.as_str(),
        vol: a.v,
        det: &a.d,
    };
    serde_json::to_string(&wire).expect("alert serializes")
}

/// Iterator over the alerts of a line-delimited stream, expanding multi-source
/// records and skipping comment and blank lines.
pub struct AlertReader<R> {
    lines: std::io::Lines<R>,
    line_no: u64,
    pending: std::vec::IntoIter<Alert>,
}

impl<R: BufRead> AlertReader<R> {
    pub fn new(reader: R) -> AlertReader<R> {
        AlertReader { lines: reader.lines(), line_no: 0, pending: Vec::new().into_iter() }
    }
}

impl<R: BufRead> Iterator for AlertReader<R> {
    type Item = Result<Alert, LineError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(alert) = self.pending.next() {
                return Some(Ok(alert));
            }
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => {
                    return Some(Err(LineError {
                        line: self.line_no + 1,
                        error: ParseError::MalformedRecord(e.to_string()),
                    }))
                }
            };
            self.line_no += 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            match parse_record(trimmed).and_then(|rec| expand_multisource(&rec)) {
                Ok(alerts) => self.pending = alerts.into_iter(),
                Err(error) => return Some(Err(LineError { line: self.line_no, error })),
            }
        }
    }
}

/// Read every alert of a line-delimited stream, failing on the first bad line.
pub fn read_alerts<R: BufRead>(reader: R) -> Result<Vec<Alert>, LineError> {
    AlertReader::new(reader).collect()
}
