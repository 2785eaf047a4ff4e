//! Event logs: parsing (CSV, XES), vocabularies, train/validation/test
//! splitting and the on-disk cache.

pub mod cache;
mod csv;
mod split;
mod synthetic;
pub mod vocab;
mod xes;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::csv::{parse_csv, parse_csv_reader, ColumnMap};
pub use self::split::{split_log, SplitRatios};
pub use self::synthetic::rule_log;
pub use self::vocab::{ClassSpace, Vocab, VocabKind};
pub use self::xes::{parse_xes, parse_xes_reader};

pub const MILLIS_PER_HOUR: f64 = 3_600_000.0;

/// Attribute key used for the lifecycle transition of an event.
pub const LIFECYCLE_KEY: &str = "lifecycle:transition";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing column `{0}` in CSV header")]
    MissingColumn(String),
    #[error("unparseable timestamp `{value}` at row {row}")]
    UnparseableTimestamp { row: usize, value: String },
    #[error("empty activity at row {0}")]
    EmptyActivity(usize),
    #[error("event log is empty")]
    EmptyLog,
    #[error("malformed CSV: {0}")]
    Csv(#[from] ::csv::Error),
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("trace {0} has no concept:name")]
    MissingConceptName(usize),
    #[error("event {event} of trace {trace} has no {key}")]
    MissingEventAttribute {
        trace: usize,
        event: usize,
        key: &'static str,
    },
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    InvalidRatios([f64; 3]),
    #[error("duplicate case id `{0}`")]
    DuplicateCase(String),
    #[error("corrupt cache: {0}")]
    CorruptCache(String),
}

pub type Result<T, E = LogError> = std::result::Result<T, E>;

/// One step of a process execution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    /// UTC milliseconds since the Unix epoch.
    pub timestamp_ms: i64,
    pub resource: Option<String>,
    pub extras: BTreeMap<String, String>,
}

impl Event {
    pub fn new(case_id: &str, activity: &str, timestamp_ms: i64, resource: Option<&str>) -> Self {
        Self {
            case_id: case_id.to_owned(),
            activity: activity.to_owned(),
            timestamp_ms,
            resource: resource.map(str::to_owned),
            extras: BTreeMap::new(),
        }
    }

    pub fn lifecycle(&self) -> Option<&str> {
        self.extras.get(LIFECYCLE_KEY).map(String::as_str)
    }
}

/// Hours elapsed from `from` to `to`.
pub fn hours_between(from_ms: i64, to_ms: i64) -> f64 {
    (to_ms - from_ms) as f64 / MILLIS_PER_HOUR
}

/// The time-ordered events of a single case.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Checks the shared case id, non-decreasing timestamps and non-emptiness.
    pub fn is_valid(&self) -> bool {
        !self.events.is_empty()
            && self.events.iter().all(|e| e.case_id == self.case_id)
            && self
                .events
                .windows(2)
                .all(|w| w[0].timestamp_ms <= w[1].timestamp_ms)
    }

    pub fn duration_hours(&self) -> f64 {
        match (self.events.first(), self.events.last()) {
            (Some(a), Some(b)) => hours_between(a.timestamp_ms, b.timestamp_ms),
            _ => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventLog {
    pub traces: Vec<Trace>,
    pub activity_vocab: Vocab,
    pub resource_vocab: Vocab,
}

impl EventLog {
    /// Groups events by case (cases ordered by first appearance) and sorts
    /// each case stably by timestamp. Vocabularies cover everything observed.
    pub fn from_events(events: Vec<Event>) -> Result<Self> {
        if events.is_empty() {
            return Err(LogError::EmptyLog);
        }
        let mut order: Vec<String> = Vec::new();
        let mut groups: HashMap<String, Vec<Event>> = HashMap::new();
        for event in events {
            let group = groups.entry(event.case_id.clone()).or_insert_with(|| {
                order.push(event.case_id.clone());
                Vec::new()
            });
            group.push(event);
        }
        let traces = order
            .into_iter()
            .map(|case_id| {
                let mut events = groups.remove(&case_id).unwrap_or_default();
                events.sort_by_key(|e| e.timestamp_ms);
                Trace { case_id, events }
            })
            .collect();
        Ok(Self::with_own_vocabs(traces))
    }

    /// Wraps traces with vocabularies built from the traces themselves.
    pub fn with_own_vocabs(traces: Vec<Trace>) -> Self {
        let activity_vocab = Vocab::build(
            VocabKind::Activity,
            traces
                .iter()
                .flat_map(|t| t.events.iter().map(|e| e.activity.as_str())),
        );
        let resource_vocab = Vocab::build(
            VocabKind::Resource,
            traces
                .iter()
                .flat_map(|t| t.events.iter().filter_map(|e| e.resource.as_deref())),
        );
        Self {
            traces,
            activity_vocab,
            resource_vocab,
        }
    }

    pub fn num_events(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    /// Keeps only events whose lifecycle transition equals `keep`
    /// (case-insensitive). Events without a lifecycle attribute are kept.
    /// Traces that become empty are removed.
    pub fn filter_lifecycle(self, keep: &str) -> Result<Self> {
        let traces: Vec<Trace> = self
            .traces
            .into_iter()
            .filter_map(|mut t| {
                t.events.retain(|e| {
                    e.lifecycle()
                        .is_none_or(|l| l.eq_ignore_ascii_case(keep))
                });
                (!t.events.is_empty()).then_some(t)
            })
            .collect();
        if traces.is_empty() {
            return Err(LogError::EmptyLog);
        }
        Ok(Self::with_own_vocabs(traces))
    }
}

/// Parses a timestamp with a chrono strftime pattern, or one of the
/// keywords `rfc3339` / `iso8601`. Patterns without an offset are read as UTC.
pub fn parse_timestamp(value: &str, format: &str) -> Option<i64> {
    let value = value.trim();
    let parsed = match format {
        "rfc3339" | "iso8601" => parse_iso8601(value),
        fmt => DateTime::parse_from_str(value, fmt)
            .map(|d| d.with_timezone(&Utc))
            .or_else(|_| NaiveDateTime::parse_from_str(value, fmt).map(|n| n.and_utc()))
            .ok(),
    };
    parsed.map(|d| d.timestamp_millis())
}

/// Lenient ISO-8601 parsing as found in XES files.
pub fn parse_iso8601(value: &str) -> Option<DateTime<Utc>> {
    if let Ok(d) = DateTime::parse_from_rfc3339(value) {
        return Some(d.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f%z", "%Y-%m-%dT%H:%M:%S%z"] {
        if let Ok(d) = DateTime::parse_from_str(value, fmt) {
            return Some(d.with_timezone(&Utc));
        }
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(n) = NaiveDateTime::parse_from_str(value, fmt) {
            return Some(n.and_utc());
        }
    }
    None
}
