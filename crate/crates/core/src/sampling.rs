//! Prefix expansion of traces into supervised samples.

use serde::{Deserialize, Serialize};

use crate::eventlog::vocab::END_INDEX;
use crate::eventlog::{hours_between, Event, EventLog, Trace, Vocab};

/// The first `k` events of a trace with its next-activity and
/// remaining-time labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PrefixSample {
    pub case_id: String,
    /// Prefix length in the source trace, `1 <= k <= n`.
    pub k: usize,
    /// Prefix events whose activity is known to the vocabulary. Equal to the
    /// first `k` trace events unless the trace holds unseen activities.
    pub events: Vec<Event>,
    /// Activity-vocab index of event `k + 1`, `END` when `k = n`, `None` if
    /// that activity is not in the vocabulary.
    pub next_activity: Option<usize>,
    /// Hours from event `k` to the last event of the trace.
    pub remaining_hours: f64,
}

impl PrefixSample {
    pub fn is_end(&self) -> bool {
        self.next_activity == Some(END_INDEX)
    }
}

/// Expands a trace into one sample per prefix length.
pub fn generate_prefixes(trace: &Trace, activity_vocab: &Vocab) -> Vec<PrefixSample> {
    let n = trace.events.len();
    let Some(last) = trace.events.last() else {
        return Vec::new();
    };
    let end_ts = last.timestamp_ms;
    let mut known: Vec<Event> = Vec::with_capacity(n);
    let mut samples = Vec::with_capacity(n);
    for k in 1..=n {
        let event = &trace.events[k - 1];
        if activity_vocab.get(&event.activity).is_some() {
            known.push(event.clone());
        }
        let next_activity = match trace.events.get(k) {
            Some(next) => activity_vocab.get(&next.activity),
            None => Some(END_INDEX),
        };
        samples.push(PrefixSample {
            case_id: trace.case_id.clone(),
            k,
            events: known.clone(),
            next_activity,
            remaining_hours: hours_between(event.timestamp_ms, end_ts),
        });
    }
    samples
}

/// All prefix samples of a log, traces in log order.
pub fn log_samples(log: &EventLog) -> Vec<PrefixSample> {
    log.traces
        .iter()
        .flat_map(|t| generate_prefixes(t, &log.activity_vocab))
        .collect()
}

/// Standardization of the remaining-time target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: f64,
    pub std: f64,
}

impl TargetScaler {
    pub fn fit(samples: &[PrefixSample]) -> Self {
        let n = samples.len().max(1) as f64;
        let mean = samples.iter().map(|s| s.remaining_hours).sum::<f64>() / n;
        let var = samples
            .iter()
            .map(|s| (s.remaining_hours - mean).powi(2))
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        Self {
            mean,
            std: if std > 1e-12 { std } else { 1.0 },
        }
    }

    pub fn identity() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }

    pub fn transform(&self, hours: f64) -> f64 {
        (hours - self.mean) / self.std
    }

    pub fn inverse(&self, scaled: f64) -> f64 {
        scaled * self.std + self.mean
    }
}
