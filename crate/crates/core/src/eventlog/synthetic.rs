use super::{Event, EventLog};

const HOUR_MS: i64 = 3_600_000;

const ACTIVITIES: [&str; 6] = ["A", "B", "C", "D", "E", "F"];

/// A deterministic log whose next activities follow a fixed rule.
///
/// Trace `i` starts at activity `i mod 5` and is worked by resource
/// `R{b}` with `b = (i / 5) mod 2`. Each step advances the activity by
/// `1 + b` (mod 6) and the trace has `3 + (start + b) mod 3` events, so the
/// next activity is a function of start, resource and prefix length.
pub fn rule_log(num_traces: usize) -> EventLog {
    let mut events = Vec::new();
    for i in 0..num_traces {
        let start = i % 5;
        let b = (i / 5) % 2;
        let len = 3 + (start + b) % 3;
        let case = format!("case-{i:04}");
        let resource = format!("R{b}");
        let t0 = i as i64 * 24 * HOUR_MS;
        for j in 0..len {
            let activity = ACTIVITIES[(start + j * (1 + b)) % ACTIVITIES.len()];
            let ts = t0 + (j as i64) * (1 + b as i64) * HOUR_MS;
            events.push(Event::new(&case, activity, ts, Some(&resource)));
        }
    }
    EventLog::from_events(events).expect("non-empty log")
}
