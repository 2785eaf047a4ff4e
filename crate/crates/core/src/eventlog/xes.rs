use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::Reader;

use super::{parse_iso8601, Event, EventLog, LogError, Result, Trace};

const CONCEPT_NAME: &str = "concept:name";
const TIMESTAMP: &str = "time:timestamp";
const RESOURCE: &str = "org:resource";

const ATTRIBUTE_TAGS: [&[u8]; 7] = [
    b"string", b"date", b"int", b"float", b"boolean", b"id", b"list",
];

#[derive(Clone, Copy, PartialEq, Eq)]
enum Scope {
    Trace,
    Event,
    Other,
}

#[derive(Default)]
struct PendingEvent {
    activity: Option<String>,
    timestamp: Option<String>,
    resource: Option<String>,
    extras: Vec<(String, String)>,
}

pub fn parse_xes(path: &Path) -> Result<EventLog> {
    let file = File::open(path).map_err(|source| LogError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_xes_reader(BufReader::new(file))
}

fn malformed(err: impl std::fmt::Display) -> LogError {
    LogError::MalformedXml(err.to_string())
}

fn key_value(tag: &BytesStart<'_>) -> Result<(Option<String>, Option<String>)> {
    let mut key = None;
    let mut value = None;
    for attr in tag.attributes() {
        let attr = attr.map_err(malformed)?;
        let text = attr.unescape_value().map_err(malformed)?.into_owned();
        match attr.key.as_ref() {
            b"key" => key = Some(text),
            b"value" => value = Some(text),
            _ => {}
        }
    }
    Ok((key, value))
}

/// Reads an XES document. Only attributes that are direct children of a
/// `<trace>` or `<event>` are considered; globals and nested attributes are
/// skipped.
pub fn parse_xes_reader<R: BufRead>(input: R) -> Result<EventLog> {
    let mut reader = Reader::from_reader(input);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();

    let mut stack: Vec<Scope> = Vec::new();
    let mut saw_log = false;
    let mut traces: Vec<Trace> = Vec::new();
    let mut trace_name: Option<String> = None;
    let mut trace_events: Vec<PendingEvent> = Vec::new();
    let mut event: Option<PendingEvent> = None;

    loop {
        let xml_event = reader.read_event_into(&mut buf).map_err(malformed)?;
        let (tag, is_empty) = match &xml_event {
            XmlEvent::Start(t) => (Some(t), false),
            XmlEvent::Empty(t) => (Some(t), true),
            _ => (None, false),
        };
        if let Some(tag) = tag {
            let name = tag.name();
            let name = name.as_ref();
            let parent = stack.last().copied();
            let scope = match name {
                b"log" => {
                    saw_log = true;
                    Scope::Other
                }
                b"trace" if stack.len() == 1 => {
                    trace_name = None;
                    trace_events.clear();
                    Scope::Trace
                }
                b"event" if parent == Some(Scope::Trace) => {
                    event = Some(PendingEvent::default());
                    Scope::Event
                }
                n if ATTRIBUTE_TAGS.contains(&n) => {
                    let (key, value) = key_value(tag)?;
                    if let (Some(key), Some(value)) = (key, value) {
                        match parent {
                            Some(Scope::Trace) if key == CONCEPT_NAME => trace_name = Some(value),
                            Some(Scope::Event) => {
                                let ev = event.as_mut().expect("inside event");
                                match key.as_str() {
                                    CONCEPT_NAME => ev.activity = Some(value),
                                    TIMESTAMP => ev.timestamp = Some(value),
                                    RESOURCE => ev.resource = Some(value),
                                    _ => ev.extras.push((key, value)),
                                }
                            }
                            _ => {}
                        }
                    }
                    Scope::Other
                }
                _ => Scope::Other,
            };
            if is_empty {
                close(scope, &mut event, &mut trace_events, &mut traces, &mut trace_name)?;
            } else {
                stack.push(scope);
            }
            buf.clear();
            continue;
        }
        match xml_event {
            XmlEvent::End(_) => {
                let scope = stack
                    .pop()
                    .ok_or_else(|| malformed("unbalanced closing tag"))?;
                close(scope, &mut event, &mut trace_events, &mut traces, &mut trace_name)?;
            }
            XmlEvent::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !stack.is_empty() {
        return Err(malformed("unexpected end of document"));
    }
    if !saw_log {
        return Err(malformed("no <log> element"));
    }
    if traces.is_empty() {
        return Err(LogError::EmptyLog);
    }
    let mut seen = HashSet::new();
    for t in &traces {
        if !seen.insert(t.case_id.as_str()) {
            return Err(LogError::DuplicateCase(t.case_id.clone()));
        }
    }
    Ok(EventLog::with_own_vocabs(traces))
}

fn close(
    scope: Scope,
    event: &mut Option<PendingEvent>,
    trace_events: &mut Vec<PendingEvent>,
    traces: &mut Vec<Trace>,
    trace_name: &mut Option<String>,
) -> Result<()> {
    match scope {
        Scope::Event => {
            if let Some(ev) = event.take() {
                trace_events.push(ev);
            }
        }
        Scope::Trace => {
            let index = traces.len();
            let case_id = trace_name
                .take()
                .ok_or(LogError::MissingConceptName(index))?;
            let mut events = Vec::with_capacity(trace_events.len());
            for (i, pending) in trace_events.drain(..).enumerate() {
                let missing = |key| LogError::MissingEventAttribute {
                    trace: index,
                    event: i,
                    key,
                };
                let activity = pending
                    .activity
                    .filter(|a| !a.is_empty())
                    .ok_or_else(|| missing(CONCEPT_NAME))?;
                let raw_ts = pending.timestamp.ok_or_else(|| missing(TIMESTAMP))?;
                let ts = parse_iso8601(&raw_ts).ok_or(LogError::UnparseableTimestamp {
                    row: i,
                    value: raw_ts.clone(),
                })?;
                let mut e = Event::new(
                    &case_id,
                    &activity,
                    ts.timestamp_millis(),
                    pending.resource.as_deref(),
                );
                e.extras.extend(pending.extras);
                events.push(e);
            }
            // Empty traces carry nothing to learn from.
            if !events.is_empty() {
                events.sort_by_key(|e| e.timestamp_ms);
                traces.push(Trace { case_id, events });
            }
        }
        Scope::Other => {}
    }
    Ok(())
}
