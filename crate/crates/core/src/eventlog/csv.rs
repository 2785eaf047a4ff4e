use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_timestamp, Event, EventLog, LogError, Result, LIFECYCLE_KEY};

/// Header names of the CSV columns that carry each event field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub case: String,
    pub activity: String,
    pub timestamp: String,
    #[serde(default)]
    pub resource: Option<String>,
    #[serde(default)]
    pub lifecycle: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            case: "case".into(),
            activity: "activity".into(),
            timestamp: "timestamp".into(),
            resource: Some("resource".into()),
            lifecycle: None,
        }
    }
}

pub fn parse_csv(path: &Path, columns: &ColumnMap, timestamp_format: &str) -> Result<EventLog> {
    let file = File::open(path).map_err(|source| LogError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_csv_reader(file, columns, timestamp_format)
}

pub fn parse_csv_reader<R: Read>(
    reader: R,
    columns: &ColumnMap,
    timestamp_format: &str,
) -> Result<EventLog> {
    let mut rdr = ::csv::ReaderBuilder::new().trim(::csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LogError::MissingColumn(name.to_owned()))
    };
    let case_col = find(&columns.case)?;
    let act_col = find(&columns.activity)?;
    let ts_col = find(&columns.timestamp)?;
    let res_col = columns.resource.as_deref().map(find).transpose()?;
    let life_col = columns.lifecycle.as_deref().map(find).transpose()?;
    let mapped = [Some(case_col), Some(act_col), Some(ts_col), res_col, life_col];

    let mut events = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let field = |c: usize| record.get(c).unwrap_or("");
        let activity = field(act_col);
        if activity.is_empty() {
            return Err(LogError::EmptyActivity(row));
        }
        let raw_ts = field(ts_col);
        let timestamp_ms =
            parse_timestamp(raw_ts, timestamp_format).ok_or_else(|| LogError::UnparseableTimestamp {
                row,
                value: raw_ts.to_owned(),
            })?;
        let resource = res_col.map(field).filter(|r| !r.is_empty());
        let mut event = Event::new(field(case_col), activity, timestamp_ms, resource);
        for (c, name) in headers.iter().enumerate() {
            if !mapped.contains(&Some(c)) && !field(c).is_empty() {
                event.extras.insert(name.to_owned(), field(c).to_owned());
            }
        }
        if let Some(c) = life_col {
            if !field(c).is_empty() {
                event.extras.insert(LIFECYCLE_KEY.to_owned(), field(c).to_owned());
            }
        }
        events.push(event);
    }
    EventLog::from_events(events)
}
