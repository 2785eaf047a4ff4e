//! Partition record files and the log part of the cache manifest.
//!
//! A record file starts with the magic `DFGTRC01`, followed by one record per
//! trace: a little-endian `u32` byte length and the record body. Strings are
//! a `u32` length plus UTF-8 bytes; timestamps are `i64` milliseconds.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Event, EventLog, LogError, Result, SplitRatios, Trace, Vocab, VocabKind};

const MAGIC: &[u8; 8] = b"DFGTRC01";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Xes,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Val, Partition::Test];

    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.bin", self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionInfo {
    pub file: String,
    pub traces: usize,
    pub events: usize,
    pub case_ids: Vec<String>,
}

/// Everything the cache records about the source log and its split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogManifest {
    pub dataset: String,
    pub format: LogFormat,
    pub source: String,
    pub seed: u64,
    pub ratios: SplitRatios,
    pub lifecycle_filter: Option<String>,
    pub activity_vocab: Vec<String>,
    pub resource_vocab: Vec<String>,
    pub partitions: BTreeMap<Partition, PartitionInfo>,
}

impl LogManifest {
    pub fn vocabs(&self) -> Result<(Vocab, Vocab)> {
        let act = Vocab::from_entries(VocabKind::Activity, self.activity_vocab.clone())
            .ok_or_else(|| LogError::CorruptCache("bad activity vocabulary".into()))?;
        let res = Vocab::from_entries(VocabKind::Resource, self.resource_vocab.clone())
            .ok_or_else(|| LogError::CorruptCache("bad resource vocabulary".into()))?;
        Ok((act, res))
    }
}

pub fn partition_info(partition: Partition, log: &EventLog) -> PartitionInfo {
    PartitionInfo {
        file: partition.file_name(),
        traces: log.traces.len(),
        events: log.num_events(),
        case_ids: log.traces.iter().map(|t| t.case_id.clone()).collect(),
    }
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

pub fn encode_trace(trace: &Trace) -> Vec<u8> {
    let mut buf = Vec::new();
    put_str(&mut buf, &trace.case_id);
    buf.extend_from_slice(&(trace.events.len() as u32).to_le_bytes());
    for e in &trace.events {
        put_str(&mut buf, &e.activity);
        buf.extend_from_slice(&e.timestamp_ms.to_le_bytes());
        match &e.resource {
            Some(r) => {
                buf.push(1);
                put_str(&mut buf, r);
            }
            None => buf.push(0),
        }
        buf.extend_from_slice(&(e.extras.len() as u32).to_le_bytes());
        for (k, v) in &e.extras {
            put_str(&mut buf, k);
            put_str(&mut buf, v);
        }
    }
    buf
}

struct Cursor<'a> {
    data: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() < n {
            return Err(LogError::CorruptCache("truncated record".into()));
        }
        let (head, tail) = self.data.split_at(n);
        self.data = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| LogError::CorruptCache("invalid utf-8".into()))
    }
}

pub fn decode_trace(body: &[u8]) -> Result<Trace> {
    let mut c = Cursor { data: body };
    let case_id = c.string()?;
    let n = c.u32()? as usize;
    let mut events = Vec::with_capacity(n);
    for _ in 0..n {
        let activity = c.string()?;
        let timestamp_ms = c.i64()?;
        let resource = match c.u8()? {
            0 => None,
            1 => Some(c.string()?),
            _ => return Err(LogError::CorruptCache("bad resource tag".into())),
        };
        let mut extras = BTreeMap::new();
        for _ in 0..c.u32()? {
            let k = c.string()?;
            extras.insert(k, c.string()?);
        }
        events.push(Event {
            case_id: case_id.clone(),
            activity,
            timestamp_ms,
            resource,
            extras,
        });
    }
    if !c.data.is_empty() {
        return Err(LogError::CorruptCache("trailing bytes in record".into()));
    }
    Ok(Trace { case_id, events })
}

pub fn write_records<W: Write>(mut out: W, traces: &[Trace]) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    for t in traces {
        let body = encode_trace(t);
        out.write_all(&(body.len() as u32).to_le_bytes())?;
        out.write_all(&body)?;
    }
    out.flush()
}

pub fn read_records<R: Read>(mut input: R) -> Result<Vec<Trace>> {
    let mut data = Vec::new();
    input
        .read_to_end(&mut data)
        .map_err(|e| LogError::CorruptCache(e.to_string()))?;
    let mut c = Cursor { data: &data };
    if c.take(MAGIC.len())? != MAGIC {
        return Err(LogError::CorruptCache("bad magic".into()));
    }
    let mut traces = Vec::new();
    while !c.data.is_empty() {
        let n = c.u32()? as usize;
        traces.push(decode_trace(c.take(n)?)?);
    }
    Ok(traces)
}

pub fn write_partition(dir: &Path, partition: Partition, log: &EventLog) -> Result<()> {
    let path = dir.join(partition.file_name());
    let io_err = |source| LogError::Io {
        path: path.clone(),
        source,
    };
    let file = fs::File::create(&path).map_err(io_err)?;
    write_records(std::io::BufWriter::new(file), &log.traces).map_err(io_err)
}

/// Reads one partition and attaches the manifest's (training) vocabularies.
pub fn read_partition(dir: &Path, manifest: &LogManifest, partition: Partition) -> Result<EventLog> {
    let info = manifest
        .partitions
        .get(&partition)
        .ok_or_else(|| LogError::CorruptCache(format!("no {} partition", partition.name())))?;
    let path = dir.join(&info.file);
    let file = fs::File::open(&path).map_err(|source| LogError::Io {
        path: path.clone(),
        source,
    })?;
    let traces = read_records(std::io::BufReader::new(file))?;
    if traces.len() != info.traces {
        return Err(LogError::CorruptCache(format!(
            "{} holds {} traces, manifest says {}",
            info.file,
            traces.len(),
            info.traces
        )));
    }
    let (activity_vocab, resource_vocab) = manifest.vocabs()?;
    Ok(EventLog {
        traces,
        activity_vocab,
        resource_vocab,
    })
}
