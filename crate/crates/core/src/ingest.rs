//! Log parsing, production-state annotation and sample extraction.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use crate::domain::{quantize_payload, LogRecord, ProductionState, TrafficSample};
use crate::error::{Error, Result};

pub const LOG_COLUMNS: [&str; 4] = ["processed_time", "data_id", "data_value", "data_payload"];

const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S%.f";

/// Parses a machine log CSV. Records come back sorted by time, ties kept in
/// file order.
pub fn parse_log(path: impl AsRef<Path>) -> Result<Vec<LogRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_log_from_reader(file)
}

pub fn parse_log_from_reader<R: Read>(reader: R) -> Result<Vec<LogRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let mut cols = [0usize; 4];
    for (slot, name) in cols.iter_mut().zip(LOG_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(cols[i]).unwrap_or("");
        let processed_ms = parse_timestamp(field(0)).ok_or_else(|| Error::Parse {
            line,
            message: format!("unparseable timestamp `{}`", field(0)),
        })?;
        let data_payload = field(3).parse::<u64>().map_err(|_| Error::Parse {
            line,
            message: format!("invalid payload `{}`", field(3)),
        })?;
        records.push(LogRecord {
            processed_ms,
            data_id: field(1).to_string(),
            data_value: field(2).to_string(),
            data_payload,
        });
    }
    records.sort_by(|a, b| a.processed_ms.total_cmp(&b.processed_ms));
    Ok(records)
}

/// ISO-8601 local timestamp to milliseconds since the epoch.
pub fn parse_timestamp(s: &str) -> Option<f64> {
    let t = NaiveDateTime::parse_from_str(s, TIME_FORMAT).ok()?;
    Some(t.and_utc().timestamp_millis() as f64)
}

/// Inverse of [`parse_timestamp`] for whole milliseconds.
pub fn format_timestamp(ms: i64) -> String {
    chrono::DateTime::from_timestamp_millis(ms)
        .map(|t| t.naive_utc().format("%Y-%m-%dT%H:%M:%S%.3f").to_string())
        .unwrap_or_default()
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Parse {
            line,
            message: e.to_string(),
        },
        _ => Error::Parse {
            line,
            message: format!("malformed row: {e}"),
        },
    }
}

#[derive(Debug, Clone)]
struct StateRule {
    data_id: String,
    value: Regex,
    state: ProductionState,
}

/// Maps control messages to production states. Rules are tried in order;
/// the first whose id matches exactly and whose pattern matches the value wins.
#[derive(Debug, Clone, Default)]
pub struct StateMap {
    rules: Vec<StateRule>,
}

impl StateMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_rule(mut self, data_id: &str, value_regex: &str, state: ProductionState) -> Result<Self> {
        self.push_rule(data_id, value_regex, state)?;
        Ok(self)
    }

    pub fn push_rule(&mut self, data_id: &str, value_regex: &str, state: ProductionState) -> Result<()> {
        let value = Regex::new(value_regex)
            .map_err(|e| Error::InvalidArgument(format!("bad value pattern `{value_regex}`: {e}")))?;
        self.rules.push(StateRule {
            data_id: data_id.to_string(),
            value,
            state,
        });
        Ok(())
    }

    /// Reads lines of `data_id,value_regex,state_name`. Blank lines and lines
    /// starting with `#` are skipped. The pattern may itself contain commas.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| Error::Parse {
                line: i as u64 + 1,
                message,
            };
            let (id, rest) = line
                .split_once(',')
                .ok_or_else(|| bad("expected `data_id,value_regex,state_name`".into()))?;
            let (pattern, state) = rest
                .rsplit_once(',')
                .ok_or_else(|| bad("expected `data_id,value_regex,state_name`".into()))?;
            let state = state.parse::<ProductionState>().map_err(|e| bad(e.to_string()))?;
            map.push_rule(id.trim(), pattern.trim(), state)
                .map_err(|e| bad(e.to_string()))?;
        }
        Ok(map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Renders the map back into the line format accepted by [`parse`](Self::parse).
    pub fn to_text(&self) -> String {
        self.rules
            .iter()
            .map(|r| format!("{},{},{}\n", r.data_id, r.value.as_str(), r.state))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn classify(&self, record: &LogRecord) -> Option<ProductionState> {
        self.rules
            .iter()
            .find(|r| r.data_id == record.data_id && r.value.is_match(&record.data_value))
            .map(|r| r.state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateEpisode {
    pub state: ProductionState,
    pub start_ms: f64,
    pub end_ms: f64,
    pub records: Vec<LogRecord>,
}

impl StateEpisode {
    pub fn duration_ms(&self) -> f64 {
        self.end_ms - self.start_ms
    }
}

/// Consecutive, non-overlapping state episodes of one log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotatedTrace {
    pub episodes: Vec<StateEpisode>,
}

/// State and time span of an episode, without its records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSpan {
    pub state: ProductionState,
    pub start_ms: f64,
    pub end_ms: f64,
}

impl AnnotatedTrace {
    pub fn spans(&self) -> Vec<EpisodeSpan> {
        self.episodes
            .iter()
            .map(|e| EpisodeSpan {
                state: e.state,
                start_ms: e.start_ms,
                end_ms: e.end_ms,
            })
            .collect()
    }
}

/// Splits a sorted record stream into state episodes.
///
/// A new episode opens at every control record whose state differs from the
/// current one. Records before the first control record are dropped. Each
/// episode ends where the next one starts; the last ends at its last record.
pub fn annotate_states(records: &[LogRecord], state_map: &StateMap) -> Result<AnnotatedTrace> {
    if state_map.is_empty() {
        return Err(Error::InvalidArgument("state map is empty".into()));
    }
    let mut episodes: Vec<StateEpisode> = Vec::new();
    for r in records {
        let mapped = state_map.classify(r);
        let current = episodes.last().map(|e| e.state);
        match mapped {
            Some(state) if Some(state) != current => {
                if let Some(prev) = episodes.last_mut() {
                    prev.end_ms = r.processed_ms;
                }
                episodes.push(StateEpisode {
                    state,
                    start_ms: r.processed_ms,
                    end_ms: r.processed_ms,
                    records: vec![r.clone()],
                });
            }
            _ => {
                if let Some(ep) = episodes.last_mut() {
                    ep.end_ms = r.processed_ms;
                    ep.records.push(r.clone());
                }
            }
        }
    }
    if episodes.is_empty() {
        return Err(Error::NoStateInformation);
    }
    Ok(AnnotatedTrace { episodes })
}

/// Interarrival/size pairs from consecutive records inside each episode.
/// Zero gaps are dropped; pairs never straddle an episode boundary.
pub fn extract_samples(trace: &AnnotatedTrace) -> Vec<TrafficSample> {
    trace
        .episodes
        .iter()
        .flat_map(|ep| {
            ep.records.windows(2).filter_map(move |w| {
                let gap = w[1].processed_ms - w[0].processed_ms;
                (gap > 0.0).then(|| TrafficSample {
                    interarrival_ms: gap,
                    size_bytes: quantize_payload(w[1].data_payload),
                    state: ep.state,
                })
            })
        })
        .collect()
}

/// Shuffled train/test partition with index provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<TrafficSample>,
    pub test: Vec<TrafficSample>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
    pub ratio: f64,
}

impl DatasetSplit {
    pub fn train_counts(&self) -> BTreeMap<ProductionState, usize> {
        count_by_state(&self.train)
    }

    pub fn test_counts(&self) -> BTreeMap<ProductionState, usize> {
        count_by_state(&self.test)
    }
}

pub fn count_by_state(samples: &[TrafficSample]) -> BTreeMap<ProductionState, usize> {
    let mut counts = BTreeMap::new();
    for s in samples {
        *counts.entry(s.state).or_insert(0) += 1;
    }
    counts
}

/// Seeded shuffle, then the first `ceil(ratio * n)` samples go to training.
/// Both sides are kept non-empty.
pub fn split_dataset(samples: &[TrafficSample], ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio {ratio} must lie in (0, 1)"
        )));
    }
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ratio * n as f64 - 1e-9).ceil() as usize).clamp(1, n - 1);
    let (train_idx, test_idx) = order.split_at(n_train);
    Ok(DatasetSplit {
        train: train_idx.iter().map(|&i| samples[i]).collect(),
        test: test_idx.iter().map(|&i| samples[i]).collect(),
        train_indices: train_idx.to_vec(),
        test_indices: test_idx.to_vec(),
        seed,
        ratio,
    })
}

/// Writes records in the machine-log CSV layout, timestamps rounded to ms.
pub fn write_log<W: Write>(records: &[LogRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Malformed(e.to_string());
    w.write_record(LOG_COLUMNS).map_err(io)?;
    for r in records {
        w.write_record([
            format_timestamp(r.processed_ms.round() as i64),
            r.data_id.clone(),
            r.data_value.clone(),
            r.data_payload.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Malformed(e.to_string()))
}

/// Header of the samples CSV.
pub const SAMPLES_HEADER: [&str; 4] = ["interarrival_ms", "size_bytes", "state", "split"];

/// Samples in extraction order, each tagged `train` or `test`.
pub fn write_samples<W: Write>(samples: &[TrafficSample], split: &DatasetSplit, out: W) -> Result<()> {
    let mut is_train = vec![false; samples.len()];
    for &i in &split.train_indices {
        is_train[i] = true;
    }
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Malformed(e.to_string());
    w.write_record(SAMPLES_HEADER).map_err(io)?;
    for (s, train) in samples.iter().zip(is_train) {
        w.write_record([
            s.interarrival_ms.to_string(),
            s.size_bytes.to_string(),
            s.state.name().to_string(),
            if train { "train" } else { "test" }.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Malformed(e.to_string()))
}

/// Train and test samples read back from a samples CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleFile {
    pub train: Vec<TrafficSample>,
    pub test: Vec<TrafficSample>,
}

pub fn read_samples<R: Read>(reader: R) -> Result<SampleFile> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(&mut rdr, &SAMPLES_HEADER)?;
    let mut out = SampleFile::default();
    for (i, row) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(csv_error)?;
        let bad = |what: &str| Error::Parse {
            line,
            message: format!("bad {what}"),
        };
        let sample = TrafficSample {
            interarrival_ms: row[0].parse().map_err(|_| bad("interarrival_ms"))?,
            size_bytes: row[1].parse().map_err(|_| bad("size_bytes"))?,
            state: row[2].parse().map_err(|_| bad("state"))?,
        };
        match &row[3] {
            "train" => out.train.push(sample),
            "test" => out.test.push(sample),
            _ => return Err(bad("split")),
        }
    }
    Ok(out)
}

/// Header of the episodes CSV.
pub const EPISODES_HEADER: [&str; 3] = ["state", "start_ms", "end_ms"];

pub fn write_episodes<W: Write>(spans: &[EpisodeSpan], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Malformed(e.to_string());
    w.write_record(EPISODES_HEADER).map_err(io)?;
    for e in spans {
        w.write_record([e.state.name().to_string(), e.start_ms.to_string(), e.end_ms.to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Malformed(e.to_string()))
}

pub fn read_episodes<R: Read>(reader: R) -> Result<Vec<EpisodeSpan>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(&mut rdr, &EPISODES_HEADER)?;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(csv_error)?;
        let bad = |what: &str| Error::Parse {
            line,
            message: format!("bad {what}"),
        };
        out.push(EpisodeSpan {
            state: row[0].parse().map_err(|_| bad("state"))?,
            start_ms: row[1].parse().map_err(|_| bad("start_ms"))?,
            end_ms: row[2].parse().map_err(|_| bad("end_ms"))?,
        });
    }
    Ok(out)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(csv_error)?;
    for name in expected {
        if !headers.iter().any(|h| h == *name) {
            return Err(Error::MissingColumn(name.to_string()));
        }
    }
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected columns {}", expected.join(",")),
        });
    }
    Ok(())
}
