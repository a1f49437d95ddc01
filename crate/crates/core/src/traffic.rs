//! State-aware packet trace synthesis and the exponential baseline.
//!
//! The production process starts in Running. At every step the next state
//! and the jump time come from the semi-Markov model; the interval until the
//! jump is filled with packets whose interarrival times (and sizes, in 2D)
//! come from the current state's packet model.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::domain::{LogRecord, ProductionState, TrafficSample};
use crate::error::{Error, Result};
use crate::generative::{requantize_size, DataMode, GenerativeModel};
use crate::ingest::StateMap;
use crate::smp::SemiMarkovModel;

/// Header of the exported trace CSV.
pub const TRACE_HEADER: &str = "timestamp_ms,size_bytes,state";

/// `data_id` given to re-imported trace rows; the value carries the state name.
pub const TRACE_DATA_ID: &str = "state";

/// Draws packets for a production state.
pub trait PacketSource {
    /// `n` packets as (interarrival ms, size bytes).
    fn sample_packets(&self, state: ProductionState, n: usize, rng: &mut dyn RngCore) -> Result<Vec<(f64, u64)>>;
}

/// Trained generative models for each state, plus the empirical sizes used
/// when a model only knows interarrival times.
#[derive(Debug, Clone, Default)]
pub struct ModelPackets {
    models: [Option<GenerativeModel>; ProductionState::COUNT],
    sizes: [Vec<u64>; ProductionState::COUNT],
}

impl ModelPackets {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_model(mut self, state: ProductionState, model: GenerativeModel) -> Self {
        self.models[state.index()] = Some(model);
        self
    }

    /// One conditional model serving every state.
    pub fn with_conditional(mut self, model: GenerativeModel) -> Result<Self> {
        if !model.is_conditional() {
            return Err(Error::InvalidArgument(format!("{} model is not conditional", model.kind())));
        }
        for slot in &mut self.models {
            *slot = Some(model.clone());
        }
        Ok(self)
    }

    /// Size pools for 1D models, taken from observed samples.
    pub fn with_sizes(mut self, samples: &[TrafficSample]) -> Self {
        for s in samples {
            self.sizes[s.state.index()].push(s.size_bytes);
        }
        self
    }

    pub fn covers(&self, state: ProductionState) -> bool {
        self.models[state.index()].is_some()
    }
}

impl PacketSource for ModelPackets {
    fn sample_packets(&self, state: ProductionState, n: usize, rng: &mut dyn RngCore) -> Result<Vec<(f64, u64)>> {
        let model = self.models[state.index()]
            .as_ref()
            .ok_or(Error::NoModelForState(state))?;
        let values = model.sample_values(Some(state), n, rng)?;
        match model.mode() {
            DataMode::TwoD => Ok(values.into_iter().map(|r| (r[0], requantize_size(r[1]))).collect()),
            DataMode::OneD => {
                let pool = &self.sizes[state.index()];
                if pool.is_empty() && n > 0 {
                    return Err(Error::InvalidArgument(format!("no packet sizes observed for {state}")));
                }
                Ok(values
                    .into_iter()
                    .map(|r| (r[0], pool[rng.random_range(0..pool.len())]))
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateOptions {
    /// Number of state jumps to simulate.
    pub n_max: usize,
    pub seed: u64,
    /// Stop quietly when the process reaches a state it never leaves;
    /// otherwise that is an error.
    pub stop_at_dead_state: bool,
    /// Upper bound on emitted packets for the whole trace.
    pub max_packets: usize,
}

impl GenerateOptions {
    pub fn new(n_max: usize, seed: u64) -> Self {
        Self {
            n_max,
            seed,
            stop_at_dead_state: true,
            max_packets: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Packet {
    pub timestamp_ms: f64,
    pub size_bytes: u64,
    pub state: ProductionState,
    /// Index of the episode the packet belongs to.
    pub episode: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    /// 1-based jump counter.
    pub index: usize,
    pub from: ProductionState,
    pub to: ProductionState,
    /// Absolute time of the jump.
    pub time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SyntheticTrace {
    pub packets: Vec<Packet>,
    pub jumps: Vec<Jump>,
}

impl SyntheticTrace {
    /// Visits per state over the episodes that ended in a jump.
    pub fn visit_counts(&self) -> [usize; ProductionState::COUNT] {
        let mut counts = [0; ProductionState::COUNT];
        for j in &self.jumps {
            counts[j.from.index()] += 1;
        }
        counts
    }

    /// The interarrival times the packet model actually produced: the first
    /// packet of an episode counts from the episode start.
    pub fn episode_samples(&self) -> Vec<TrafficSample> {
        let mut out = Vec::with_capacity(self.packets.len());
        let mut prev: Option<&Packet> = None;
        for p in &self.packets {
            let origin = match prev {
                Some(q) if q.episode == p.episode => q.timestamp_ms,
                _ => self.episode_start(p.episode),
            };
            out.push(TrafficSample {
                interarrival_ms: p.timestamp_ms - origin,
                size_bytes: p.size_bytes,
                state: p.state,
            });
            prev = Some(p);
        }
        out
    }

    /// Samples as seen by re-ingesting the exported trace: gaps between
    /// consecutive packets of the same state run.
    pub fn run_samples(&self) -> Vec<TrafficSample> {
        self.packets
            .windows(2)
            .filter(|w| w[0].state == w[1].state)
            .map(|w| TrafficSample {
                interarrival_ms: w[1].timestamp_ms - w[0].timestamp_ms,
                size_bytes: w[1].size_bytes,
                state: w[1].state,
            })
            .collect()
    }

    fn episode_start(&self, episode: usize) -> f64 {
        if episode == 0 {
            0.0
        } else {
            self.jumps[episode - 1].time_ms
        }
    }
}

/// Runs the production process for `opts.n_max` jumps and fills every
/// episode with packets.
///
/// Packets are placed by cumulative interarrival time from the episode start;
/// the first packet that would land at or past the jump is dropped and the
/// episode closes.
pub fn generate_trace(smp: &SemiMarkovModel, source: &dyn PacketSource, opts: &GenerateOptions) -> Result<SyntheticTrace> {
    run_process(source, opts, |state, rng| {
        if smp.matrix().is_dead(state) {
            if opts.stop_at_dead_state {
                return Ok(None);
            }
            return Err(Error::DeadState(state));
        }
        let next = smp.sample_next_state(state, rng)?;
        let dt = smp.sample_jumping_time(state, next, rng)?;
        Ok(Some((next, dt)))
    })
}

/// The jump loop shared by trace generation and the synthetic dataset.
/// `step` returns the next state and jump time, or `None` to stop.
pub(crate) fn run_process(
    source: &dyn PacketSource,
    opts: &GenerateOptions,
    mut step: impl FnMut(ProductionState, &mut ChaCha8Rng) -> Result<Option<(ProductionState, f64)>>,
) -> Result<SyntheticTrace> {
    if opts.n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut trace = SyntheticTrace::default();
    let mut state = ProductionState::Running;
    let mut t = 0.0;
    for n in 1..=opts.n_max {
        let Some((next, dt)) = step(state, &mut rng)? else {
            break;
        };
        let end = t + dt;
        fill_episode(&mut trace, source, state, n - 1, t, end, opts.max_packets, &mut rng)?;
        trace.jumps.push(Jump {
            index: n,
            from: state,
            to: next,
            time_ms: end,
        });
        t = end;
        state = next;
    }
    Ok(trace)
}

#[allow(clippy::too_many_arguments)]
fn fill_episode(
    trace: &mut SyntheticTrace,
    source: &dyn PacketSource,
    state: ProductionState,
    episode: usize,
    start: f64,
    end: f64,
    max_packets: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let mut cursor = start;
    let mut chunk = 16;
    loop {
        let drawn = source.sample_packets(state, chunk, rng)?;
        for (gap, size) in drawn {
            let at = cursor + gap;
            if at >= end {
                return Ok(());
            }
            if at <= cursor {
                // gap lost to rounding at this magnitude
                continue;
            }
            if trace.packets.len() >= max_packets {
                return Err(Error::InvalidArgument(format!("trace exceeds {max_packets} packets")));
            }
            trace.packets.push(Packet {
                timestamp_ms: at,
                size_bytes: size,
                state,
                episode,
            });
            cursor = at;
        }
        chunk = (chunk * 2).min(4096);
    }
}

/// `n` exponential interarrival times with rate `rate_lambda` per ms.
pub fn exponential_baseline<R: Rng + ?Sized>(rate_lambda: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if !(rate_lambda > 0.0 && rate_lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("rate must be positive, got {rate_lambda}")));
    }
    let exp = Exp::new(rate_lambda).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = exp.sample(rng);
        if x > 0.0 {
            out.push(x);
        }
    }
    Ok(out)
}

pub fn write_trace<W: Write>(trace: &SyntheticTrace, out: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{TRACE_HEADER}")?;
    for p in &trace.packets {
        writeln!(w, "{},{},{}", p.timestamp_ms, p.size_bytes, p.state.name())?;
    }
    w.flush()
}

pub fn export_trace(trace: &SyntheticTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace(trace, file).map_err(|e| Error::io(path, e))
}

/// Reads an exported trace back as log records: `data_id` is
/// [`TRACE_DATA_ID`], the value is the state name and the payload the size.
pub fn read_trace_from_reader<R: Read>(reader: R) -> Result<Vec<LogRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let expected: Vec<&str> = TRACE_HEADER.split(',').collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{TRACE_HEADER}`"),
        });
    }
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = (i + 2) as u64;
        let bad = |message: String| Error::Parse { line, message };
        let row = row.map_err(|e| bad(e.to_string()))?;
        let ts: f64 = row[0].parse().map_err(|_| bad(format!("bad timestamp `{}`", &row[0])))?;
        let size: u64 = row[1].parse().map_err(|_| bad(format!("bad size `{}`", &row[1])))?;
        let state: ProductionState = row[2].parse().map_err(|_| bad(format!("bad state `{}`", &row[2])))?;
        records.push(LogRecord {
            processed_ms: ts,
            data_id: TRACE_DATA_ID.to_string(),
            data_value: state.name().to_string(),
            data_payload: size,
        });
    }
    Ok(records)
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<LogRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trace_from_reader(file)
}

/// State map recognising every row of a re-imported trace.
pub fn trace_state_map() -> StateMap {
    let mut map = StateMap::new();
    for s in ProductionState::ALL {
        map.push_rule(TRACE_DATA_ID, &format!("^{}$", s.name()), s)
            .expect("state names are valid patterns");
    }
    map
}
