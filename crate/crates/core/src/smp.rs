//! Semi-Markov model of the machine's production states.
//!
//! The embedded chain is described by a transition matrix with an empty
//! diagonal. Time spent in state `i` before moving to `j` is kept as the
//! empirical set of observed jumping times for the pair, and the sojourn
//! distribution of `i` is the `p_ij`-weighted mixture of those sets.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::ProductionState;
use crate::error::{Error, Result};
use crate::ingest::{AnnotatedTrace, EpisodeSpan};

const N: usize = ProductionState::COUNT;

pub const SMP_FILE_VERSION: u64 = 1;

/// Jumping time recorded for an episode whose start and end share the same
/// millisecond: half the log resolution.
pub const MIN_JUMPING_TIME_MS: f64 = 0.5;

pub type CountMatrix = [[u64; N]; N];

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    p: [[f64; N]; N],
}

impl TransitionMatrix {
    /// Row-normalizes a count matrix. Rows without observations stay zero;
    /// see [`dead_states`](Self::dead_states).
    pub fn from_counts(counts: &CountMatrix) -> Result<Self> {
        let mut p = [[0.0; N]; N];
        for (i, row) in counts.iter().enumerate() {
            if row[i] != 0 {
                return Err(Error::NonZeroDiagonal(state(i)));
            }
            let total: u64 = row.iter().sum();
            if total == 0 {
                continue;
            }
            for (pij, &c) in p[i].iter_mut().zip(row) {
                *pij = c as f64 / total as f64;
            }
        }
        Ok(Self { p })
    }

    pub fn get(&self, from: ProductionState, to: ProductionState) -> f64 {
        self.p[from.index()][to.index()]
    }

    pub fn rows(&self) -> &[[f64; N]; N] {
        &self.p
    }

    pub fn row(&self, from: ProductionState) -> &[f64; N] {
        &self.p[from.index()]
    }

    pub fn is_dead(&self, s: ProductionState) -> bool {
        self.p[s.index()].iter().all(|&x| x == 0.0)
    }

    /// States that were never observed to leave.
    pub fn dead_states(&self) -> Vec<ProductionState> {
        ProductionState::ALL.into_iter().filter(|&s| self.is_dead(s)).collect()
    }

    /// Inverse-CDF draw over the row, accumulating left to right in state
    /// order.
    pub fn sample_next<R: Rng + ?Sized>(&self, from: ProductionState, rng: &mut R) -> Result<ProductionState> {
        let row = &self.p[from.index()];
        if row.iter().all(|&x| x == 0.0) {
            return Err(Error::DeadState(from));
        }
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut last = 0;
        for (j, &pj) in row.iter().enumerate() {
            if pj == 0.0 {
                continue;
            }
            cum += pj;
            last = j;
            if u < cum {
                return Ok(state(j));
            }
        }
        // rounding left the cumulative sum just below 1
        Ok(state(last))
    }
}

/// Observed jumping times per ordered state pair, in milliseconds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JumpingTimeTable {
    times: [[Vec<f64>; N]; N],
}

impl JumpingTimeTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, from: ProductionState, to: ProductionState, ms: f64) -> Result<()> {
        if !(ms > 0.0) || !ms.is_finite() {
            return Err(Error::NonPositive(ms));
        }
        self.times[from.index()][to.index()].push(ms);
        Ok(())
    }

    pub fn get(&self, from: ProductionState, to: ProductionState) -> &[f64] {
        &self.times[from.index()][to.index()]
    }

    /// Empirical CDF of the pair's sample set at `t`.
    pub fn empirical_cdf(&self, from: ProductionState, to: ProductionState, t: f64) -> f64 {
        let set = self.get(from, to);
        if set.is_empty() {
            return 0.0;
        }
        set.iter().filter(|&&x| x <= t).count() as f64 / set.len() as f64
    }
}

/// Transition counts, estimated matrix and jumping-time samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiMarkovModel {
    counts: CountMatrix,
    matrix: TransitionMatrix,
    jumping: JumpingTimeTable,
}

/// Counts episode boundaries and records the source episode's duration as
/// the jumping time of each boundary. The final episode has no observed exit
/// and contributes nothing.
pub fn count_transitions(trace: &AnnotatedTrace) -> Result<(CountMatrix, JumpingTimeTable)> {
    count_transitions_from_spans(&trace.spans())
}

pub fn count_transitions_from_spans(spans: &[EpisodeSpan]) -> Result<(CountMatrix, JumpingTimeTable)> {
    if spans.len() < 2 {
        return Err(Error::TooFewEpisodes(spans.len()));
    }
    let mut counts = [[0u64; N]; N];
    let mut jumping = JumpingTimeTable::new();
    for w in spans.windows(2) {
        let (from, to) = (w[0].state, w[1].state);
        if from == to {
            return Err(Error::InvalidArgument(format!(
                "consecutive episodes share state {from}"
            )));
        }
        counts[from.index()][to.index()] += 1;
        let duration = (w[0].end_ms - w[0].start_ms).max(MIN_JUMPING_TIME_MS);
        jumping.push(from, to, duration)?;
    }
    Ok((counts, jumping))
}

pub fn estimate_transition_matrix(counts: &CountMatrix) -> Result<TransitionMatrix> {
    TransitionMatrix::from_counts(counts)
}

impl SemiMarkovModel {
    pub fn new(counts: CountMatrix, jumping: JumpingTimeTable) -> Result<Self> {
        let matrix = TransitionMatrix::from_counts(&counts)?;
        for from in ProductionState::ALL {
            for to in ProductionState::ALL {
                let c = counts[from.index()][to.index()];
                let has_times = !jumping.get(from, to).is_empty();
                if (c > 0) != has_times {
                    return Err(Error::InvalidArgument(format!(
                        "pair {from} -> {to}: count {c} disagrees with its jumping-time samples"
                    )));
                }
            }
        }
        Ok(Self {
            counts,
            matrix,
            jumping,
        })
    }

    pub fn from_trace(trace: &AnnotatedTrace) -> Result<Self> {
        let (counts, jumping) = count_transitions(trace)?;
        Self::new(counts, jumping)
    }

    pub fn counts(&self) -> &CountMatrix {
        &self.counts
    }

    pub fn matrix(&self) -> &TransitionMatrix {
        &self.matrix
    }

    pub fn jumping(&self) -> &JumpingTimeTable {
        &self.jumping
    }

    /// Sojourn CDF of `state`: the transition-weighted mixture of the
    /// per-destination empirical jumping-time CDFs.
    pub fn sojourn_cdf(&self, state: ProductionState, t: f64) -> Result<f64> {
        if self.matrix.is_dead(state) {
            return Err(Error::DeadState(state));
        }
        Ok(ProductionState::ALL
            .into_iter()
            .map(|to| self.matrix.get(state, to) * self.jumping.empirical_cdf(state, to, t))
            .sum())
    }

    pub fn sample_next_state<R: Rng + ?Sized>(&self, from: ProductionState, rng: &mut R) -> Result<ProductionState> {
        self.matrix.sample_next(from, rng)
    }

    /// Bootstrap draw from the pair's observed jumping times.
    pub fn sample_jumping_time<R: Rng + ?Sized>(
        &self,
        from: ProductionState,
        to: ProductionState,
        rng: &mut R,
    ) -> Result<f64> {
        let set = self.jumping.get(from, to);
        if set.is_empty() {
            return Err(Error::EmptyJumpingSet { from, to });
        }
        Ok(set[rng.random_range(0..set.len())])
    }

    pub fn to_json(&self) -> String {
        let file = SmpFile {
            version: SMP_FILE_VERSION,
            counts: self.counts,
            jumping_times: ProductionState::ALL
                .into_iter()
                .flat_map(|from| ProductionState::ALL.into_iter().map(move |to| (from, to)))
                .filter(|&(f, t)| !self.jumping.get(f, t).is_empty())
                .map(|(from, to)| JumpEntry {
                    from,
                    to,
                    times: self.jumping.get(from, to).to_vec(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("smp model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(json_error)?;
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Malformed("missing `version`".into()))?;
        if version != SMP_FILE_VERSION {
            return Err(Error::Version {
                found: version,
                expected: SMP_FILE_VERSION,
            });
        }
        let file: SmpFile = serde_json::from_value(value).map_err(|e| Error::Malformed(e.to_string()))?;
        let mut jumping = JumpingTimeTable::new();
        for entry in file.jumping_times {
            for t in entry.times {
                jumping.push(entry.from, entry.to, t)?;
            }
        }
        Self::new(file.counts, jumping)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub(crate) fn json_error(e: serde_json::Error) -> Error {
    if e.is_eof() {
        Error::Truncated(e.to_string())
    } else {
        Error::Malformed(e.to_string())
    }
}

#[derive(Serialize, Deserialize)]
struct SmpFile {
    version: u64,
    counts: CountMatrix,
    jumping_times: Vec<JumpEntry>,
}

#[derive(Serialize, Deserialize)]
struct JumpEntry {
    from: ProductionState,
    to: ProductionState,
    times: Vec<f64>,
}

/// Stationary distribution of the embedded chain.
///
/// Power iteration runs on the lazy chain `(I + P) / 2`, which shares the
/// stationary vector of `P` but is aperiodic. Iteration starts uniform over
/// the states that have outgoing transitions and stops when the L1 change
/// drops below `1e-12`.
pub fn embedded_stationary(matrix: &TransitionMatrix) -> Result<[f64; N]> {
    const MAX_ITER: usize = 1_000_000;
    let support: Vec<bool> = ProductionState::ALL.iter().map(|&s| !matrix.is_dead(s)).collect();
    let k = support.iter().filter(|&&b| b).count();
    if k == 0 {
        return Err(Error::InvalidArgument("transition matrix has no outgoing transitions".into()));
    }
    let p = matrix.rows();
    for i in 0..N {
        for j in 0..N {
            if support[i] && p[i][j] > 0.0 && !support[j] {
                return Err(Error::DeadState(state(j)));
            }
        }
    }
    let mut pi = [0.0; N];
    for (x, &s) in pi.iter_mut().zip(&support) {
        if s {
            *x = 1.0 / k as f64;
        }
    }
    for _ in 0..MAX_ITER {
        let mut next = [0.0; N];
        for i in 0..N {
            next[i] += 0.5 * pi[i];
            for j in 0..N {
                next[j] += 0.5 * pi[i] * p[i][j];
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let change: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if change < 1e-12 {
            return Ok(pi);
        }
    }
    Err(Error::NoConvergence(MAX_ITER))
}

fn state(i: usize) -> ProductionState {
    ProductionState::from_index(i).expect("state index in range")
}

/// Transition counts observed on the laser-cutting machine, rows = from,
/// columns = to, in state order.
pub const REFERENCE_COUNTS: CountMatrix = [
    [0, 4, 296, 17, 151],
    [51, 0, 36, 21, 0],
    [198, 52, 0, 2, 15],
    [9, 0, 31, 0, 0],
    [63, 0, 103, 0, 0],
];
