//! Log-scale histograms, KL divergence and the model comparison table.

mod synthetic;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{ProductionState, TrafficSample};
use crate::error::{Error, Result};
use crate::generative::GenerativeModel;
use crate::traffic::exponential_baseline;

pub use synthetic::{
    generate_synthetic_dataset, MixtureComponent, DEFAULT_JUMPS, StateSpec, SyntheticDataset, SyntheticSpec, SYNTH_CONTROL_ID,
    SYNTH_PACKET_ID,
};

/// Smoothing mass given to empty bins of `q`.
pub const KL_EPSILON: f64 = 1e-10;

/// Bins used by [`compare_models`].
pub const COMPARISON_BINS: usize = 50;

/// Minimum generated sample count per table cell.
pub const MIN_GENERATED: usize = 10_000;

/// Row labels of the comparison table, in order.
pub const ROW_LABELS: [&str; 6] = ["VAE 1D", "CVAE 1D", "GAN 1D", "VAE 2D", "CVAE 2D", "GAN 2D"];

/// Histogram over equal-width bins of ln(ms).
#[derive(Debug, Clone, PartialEq)]
pub struct LogHistogram {
    edges: Vec<f64>,
    masses: Vec<f64>,
    sample_count: usize,
}

impl LogHistogram {
    /// Rebuilds a histogram from stored edges and masses.
    pub fn from_parts(edges: Vec<f64>, masses: Vec<f64>, sample_count: usize) -> Result<Self> {
        if edges.len() < 3 || masses.len() + 1 != edges.len() {
            return Err(Error::Malformed(format!("{} edges for {} masses", edges.len(), masses.len())));
        }
        if !edges.windows(2).all(|w| w[0] < w[1]) || masses.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::Malformed("edges must increase and masses be non-negative".into()));
        }
        Ok(Self {
            edges,
            masses,
            sample_count,
        })
    }

    /// Bin edges in ln(ms).
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn bins(&self) -> usize {
        self.masses.len()
    }

    /// First and last edge, in ln(ms).
    pub fn range(&self) -> (f64, f64) {
        (self.edges[0], self.edges[self.edges.len() - 1])
    }

    /// Histogram of `samples` on this histogram's edges.
    pub fn rebin(&self, samples: &[f64]) -> Result<LogHistogram> {
        fill(self.edges.clone(), samples)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("edge_lo,edge_hi,mass\n");
        for (w, m) in self.edges.windows(2).zip(&self.masses) {
            let _ = writeln!(out, "{},{},{}", w[0], w[1], m);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut masses = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Parse {
                line: (i + 1) as u64,
                message: format!("expected `edge_lo,edge_hi,mass`, got `{line}`"),
            };
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad())?;
            if vals.len() != 3 {
                return Err(bad());
            }
            match edges.last() {
                None => edges.push(vals[0]),
                Some(&hi) if hi == vals[0] => {}
                Some(_) => return Err(bad()),
            }
            edges.push(vals[1]);
            masses.push(vals[2]);
        }
        // sample count is not stored
        Self::from_parts(edges, masses, 0)
    }
}

/// Bins `samples` (ms) into `bins` equal-width bins of ln(ms).
///
/// `range` gives the ln-space bounds; otherwise the sample minimum and
/// maximum are used. Bins are left-open `(lo, hi]` except the first, which
/// also holds its lower edge. Values outside the range go to the end bins.
pub fn build_histogram(samples: &[f64], bins: usize, range: Option<(f64, f64)>) -> Result<LogHistogram> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if bins < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bins, got {bins}")));
    }
    if let Some(&bad) = samples.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::NonPositive(bad));
    }
    let (lo, hi) = match range {
        Some((lo, hi)) => {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidArgument(format!("bad histogram range ({lo}, {hi})")));
            }
            (lo, hi)
        }
        None => {
            let logs = samples.iter().map(|v| v.ln());
            let lo = logs.clone().fold(f64::INFINITY, f64::min);
            let hi = logs.fold(f64::NEG_INFINITY, f64::max);
            if lo < hi {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        }
    };
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    edges[bins] = hi;
    fill(edges, samples)
}

fn fill(edges: Vec<f64>, samples: &[f64]) -> Result<LogHistogram> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let bins = edges.len() - 1;
    let lo = edges[0];
    let width = (edges[bins] - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in samples {
        if !(v > 0.0) {
            return Err(Error::NonPositive(v));
        }
        let x = v.ln();
        let guess = ((x - lo) / width).ceil() - 1.0;
        let mut i = if guess.is_nan() { 0 } else { guess.clamp(0.0, (bins - 1) as f64) as usize };
        // settle rounding at the edges
        while i > 0 && x <= edges[i] {
            i -= 1;
        }
        while i + 1 < bins && x > edges[i + 1] {
            i += 1;
        }
        counts[i] += 1;
    }
    let n = samples.len() as f64;
    Ok(LogHistogram {
        masses: counts.iter().map(|&c| c as f64 / n).collect(),
        edges,
        sample_count: samples.len(),
    })
}

/// KL(p || q) in nats.
///
/// When `q` is empty in a bin where `p` has mass, `q` is smoothed with
/// [`KL_EPSILON`] per bin and renormalized before the sum.
pub fn kl_divergence(p: &LogHistogram, q: &LogHistogram) -> Result<f64> {
    if p.edges.len() != q.edges.len() || p.edges.iter().zip(&q.edges).any(|(a, b)| a.to_bits() != b.to_bits()) {
        return Err(Error::EdgeMismatch);
    }
    Ok(kl_masses(&p.masses, &q.masses))
}

/// KL(p || q) over raw mass vectors of equal length, smoothed as in
/// [`kl_divergence`].
pub fn kl_masses(p: &[f64], q: &[f64]) -> f64 {
    let needs_smoothing = p.iter().zip(q).any(|(&pi, &qi)| pi > 0.0 && qi <= 0.0);
    let norm = 1.0 + KL_EPSILON * q.len() as f64;
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            let qi = if needs_smoothing { (qi + KL_EPSILON) / norm } else { qi };
            kl += pi * (pi / qi).ln();
        }
    }
    kl.max(0.0)
}

/// KL between real and generated interarrival times on 50 ln-bins fit to
/// the real data.
pub fn kl_real_generated(real: &[f64], generated: &[f64], bins: usize) -> Result<f64> {
    let p = build_histogram(real, bins, None)?;
    let q = p.rebin(generated)?;
    kl_divergence(&p, &q)
}

pub fn export_histogram(hist: &LogHistogram, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, hist.to_csv()).map_err(|e| Error::io(path, e))
}

pub fn import_histogram(path: impl AsRef<Path>) -> Result<LogHistogram> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LogHistogram::from_csv(&text)
}

/// Anything that can produce interarrival times for a state.
pub trait InterarrivalSampler: Sync {
    fn sample_interarrivals(&self, state: ProductionState, n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>>;
}

impl InterarrivalSampler for GenerativeModel {
    fn sample_interarrivals(&self, state: ProductionState, n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        GenerativeModel::sample_interarrivals(self, Some(state), n, rng)
    }
}

/// Bootstrap resampling of stored interarrival times.
#[derive(Debug, Clone)]
pub struct ReplaySampler {
    values: Vec<f64>,
}

impl ReplaySampler {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySamples);
        }
        Ok(Self { values })
    }
}

impl InterarrivalSampler for ReplaySampler {
    fn sample_interarrivals(&self, _: ProductionState, n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        use rand::Rng;
        Ok((0..n).map(|_| self.values[rng.random_range(0..self.values.len())]).collect())
    }
}

/// Exponential interarrival times with a fixed rate per ms.
#[derive(Debug, Clone, Copy)]
pub struct ExponentialSampler {
    pub rate_lambda: f64,
}

impl ExponentialSampler {
    /// Rate matching the mean of `samples`.
    pub fn fit(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        Ok(Self { rate_lambda: 1.0 / mean })
    }
}

impl InterarrivalSampler for ExponentialSampler {
    fn sample_interarrivals(&self, _: ProductionState, n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        exponential_baseline(self.rate_lambda, n, rng)
    }
}

/// One table row: a label and the sampler used for each state.
pub struct ComparisonRow<'a> {
    pub label: String,
    pub cells: [Option<&'a dyn InterarrivalSampler>; ProductionState::COUNT],
}

impl<'a> ComparisonRow<'a> {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            cells: [None; ProductionState::COUNT],
        }
    }

    pub fn with(mut self, state: ProductionState, sampler: &'a dyn InterarrivalSampler) -> Self {
        self.cells[state.index()] = Some(sampler);
        self
    }

    /// The same sampler for every state.
    pub fn uniform(label: impl Into<String>, sampler: &'a dyn InterarrivalSampler) -> Self {
        Self {
            label: label.into(),
            cells: [Some(sampler); ProductionState::COUNT],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<(String, [f64; ProductionState::COUNT])>,
}

impl ComparisonTable {
    pub fn get(&self, label: &str, state: ProductionState) -> Option<f64> {
        self.rows.iter().find(|(l, _)| l == label).map(|(_, v)| v[state.index()])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for s in ProductionState::ALL {
            out.push(',');
            out.push_str(s.name());
        }
        out.push('\n');
        for (label, vals) in &self.rows {
            out.push_str(label);
            for v in vals {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Real test interarrival times grouped by state.
pub fn interarrivals_by_state(samples: &[TrafficSample]) -> [Vec<f64>; ProductionState::COUNT] {
    let mut out: [Vec<f64>; ProductionState::COUNT] = Default::default();
    for s in samples {
        out[s.state.index()].push(s.interarrival_ms);
    }
    out
}

/// Real per-state histograms on [`COMPARISON_BINS`] bins.
pub fn real_histograms(real: &[Vec<f64>; ProductionState::COUNT]) -> Result<Vec<LogHistogram>> {
    ProductionState::ALL
        .into_iter()
        .map(|s| {
            build_histogram(&real[s.index()], COMPARISON_BINS, None).map_err(|e| match e {
                Error::EmptySamples => Error::InvalidArgument(format!("no test samples for {s}")),
                other => other,
            })
        })
        .collect()
}

/// KL of every (row, state) cell against the real test data.
///
/// Each cell draws max(real count, [`MIN_GENERATED`]) samples with its own
/// random stream derived from `seed`, the row index and the state.
pub fn compare_models(
    real: &[Vec<f64>; ProductionState::COUNT],
    rows: &[ComparisonRow<'_>],
    seed: u64,
) -> Result<ComparisonTable> {
    Ok(compare_models_with_histograms(real, rows, seed)?.0)
}

/// [`compare_models`] plus the real histogram of each state and the
/// generated histogram of each cell.
pub fn compare_models_with_histograms(
    real: &[Vec<f64>; ProductionState::COUNT],
    rows: &[ComparisonRow<'_>],
    seed: u64,
) -> Result<(ComparisonTable, Vec<LogHistogram>, Vec<Vec<LogHistogram>>)> {
    let hists = real_histograms(real)?;
    let mut table = ComparisonTable { rows: Vec::new() };
    let mut generated_hists = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        let mut vals = [0.0; ProductionState::COUNT];
        let mut row_hists = Vec::with_capacity(ProductionState::COUNT);
        for s in ProductionState::ALL {
            let sampler = row.cells[s.index()].ok_or_else(|| Error::MissingModel {
                row: row.label.clone(),
                state: s,
            })?;
            let n = real[s.index()].len().max(MIN_GENERATED);
            let mut rng = cell_rng(seed, r, s);
            let generated = sampler.sample_interarrivals(s, n, &mut rng)?;
            let q = hists[s.index()].rebin(&generated)?;
            vals[s.index()] = kl_divergence(&hists[s.index()], &q)?;
            row_hists.push(q);
        }
        table.rows.push((row.label.clone(), vals));
        generated_hists.push(row_hists);
    }
    Ok((table, hists, generated_hists))
}

/// Random stream of one table cell.
pub fn cell_rng(seed: u64, row: usize, state: ProductionState) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((row * ProductionState::COUNT + state.index()) as u64 + 1);
    rng
}
