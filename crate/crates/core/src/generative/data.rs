use serde::{Deserialize, Serialize};

use crate::domain::{quantize_payload, ProductionState, TrafficSample, PAYLOAD_QUANTUM};
use crate::error::{Error, Result};
use crate::neural::Matrix;
use crate::normalize::NormalizationSpec;

/// Which packet features a model learns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DataMode {
    /// Interarrival time only.
    #[serde(rename = "1d")]
    OneD,
    /// Interarrival time and packet size jointly.
    #[serde(rename = "2d")]
    TwoD,
}

impl DataMode {
    pub fn dim(self) -> usize {
        match self {
            DataMode::OneD => 1,
            DataMode::TwoD => 2,
        }
    }

    pub fn from_dim(dim: usize) -> Result<Self> {
        match dim {
            1 => Ok(DataMode::OneD),
            2 => Ok(DataMode::TwoD),
            d => Err(Error::InvalidArgument(format!("unsupported data dimension {d}"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DataMode::OneD => "1d",
            DataMode::TwoD => "2d",
        }
    }
}

impl std::str::FromStr for DataMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1d" => Ok(DataMode::OneD),
            "2d" => Ok(DataMode::TwoD),
            _ => Err(Error::InvalidArgument(format!("unknown mode `{s}` (expected 1d or 2d)"))),
        }
    }
}

/// Latent width paired with each data width.
pub fn latent_dim_for(data_dim: usize) -> usize {
    if data_dim >= 2 {
        4
    } else {
        2
    }
}

/// Raw feature rows for a mode. Zero-size packets have no logarithm and are
/// left out of 2D rows.
pub fn feature_rows(samples: &[TrafficSample], mode: DataMode) -> Vec<Vec<f64>> {
    samples
        .iter()
        .filter_map(|s| match mode {
            DataMode::OneD => Some(vec![s.interarrival_ms]),
            DataMode::TwoD => (s.size_bytes > 0).then(|| vec![s.interarrival_ms, s.size_bytes as f64]),
        })
        .collect()
}

/// Samples usable in `mode`, in input order.
pub fn usable_samples(samples: &[TrafficSample], mode: DataMode) -> Vec<TrafficSample> {
    samples
        .iter()
        .filter(|s| mode == DataMode::OneD || s.size_bytes > 0)
        .copied()
        .collect()
}

/// Maps a denormalized size back onto the 32-byte grid; never below one
/// quantum.
pub fn requantize_size(bytes: f64) -> u64 {
    quantize_payload(bytes.round().max(1.0) as u64).max(PAYLOAD_QUANTUM)
}

/// Normalized training rows in `[0, 1]^d`, optionally with a condition
/// vector per row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    values: Matrix,
    conditions: Option<Matrix>,
}

impl TrainingSet {
    pub fn new(values: Matrix) -> Result<Self> {
        if values.cols() == 0 {
            return Err(Error::InvalidArgument("training rows need at least one column".into()));
        }
        if let Some(&bad) = values.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfUnitRange(bad));
        }
        Ok(Self {
            values,
            conditions: None,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Attaches one condition row per sample. Validity of the one-hot
    /// encoding is checked when a conditional model trains on the set.
    pub fn with_conditions(mut self, conditions: Matrix) -> Result<Self> {
        if conditions.rows() != self.values.rows() {
            return Err(Error::DimensionMismatch {
                expected: self.values.rows(),
                got: conditions.rows(),
            });
        }
        self.conditions = Some(conditions);
        Ok(self)
    }

    pub fn with_states(self, states: &[ProductionState]) -> Result<Self> {
        let rows: Vec<[f64; 5]> = states.iter().map(|s| s.one_hot()).collect();
        let m = if rows.is_empty() {
            Matrix::zeros(0, ProductionState::COUNT)
        } else {
            Matrix::from_rows(&rows)?
        };
        self.with_conditions(m)
    }

    /// Builds a set from traffic samples under `norm`.
    pub fn from_samples(
        samples: &[TrafficSample],
        mode: DataMode,
        norm: &NormalizationSpec,
        conditioned: bool,
    ) -> Result<Self> {
        let usable = usable_samples(samples, mode);
        let rows = feature_rows(&usable, mode);
        let normalized = rows
            .iter()
            .map(|r| norm.normalize(r))
            .collect::<Result<Vec<_>>>()?;
        if normalized.is_empty() {
            return Err(Error::EmptySamples);
        }
        let set = Self::from_rows(&normalized)?;
        if conditioned {
            let states: Vec<_> = usable.iter().map(|s| s.state).collect();
            set.with_states(&states)
        } else {
            Ok(set)
        }
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn conditions(&self) -> Option<&Matrix> {
        self.conditions.as_ref()
    }

    pub(crate) fn gather(&self, indices: &[usize]) -> (Matrix, Option<Matrix>) {
        let pick = |m: &Matrix| {
            let mut out = Matrix::zeros(indices.len(), m.cols());
            for (r, &i) in indices.iter().enumerate() {
                out.row_mut(r).copy_from_slice(m.row(i));
            }
            out
        };
        (pick(&self.values), self.conditions.as_ref().map(pick))
    }
}

/// Mini-batch training hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub train_ratio: f64,
    pub seed: u64,
    /// Multiplier on the Gaussian KL term of the VAE objectives.
    #[serde(default = "unit")]
    pub kl_weight: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 500,
            learning_rate: 1e-3,
            train_ratio: 0.7,
            seed: 0,
            kl_weight: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument("batch size and epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return Err(Error::InvalidArgument("KL weight must be non-negative".into()));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::InvalidArgument("train ratio must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub(crate) fn check_data(&self, data: &TrainingSet) -> Result<()> {
        self.validate()?;
        if data.len() < self.batch_size {
            return Err(Error::TooFewSamples {
                needed: self.batch_size,
                got: data.len(),
            });
        }
        Ok(())
    }
}
