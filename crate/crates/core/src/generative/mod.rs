//! VAE, conditional VAE and GAN packet models.
//!
//! Models learn normalized rows: the log-rescaled, min-max scaled
//! interarrival time (1D) or interarrival time and packet size (2D). Each
//! model carries the normalization it was trained with, so samples map back
//! to milliseconds and bytes.

mod data;
mod gan;
mod persist;
mod vae;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use data::{
    feature_rows, latent_dim_for, requantize_size, usable_samples, DataMode, TrainConfig, TrainingSet,
};
pub use gan::{sample_gan, train_gan, GanModel};
pub use persist::{load_model, save_model, MODEL_FILE_VERSION};
pub use vae::{
    reparameterize, sample_cvae, sample_vae, train_cvae, train_vae, Autoencoder, CvaeModel, VaeModel,
    VaeObjective,
};

use crate::domain::{ProductionState, TrafficSample};
use crate::error::{Error, Result};
use crate::neural::Matrix;
use crate::normalize::NormalizationSpec;

/// Rows generated per decoder call when sampling.
pub(crate) const SAMPLE_CHUNK: usize = 4096;

/// Keeps sigmoid outputs strictly inside `(0, 1)` even where the activation
/// saturates to exactly 0.0 or 1.0 in floating point.
pub(crate) fn clamp_open_unit(mut m: Matrix) -> Matrix {
    for v in m.data_mut() {
        *v = v.clamp(f64::EPSILON, 1.0 - f64::EPSILON);
    }
    m
}

/// Per-epoch loss values, one column per tracked loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossHistory {
    columns: Vec<String>,
    epochs: Vec<Vec<f64>>,
}

impl LossHistory {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            epochs: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.epochs.push(values.to_vec());
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.epochs.iter().map(|row| row[i]).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.epochs.iter().flatten().all(|v| v.is_finite())
    }

    /// Mean of column `i` over epochs `range`.
    pub fn window_mean(&self, i: usize, range: std::ops::Range<usize>) -> f64 {
        let vals = &self.epochs[range];
        vals.iter().map(|r| r[i]).sum::<f64>() / vals.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("epoch,{}\n", self.columns.join(","));
        for (e, row) in self.epochs.iter().enumerate() {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("{},{}\n", e + 1, vals.join(",")));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Vae,
    Cvae,
    Gan,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Vae, ModelKind::Cvae, ModelKind::Gan];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Vae => "vae",
            ModelKind::Cvae => "cvae",
            ModelKind::Gan => "gan",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model kind `{s}`")))
    }
}

/// Any trained packet model.
#[derive(Debug, Clone, PartialEq)]
pub enum GenerativeModel {
    Vae(VaeModel),
    Cvae(CvaeModel),
    Gan(GanModel),
}

impl From<VaeModel> for GenerativeModel {
    fn from(m: VaeModel) -> Self {
        GenerativeModel::Vae(m)
    }
}

impl From<CvaeModel> for GenerativeModel {
    fn from(m: CvaeModel) -> Self {
        GenerativeModel::Cvae(m)
    }
}

impl From<GanModel> for GenerativeModel {
    fn from(m: GanModel) -> Self {
        GenerativeModel::Gan(m)
    }
}

impl GenerativeModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            GenerativeModel::Vae(_) => ModelKind::Vae,
            GenerativeModel::Cvae(_) => ModelKind::Cvae,
            GenerativeModel::Gan(_) => ModelKind::Gan,
        }
    }

    pub fn data_dim(&self) -> usize {
        match self {
            GenerativeModel::Vae(m) => m.inner.data_dim,
            GenerativeModel::Cvae(m) => m.inner.data_dim,
            GenerativeModel::Gan(m) => m.data_dim,
        }
    }

    pub fn mode(&self) -> DataMode {
        DataMode::from_dim(self.data_dim()).expect("models are 1D or 2D")
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            GenerativeModel::Vae(m) => m.inner.latent_dim,
            GenerativeModel::Cvae(m) => m.inner.latent_dim,
            GenerativeModel::Gan(m) => m.latent_dim,
        }
    }

    pub fn normalization(&self) -> &NormalizationSpec {
        match self {
            GenerativeModel::Vae(m) => &m.inner.norm,
            GenerativeModel::Cvae(m) => &m.inner.norm,
            GenerativeModel::Gan(m) => &m.norm,
        }
    }

    /// State the model was trained for; `None` for conditional or pooled models.
    pub fn state(&self) -> Option<ProductionState> {
        match self {
            GenerativeModel::Vae(m) => m.state,
            GenerativeModel::Cvae(_) => None,
            GenerativeModel::Gan(m) => m.state,
        }
    }

    pub fn is_conditional(&self) -> bool {
        matches!(self, GenerativeModel::Cvae(_))
    }

    /// Rows in `(0, 1)^d`. Conditional models need `state`; the others ignore it.
    pub fn sample_normalized<R: Rng + ?Sized>(
        &self,
        state: Option<ProductionState>,
        n: usize,
        rng: &mut R,
    ) -> Result<Matrix> {
        match self {
            GenerativeModel::Vae(m) => m.sample(n, rng),
            GenerativeModel::Gan(m) => m.sample(n, rng),
            GenerativeModel::Cvae(m) => {
                let s = state.ok_or_else(|| {
                    Error::InvalidArgument("conditional model needs a production state".into())
                })?;
                m.sample(s, n, rng)
            }
        }
    }

    /// Samples mapped back to milliseconds (and bytes in 2D).
    pub fn sample_values<R: Rng + ?Sized>(
        &self,
        state: Option<ProductionState>,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>> {
        let raw = self.sample_normalized(state, n, rng)?;
        raw.iter_rows().map(|r| self.normalization().denormalize(r)).collect()
    }

    /// Generated interarrival times in milliseconds; the first column of 2D
    /// models.
    pub fn sample_interarrivals<R: Rng + ?Sized>(
        &self,
        state: Option<ProductionState>,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        Ok(self.sample_values(state, n, rng)?.into_iter().map(|r| r[0]).collect())
    }
}

/// Trains one model from raw traffic samples.
///
/// `state` restricts VAE and GAN training to one state's samples; the CVAE
/// always trains on all states with one-hot conditions. Normalization bounds
/// come from the samples passed in, which should be the training split.
pub fn fit_model(
    kind: ModelKind,
    mode: DataMode,
    samples: &[TrafficSample],
    state: Option<ProductionState>,
    cfg: &TrainConfig,
) -> Result<(GenerativeModel, LossHistory)> {
    let selected: Vec<TrafficSample> = match (kind, state) {
        (ModelKind::Cvae, _) | (_, None) => usable_samples(samples, mode),
        (_, Some(s)) => usable_samples(samples, mode)
            .into_iter()
            .filter(|x| x.state == s)
            .collect(),
    };
    if selected.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: cfg.batch_size.max(2),
            got: selected.len(),
        });
    }
    let norm = NormalizationSpec::fit(&feature_rows(&selected, mode))?;
    let set = TrainingSet::from_samples(&selected, mode, &norm, kind == ModelKind::Cvae)?;
    Ok(match kind {
        ModelKind::Vae => {
            let (mut m, h) = train_vae(&set, norm, cfg)?;
            m.state = state;
            (m.into(), h)
        }
        ModelKind::Cvae => {
            let (m, h) = train_cvae(&set, norm, cfg)?;
            (m.into(), h)
        }
        ModelKind::Gan => {
            let (mut m, h) = train_gan(&set, norm, cfg)?;
            m.state = state;
            (m.into(), h)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_csv_shape() {
        let mut h = LossHistory::new(&["generator", "discriminator"]);
        h.push(&[1.0, 2.0]);
        h.push(&[0.5, 1.5]);
        let csv = h.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(csv.lines().next().unwrap(), "epoch,generator,discriminator");
        assert_eq!(h.window_mean(0, 0..2), 0.75);
    }

    #[test]
    fn kind_names() {
        assert_eq!("CVAE".parse::<ModelKind>().unwrap(), ModelKind::Cvae);
        assert!("wgan".parse::<ModelKind>().is_err());
        assert_eq!("2d".parse::<DataMode>().unwrap(), DataMode::TwoD);
    }
}
