//! JSON model files.
//!
//! Floats are written with shortest round-trip formatting, so a load
//! followed by a save reproduces the file byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::gan::GanModel;
use super::vae::{Autoencoder, CvaeModel, VaeModel};
use super::{GenerativeModel, ModelKind};
use crate::domain::ProductionState;
use crate::error::{Error, Result};
use crate::neural::DenseNetwork;
use crate::normalize::NormalizationSpec;
use crate::smp::json_error;

pub const MODEL_FILE_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u64,
    kind: ModelKind,
    state: Option<ProductionState>,
    data_dim: usize,
    latent_dim: usize,
    condition_dim: usize,
    normalization: NormalizationSpec,
    networks: BTreeMap<String, DenseNetwork>,
}

impl GenerativeModel {
    pub fn to_json(&self) -> String {
        let networks: Vec<(&str, &DenseNetwork)> = match self {
            GenerativeModel::Vae(m) => m.inner.networks().to_vec(),
            GenerativeModel::Cvae(m) => m.inner.networks().to_vec(),
            GenerativeModel::Gan(m) => m.networks().to_vec(),
        };
        let condition_dim = match self {
            GenerativeModel::Cvae(m) => m.inner.condition_dim,
            _ => 0,
        };
        let file = ModelFile {
            version: MODEL_FILE_VERSION,
            kind: self.kind(),
            state: self.state(),
            data_dim: self.data_dim(),
            latent_dim: self.latent_dim(),
            condition_dim,
            normalization: self.normalization().clone(),
            networks: networks.into_iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("model serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(json_error)?;
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Malformed("missing `version`".into()))?;
        if version != MODEL_FILE_VERSION {
            return Err(Error::Version {
                found: version,
                expected: MODEL_FILE_VERSION,
            });
        }
        let mut file: ModelFile = serde_json::from_value(value).map_err(|e| Error::Malformed(e.to_string()))?;
        let mut take = |name: &str| -> Result<DenseNetwork> {
            let net = file
                .networks
                .remove(name)
                .ok_or_else(|| Error::Malformed(format!("missing network `{name}`")))?;
            // re-validate layer shapes, deserialization does not
            DenseNetwork::from_layers(net.layers().to_vec())
        };
        let model = match file.kind {
            ModelKind::Vae | ModelKind::Cvae => {
                let inner = Autoencoder::from_parts(
                    take("encoder")?,
                    take("mu_head")?,
                    take("logvar_head")?,
                    take("decoder")?,
                    file.condition_dim,
                    file.normalization,
                )?;
                if file.kind == ModelKind::Vae {
                    GenerativeModel::Vae(VaeModel {
                        inner,
                        state: file.state,
                    })
                } else {
                    GenerativeModel::Cvae(CvaeModel { inner })
                }
            }
            ModelKind::Gan => GenerativeModel::Gan(GanModel::from_parts(
                take("generator")?,
                take("discriminator")?,
                file.normalization,
                file.state,
            )?),
        };
        for (got, expected) in [(model.data_dim(), file.data_dim), (model.latent_dim(), file.latent_dim)] {
            if got != expected {
                return Err(Error::DimensionMismatch { expected, got });
            }
        }
        Ok(model)
    }
}

pub fn save_model(model: &GenerativeModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_json()).map_err(|e| Error::io(path, e))
}

/// Loads a model file; with `expected` set, a file of another kind is an error.
pub fn load_model(path: impl AsRef<Path>, expected: Option<ModelKind>) -> Result<GenerativeModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let model = GenerativeModel::from_json(&text)?;
    if let Some(k) = expected {
        if model.kind() != k {
            return Err(Error::KindMismatch {
                expected: k.to_string(),
                found: model.kind().to_string(),
            });
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generative::{fit_model, DataMode, TrainConfig};
    use crate::domain::TrafficSample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn samples() -> Vec<TrafficSample> {
        (0..80)
            .map(|i| TrafficSample {
                interarrival_ms: 1.0 + (i % 17) as f64,
                size_bytes: 32 * (1 + i % 3) as u64,
                state: ProductionState::from_index(i % 5).unwrap(),
            })
            .collect()
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn round_trip_every_kind() {
        let dir = tempfile::tempdir().unwrap();
        for kind in ModelKind::ALL {
            for mode in [DataMode::OneD, DataMode::TwoD] {
                let (m, _) = fit_model(kind, mode, &samples(), None, &cfg()).unwrap();
                let path = dir.path().join(format!("{kind}-{}.json", mode.label()));
                save_model(&m, &path).unwrap();
                let back = load_model(&path, Some(kind)).unwrap();
                assert_eq!(back, m);
                assert_eq!(back.to_json(), m.to_json());
                let a = m.sample_normalized(Some(ProductionState::Stopped), 50, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
                let b = back.sample_normalized(Some(ProductionState::Stopped), 50, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn distinct_errors() {
        let (m, _) = fit_model(ModelKind::Gan, DataMode::OneD, &samples(), None, &cfg()).unwrap();
        let text = m.to_json();
        assert!(matches!(GenerativeModel::from_json(&text[..text.len() / 2]), Err(Error::Truncated(_))));
        let bumped = text.replacen("\"version\": 1", "\"version\": 9", 1);
        assert!(matches!(GenerativeModel::from_json(&bumped), Err(Error::Version { found: 9, .. })));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gan.json");
        save_model(&m, &path).unwrap();
        assert!(matches!(load_model(&path, Some(ModelKind::Vae)), Err(Error::KindMismatch { .. })));
    }
}
