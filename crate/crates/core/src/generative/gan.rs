//! Generator/discriminator pair trained with alternating BCE updates.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::data::{latent_dim_for, TrainConfig, TrainingSet};
use super::vae::standard_normal;
use super::{clamp_open_unit, LossHistory, SAMPLE_CHUNK};
use crate::domain::ProductionState;
use crate::error::{Error, Result};
use crate::neural::{bce_loss, Activation, AdamConfig, DenseNetwork, Matrix, OptimizerState, HIDDEN_WIDTHS};
use crate::normalize::NormalizationSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct GanModel {
    pub(crate) generator: DenseNetwork,
    pub(crate) discriminator: DenseNetwork,
    pub(crate) data_dim: usize,
    pub(crate) latent_dim: usize,
    pub(crate) norm: NormalizationSpec,
    pub state: Option<ProductionState>,
}

impl GanModel {
    fn new<R: Rng + ?Sized>(data_dim: usize, norm: NormalizationSpec, rng: &mut R) -> Result<Self> {
        if norm.dim() != data_dim {
            return Err(Error::DimensionMismatch {
                expected: data_dim,
                got: norm.dim(),
            });
        }
        let latent_dim = latent_dim_for(data_dim);
        let generator = DenseNetwork::mlp(latent_dim, &HIDDEN_WIDTHS, Activation::Relu, data_dim, Activation::Sigmoid, rng);
        let discriminator = DenseNetwork::mlp(data_dim, &HIDDEN_WIDTHS, Activation::Relu, 1, Activation::Sigmoid, rng);
        Ok(Self {
            generator,
            discriminator,
            data_dim,
            latent_dim,
            norm,
            state: None,
        })
    }

    pub(crate) fn from_parts(
        generator: DenseNetwork,
        discriminator: DenseNetwork,
        norm: NormalizationSpec,
        state: Option<ProductionState>,
    ) -> Result<Self> {
        let data_dim = generator.output_dim();
        for (got, expected) in [
            (discriminator.input_dim(), data_dim),
            (discriminator.output_dim(), 1),
            (norm.dim(), data_dim),
        ] {
            if got != expected {
                return Err(Error::DimensionMismatch { expected, got });
            }
        }
        Ok(Self {
            latent_dim: generator.input_dim(),
            generator,
            discriminator,
            data_dim,
            norm,
            state,
        })
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn normalization(&self) -> &NormalizationSpec {
        &self.norm
    }

    pub fn networks(&self) -> [(&'static str, &DenseNetwork); 2] {
        [("generator", &self.generator), ("discriminator", &self.discriminator)]
    }

    /// Discriminator's probability that each row is real.
    pub fn discriminate(&self, x: &Matrix) -> Result<Matrix> {
        self.discriminator.predict(x)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Matrix> {
        let mut out = Matrix::zeros(n, self.data_dim);
        let mut done = 0;
        while done < n {
            let m = SAMPLE_CHUNK.min(n - done);
            let z = standard_normal(m, self.latent_dim, rng);
            let x = self.generator.predict(&z)?;
            out.data_mut()[done * self.data_dim..(done + m) * self.data_dim].copy_from_slice(x.data());
            done += m;
        }
        Ok(clamp_open_unit(out))
    }
}

/// One discriminator step then one generator step per mini-batch. The
/// history has two columns: generator loss, discriminator loss.
pub fn train_gan(data: &TrainingSet, norm: NormalizationSpec, cfg: &TrainConfig) -> Result<(GanModel, LossHistory)> {
    cfg.check_data(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = GanModel::new(data.dim(), norm, &mut rng)?;
    let adam = AdamConfig::with_learning_rate(cfg.learning_rate);
    let mut opt_g = OptimizerState::new(&model.generator, adam);
    let mut opt_d = OptimizerState::new(&model.discriminator, adam);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = LossHistory::new(&["generator", "discriminator"]);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut g_total, mut d_total) = (0.0, 0.0);
        let nan = |e: Error| match e {
            Error::NonFiniteGradient => Error::NonFiniteLoss { epoch },
            other => other,
        };
        for batch in order.chunks(cfg.batch_size) {
            let b = batch.len();
            let (real, _) = data.gather(batch);
            let ones = Matrix::filled(b, 1, 1.0);
            let zeros = Matrix::zeros(b, 1);

            // discriminator: real -> 1, fake -> 0
            let z = standard_normal(b, model.latent_dim, &mut rng);
            let fake = model.generator.predict(&z)?;
            let real_cache = model.discriminator.forward(&real)?;
            let fake_cache = model.discriminator.forward(&fake)?;
            let (l_real, g_real) = bce_loss(real_cache.output(), &ones)?;
            let (l_fake, g_fake) = bce_loss(fake_cache.output(), &zeros)?;
            let (mut d_grads, _) = model.discriminator.backward(&real_cache, &g_real)?;
            let (d_fake_grads, _) = model.discriminator.backward(&fake_cache, &g_fake)?;
            d_grads.add_assign(&d_fake_grads);
            let d_loss = l_real + l_fake;

            // generator: fresh noise, fool the updated discriminator
            let z = standard_normal(b, model.latent_dim, &mut rng);
            let gen_cache = model.generator.forward(&z)?;
            opt_d.step(&mut model.discriminator, &d_grads).map_err(nan)?;
            let judged = model.discriminator.forward(gen_cache.output())?;
            let (g_loss, g_out) = bce_loss(judged.output(), &ones)?;
            let (_, g_x) = model.discriminator.backward(&judged, &g_out)?;
            let (g_grads, _) = model.generator.backward(&gen_cache, &g_x)?;
            opt_g.step(&mut model.generator, &g_grads).map_err(nan)?;

            if !(g_loss.is_finite() && d_loss.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            g_total += g_loss * b as f64;
            d_total += d_loss * b as f64;
        }
        let n = data.len() as f64;
        history.push(&[g_total / n, d_total / n]);
    }
    Ok((model, history))
}

pub fn sample_gan<R: Rng + ?Sized>(model: &GanModel, n: usize, rng: &mut R) -> Result<Matrix> {
    model.sample(n, rng)
}
