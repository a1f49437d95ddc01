//! Variational autoencoder, optionally conditioned on the production state.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::data::{latent_dim_for, TrainConfig, TrainingSet};
use super::{clamp_open_unit, LossHistory, SAMPLE_CHUNK};
use crate::domain::ProductionState;
use crate::error::{Error, Result};
use crate::neural::{
    bce_loss, gaussian_kl_loss, Activation, AdamConfig, DenseNetwork, Matrix, NetworkGradients, Objective,
    OptimizerState, HIDDEN_WIDTHS,
};
use crate::normalize::NormalizationSpec;

/// `z = mu + exp(logvar / 2) * eps`, `eps ~ N(0, I)`.
pub fn reparameterize<R: Rng + ?Sized>(mu: &Matrix, logvar: &Matrix, rng: &mut R) -> Result<Matrix> {
    let eps = standard_normal(mu.rows(), mu.cols(), rng);
    reparameterize_with(mu, logvar, &eps)
}

pub(crate) fn reparameterize_with(mu: &Matrix, logvar: &Matrix, eps: &Matrix) -> Result<Matrix> {
    if mu.shape() != logvar.shape() || mu.shape() != eps.shape() {
        return Err(Error::DimensionMismatch {
            expected: mu.data().len(),
            got: logvar.data().len(),
        });
    }
    let mut z = mu.clone();
    for ((zi, &lv), &e) in z.data_mut().iter_mut().zip(logvar.data()).zip(eps.data()) {
        *zi += (0.5 * lv).exp() * e;
    }
    Ok(z)
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape matches")
}

/// Encoder trunk with separate mean and log-variance heads, plus a decoder.
/// `condition_dim` is 0 for the plain VAE and 5 for the conditional one.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub(crate) trunk: DenseNetwork,
    pub(crate) mu_head: DenseNetwork,
    pub(crate) logvar_head: DenseNetwork,
    pub(crate) decoder: DenseNetwork,
    pub(crate) data_dim: usize,
    pub(crate) latent_dim: usize,
    pub(crate) condition_dim: usize,
    pub(crate) norm: NormalizationSpec,
}

pub(crate) struct AutoencoderGradients {
    trunk: NetworkGradients,
    mu_head: NetworkGradients,
    logvar_head: NetworkGradients,
    decoder: NetworkGradients,
}

pub(crate) struct StepLoss {
    pub total: f64,
}

impl Autoencoder {
    pub(crate) fn new<R: Rng + ?Sized>(
        data_dim: usize,
        condition_dim: usize,
        norm: NormalizationSpec,
        rng: &mut R,
    ) -> Result<Self> {
        if norm.dim() != data_dim {
            return Err(Error::DimensionMismatch {
                expected: data_dim,
                got: norm.dim(),
            });
        }
        let latent_dim = latent_dim_for(data_dim);
        let (trunk_hidden, trunk_out) = HIDDEN_WIDTHS.split_at(HIDDEN_WIDTHS.len() - 1);
        let trunk = DenseNetwork::mlp(
            data_dim + condition_dim,
            trunk_hidden,
            Activation::Relu,
            trunk_out[0],
            Activation::Relu,
            rng,
        );
        let mu_head = DenseNetwork::mlp(trunk_out[0], &[], Activation::Linear, latent_dim, Activation::Linear, rng);
        let logvar_head =
            DenseNetwork::mlp(trunk_out[0], &[], Activation::Linear, latent_dim, Activation::Linear, rng);
        let decoder = DenseNetwork::mlp(
            latent_dim + condition_dim,
            &HIDDEN_WIDTHS,
            Activation::Relu,
            data_dim,
            Activation::Sigmoid,
            rng,
        );
        Ok(Self {
            trunk,
            mu_head,
            logvar_head,
            decoder,
            data_dim,
            latent_dim,
            condition_dim,
            norm,
        })
    }

    pub(crate) fn from_parts(
        trunk: DenseNetwork,
        mu_head: DenseNetwork,
        logvar_head: DenseNetwork,
        decoder: DenseNetwork,
        condition_dim: usize,
        norm: NormalizationSpec,
    ) -> Result<Self> {
        let data_dim = decoder.output_dim();
        let latent_dim = mu_head.output_dim();
        let checks = [
            (trunk.input_dim(), data_dim + condition_dim),
            (mu_head.input_dim(), trunk.output_dim()),
            (logvar_head.input_dim(), trunk.output_dim()),
            (logvar_head.output_dim(), latent_dim),
            (decoder.input_dim(), latent_dim + condition_dim),
            (norm.dim(), data_dim),
        ];
        for (got, expected) in checks {
            if got != expected {
                return Err(Error::DimensionMismatch { expected, got });
            }
        }
        Ok(Self {
            trunk,
            mu_head,
            logvar_head,
            decoder,
            data_dim,
            latent_dim,
            condition_dim,
            norm,
        })
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn condition_dim(&self) -> usize {
        self.condition_dim
    }

    pub fn normalization(&self) -> &NormalizationSpec {
        &self.norm
    }

    pub fn networks(&self) -> [(&'static str, &DenseNetwork); 4] {
        [
            ("encoder", &self.trunk),
            ("mu_head", &self.mu_head),
            ("logvar_head", &self.logvar_head),
            ("decoder", &self.decoder),
        ]
    }

    fn with_condition(&self, m: &Matrix, c: Option<&Matrix>) -> Result<Matrix> {
        match (self.condition_dim, c) {
            (0, _) => Ok(m.clone()),
            (k, Some(c)) if c.cols() == k => m.hconcat(c),
            (k, c) => Err(Error::DimensionMismatch {
                expected: k,
                got: c.map_or(0, Matrix::cols),
            }),
        }
    }

    /// Encoder mean and log-variance for a batch.
    pub fn encode(&self, x: &Matrix, c: Option<&Matrix>) -> Result<(Matrix, Matrix)> {
        let h = self.trunk.predict(&self.with_condition(x, c)?)?;
        Ok((self.mu_head.predict(&h)?, self.logvar_head.predict(&h)?))
    }

    pub fn decode(&self, z: &Matrix, c: Option<&Matrix>) -> Result<Matrix> {
        self.decoder.predict(&self.with_condition(z, c)?)
    }

    /// BCE reconstruction plus Gaussian KL for one batch with fixed noise,
    /// and gradients for all four networks.
    pub(crate) fn loss_and_gradients(
        &self,
        x: &Matrix,
        c: Option<&Matrix>,
        eps: &Matrix,
        kl_weight: f64,
    ) -> Result<(StepLoss, AutoencoderGradients)> {
        let enc_in = self.with_condition(x, c)?;
        let trunk_cache = self.trunk.forward(&enc_in)?;
        let h = trunk_cache.output();
        let mu_cache = self.mu_head.forward(h)?;
        let lv_cache = self.logvar_head.forward(h)?;
        let (mu, logvar) = (mu_cache.output(), lv_cache.output());
        let z = reparameterize_with(mu, logvar, eps)?;
        let dec_cache = self.decoder.forward(&self.with_condition(&z, c)?)?;

        let (bce, d_out) = bce_loss(dec_cache.output(), x)?;
        let (kl, mut kl_dmu, mut kl_dlv) = gaussian_kl_loss(mu, logvar)?;
        if kl_weight != 1.0 {
            kl_dmu = kl_dmu.map(|v| v * kl_weight);
            kl_dlv = kl_dlv.map(|v| v * kl_weight);
        }

        let (decoder, d_dec_in) = self.decoder.backward(&dec_cache, &d_out)?;
        let d_z = d_dec_in.left_cols(self.latent_dim);
        let mut d_mu = kl_dmu;
        d_mu.add_assign(&d_z)?;
        let mut d_lv = kl_dlv;
        for (((g, &dz), &lv), &e) in d_lv
            .data_mut()
            .iter_mut()
            .zip(d_z.data())
            .zip(logvar.data())
            .zip(eps.data())
        {
            *g += dz * e * 0.5 * (0.5 * lv).exp();
        }
        let (mu_head, mut d_h) = self.mu_head.backward(&mu_cache, &d_mu)?;
        let (logvar_head, d_h2) = self.logvar_head.backward(&lv_cache, &d_lv)?;
        d_h.add_assign(&d_h2)?;
        let (trunk, _) = self.trunk.backward(&trunk_cache, &d_h)?;

        Ok((
            StepLoss { total: bce + kl_weight * kl },
            AutoencoderGradients {
                trunk,
                mu_head,
                logvar_head,
                decoder,
            },
        ))
    }

    /// Unit-weight loss and the ReLU on/off states of all four networks.
    fn loss_and_kinks(&self, x: &Matrix, c: Option<&Matrix>, eps: &Matrix) -> Result<(f64, Vec<bool>)> {
        let trunk_cache = self.trunk.forward(&self.with_condition(x, c)?)?;
        let h = trunk_cache.output();
        let mu_cache = self.mu_head.forward(h)?;
        let lv_cache = self.logvar_head.forward(h)?;
        let (mu, logvar) = (mu_cache.output(), lv_cache.output());
        let z = reparameterize_with(mu, logvar, eps)?;
        let dec_cache = self.decoder.forward(&self.with_condition(&z, c)?)?;
        let (bce, _) = bce_loss(dec_cache.output(), x)?;
        let (kl, _, _) = gaussian_kl_loss(mu, logvar)?;
        let mut pattern = self.trunk.relu_pattern_of(&trunk_cache);
        pattern.extend(self.mu_head.relu_pattern_of(&mu_cache));
        pattern.extend(self.logvar_head.relu_pattern_of(&lv_cache));
        pattern.extend(self.decoder.relu_pattern_of(&dec_cache));
        Ok((bce + kl, pattern))
    }

    fn train(mut self, data: &TrainingSet, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<(Self, LossHistory)> {
        let adam = AdamConfig::with_learning_rate(cfg.learning_rate);
        let mut opt = [
            OptimizerState::new(&self.trunk, adam),
            OptimizerState::new(&self.mu_head, adam),
            OptimizerState::new(&self.logvar_head, adam),
            OptimizerState::new(&self.decoder, adam),
        ];
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut history = LossHistory::new(&["loss"]);
        for epoch in 0..cfg.epochs {
            order.shuffle(rng);
            let mut total = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                let (x, c) = data.gather(batch);
                let eps = standard_normal(batch.len(), self.latent_dim, rng);
                let (loss, g) = self.loss_and_gradients(&x, c.as_ref(), &eps, cfg.kl_weight)?;
                if !loss.total.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch });
                }
                total += loss.total * batch.len() as f64;
                let nan = |e: Error| match e {
                    Error::NonFiniteGradient => Error::NonFiniteLoss { epoch },
                    other => other,
                };
                opt[0].step(&mut self.trunk, &g.trunk).map_err(nan)?;
                opt[1].step(&mut self.mu_head, &g.mu_head).map_err(nan)?;
                opt[2].step(&mut self.logvar_head, &g.logvar_head).map_err(nan)?;
                opt[3].step(&mut self.decoder, &g.decoder).map_err(nan)?;
            }
            history.push(&[total / data.len() as f64]);
        }
        Ok((self, history))
    }

    /// Decodes `n` prior draws. `c` supplies one condition row per sample.
    fn generate<R: Rng + ?Sized>(&self, n: usize, c: Option<&[f64]>, rng: &mut R) -> Result<Matrix> {
        let mut out = Matrix::zeros(n, self.data_dim);
        let mut done = 0;
        while done < n {
            let m = SAMPLE_CHUNK.min(n - done);
            let z = standard_normal(m, self.latent_dim, rng);
            let cond = c.map(|row| {
                let mut cm = Matrix::zeros(m, row.len());
                for r in 0..m {
                    cm.row_mut(r).copy_from_slice(row);
                }
                cm
            });
            let x = self.decode(&z, cond.as_ref())?;
            out.data_mut()[done * self.data_dim..(done + m) * self.data_dim].copy_from_slice(x.data());
            done += m;
        }
        Ok(clamp_open_unit(out))
    }
}

/// Unconditional VAE.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub(crate) inner: Autoencoder,
    /// State whose data the model was trained on, if any.
    pub state: Option<ProductionState>,
}

/// VAE with a one-hot production-state condition on both encoder and decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct CvaeModel {
    pub(crate) inner: Autoencoder,
}

impl VaeModel {
    pub fn autoencoder(&self) -> &Autoencoder {
        &self.inner
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Matrix> {
        self.inner.generate(n, None, rng)
    }
}

impl CvaeModel {
    pub fn autoencoder(&self) -> &Autoencoder {
        &self.inner
    }

    pub fn sample<R: Rng + ?Sized>(&self, state: ProductionState, n: usize, rng: &mut R) -> Result<Matrix> {
        self.inner.generate(n, Some(&state.one_hot()), rng)
    }
}

/// Trains a VAE on normalized rows with BCE reconstruction plus KL loss.
pub fn train_vae(data: &TrainingSet, norm: NormalizationSpec, cfg: &TrainConfig) -> Result<(VaeModel, LossHistory)> {
    cfg.check_data(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ae = Autoencoder::new(data.dim(), 0, norm, &mut rng)?;
    let (inner, history) = ae.train(data, cfg, &mut rng)?;
    Ok((VaeModel { inner, state: None }, history))
}

/// Trains one conditional VAE over all states; every row needs a valid
/// one-hot condition.
pub fn train_cvae(data: &TrainingSet, norm: NormalizationSpec, cfg: &TrainConfig) -> Result<(CvaeModel, LossHistory)> {
    cfg.check_data(data)?;
    let conditions = data
        .conditions()
        .ok_or_else(|| Error::InvalidArgument("conditional training needs state labels".into()))?;
    for (i, row) in conditions.iter_rows().enumerate() {
        if ProductionState::from_one_hot(row).is_none() {
            return Err(Error::InvalidOneHot(i));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ae = Autoencoder::new(data.dim(), ProductionState::COUNT, norm, &mut rng)?;
    let (inner, history) = ae.train(data, cfg, &mut rng)?;
    Ok((CvaeModel { inner }, history))
}

pub fn sample_vae<R: Rng + ?Sized>(model: &VaeModel, n: usize, rng: &mut R) -> Result<Matrix> {
    model.sample(n, rng)
}

pub fn sample_cvae<R: Rng + ?Sized>(model: &CvaeModel, state: ProductionState, n: usize, rng: &mut R) -> Result<Matrix> {
    model.sample(state, n, rng)
}

/// Full VAE objective on one batch with frozen noise, for gradient checks.
pub struct VaeObjective {
    pub model: Autoencoder,
    pub x: Matrix,
    pub conditions: Option<Matrix>,
    pub eps: Matrix,
}

impl VaeObjective {
    pub fn new<R: Rng + ?Sized>(model: Autoencoder, x: Matrix, conditions: Option<Matrix>, rng: &mut R) -> Self {
        let eps = standard_normal(x.rows(), model.latent_dim, rng);
        Self {
            model,
            x,
            conditions,
            eps,
        }
    }

    /// A randomly initialized autoencoder with the standard layer widths.
    pub fn random<R: Rng + ?Sized>(data_dim: usize, condition_dim: usize, rng: &mut R) -> Result<Autoencoder> {
        let bounds = (0..data_dim)
            .map(|_| crate::normalize::DimBounds {
                min_log: 0.0,
                max_log: 1.0,
            })
            .collect();
        Autoencoder::new(
            data_dim,
            condition_dim,
            NormalizationSpec::from_bounds(bounds)?,
            rng,
        )
    }

    fn networks_mut(&mut self) -> [&mut DenseNetwork; 4] {
        let m = &mut self.model;
        [&mut m.trunk, &mut m.mu_head, &mut m.logvar_head, &mut m.decoder]
    }
}

impl Objective for VaeObjective {
    fn parameter_count(&self) -> usize {
        self.model.networks().iter().map(|(_, n)| n.parameter_count()).sum()
    }

    fn parameter_mut(&mut self, mut index: usize) -> &mut f64 {
        for net in self.networks_mut() {
            let n = net.parameter_count();
            if index < n {
                return net.parameter_mut(index).expect("index in range");
            }
            index -= n;
        }
        panic!("parameter index out of range")
    }

    fn loss(&self) -> Result<f64> {
        Ok(self
            .model
            .loss_and_gradients(&self.x, self.conditions.as_ref(), &self.eps, 1.0)?
            .0
            .total)
    }

    fn loss_and_gradient(&self) -> Result<(f64, Vec<f64>)> {
        let (l, g) = self
            .model
            .loss_and_gradients(&self.x, self.conditions.as_ref(), &self.eps, 1.0)?;
        let flat = g
            .trunk
            .iter()
            .chain(g.mu_head.iter())
            .chain(g.logvar_head.iter())
            .chain(g.decoder.iter())
            .collect();
        Ok((l.total, flat))
    }

    fn loss_and_kinks(&self) -> Result<(f64, Vec<bool>)> {
        self.model.loss_and_kinks(&self.x, self.conditions.as_ref(), &self.eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{check_objective, DEFAULT_STEP};

    #[test]
    fn zero_variance_returns_mean() {
        let mu = Matrix::from_rows(&[[0.3, -1.5]]).unwrap();
        let lv = Matrix::filled(1, 2, -50.0);
        let z = reparameterize(&mu, &lv, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for (a, b) in z.data().iter().zip(mu.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn standard_draws_have_unit_moments() {
        let n = 100_000;
        let mu = Matrix::zeros(n, 1);
        let z = reparameterize(&mu, &Matrix::zeros(n, 1), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mean = z.mean();
        let var = z.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((var - 1.0).abs() < 0.03, "{var}");
    }

    #[test]
    fn reparameterize_is_seeded() {
        let mu = Matrix::zeros(4, 2);
        let a = reparameterize(&mu, &mu, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = reparameterize(&mu, &mu, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
        Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(0.05..0.95)).collect()).unwrap()
    }

    #[test]
    fn full_objective_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ae = VaeObjective::random(2, 0, &mut rng).unwrap();
        let x = random_rows(&mut rng, 6, 2);
        let mut obj = VaeObjective::new(ae, x, None, &mut rng);
        let err = check_objective(&mut obj, DEFAULT_STEP).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn conditional_objective_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ae = VaeObjective::random(1, 5, &mut rng).unwrap();
        let x = random_rows(&mut rng, 5, 1);
        let c = Matrix::from_rows(&ProductionState::ALL.map(|s| s.one_hot())).unwrap();
        let mut obj = VaeObjective::new(ae, x, Some(c), &mut rng);
        let err = check_objective(&mut obj, DEFAULT_STEP).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    fn constant_set(n: usize, v: f64) -> TrainingSet {
        TrainingSet::new(Matrix::filled(n, 1, v)).unwrap()
    }

    fn norm1() -> NormalizationSpec {
        NormalizationSpec::fit(&[[1.0], [100.0]]).unwrap()
    }

    #[test]
    fn constant_data_is_reconstructed() {
        let cfg = TrainConfig {
            epochs: 200,
            seed: 3,
            ..TrainConfig::default()
        };
        let (model, history) = train_vae(&constant_set(128, 0.5), norm1(), &cfg).unwrap();
        assert_eq!(history.len(), 200);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = model.sample(10_000, &mut rng).unwrap();
        assert!(s.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert!((s.mean() - 0.5).abs() < 0.05, "{}", s.mean());
        let (mu, _) = model.inner.encode(&Matrix::filled(4, 1, 0.5), None).unwrap();
        let recon = model.inner.decode(&mu, None).unwrap();
        assert!(recon.data().iter().all(|v| (v - 0.5).abs() < 0.05));
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig {
            epochs: 5,
            seed: 11,
            ..TrainConfig::default()
        };
        let set = TrainingSet::from_rows(&(0..64).map(|i| [i as f64 / 64.0]).collect::<Vec<_>>()).unwrap();
        let (a, ha) = train_vae(&set, norm1(), &cfg).unwrap();
        let (b, hb) = train_vae(&set, norm1(), &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_rows_is_rejected() {
        let cfg = TrainConfig::default();
        assert!(matches!(
            train_vae(&constant_set(10, 0.5), norm1(), &cfg),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn empty_sample_request() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ae = VaeObjective::random(1, 0, &mut rng).unwrap();
        let model = VaeModel { inner: ae, state: None };
        assert_eq!(model.sample(0, &mut rng).unwrap().rows(), 0);
    }

    #[test]
    fn cvae_rejects_bad_conditions() {
        let set = constant_set(40, 0.5);
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        assert!(train_cvae(&set, norm1(), &cfg).is_err());
        let mut c = Matrix::zeros(40, 5);
        for r in 0..40 {
            c.set(r, r % 5, 1.0);
        }
        c.set(7, 0, 1.0);
        c.set(7, 2, 1.0);
        let set = set.with_conditions(c).unwrap();
        assert!(matches!(
            train_cvae(&set, norm1(), &cfg),
            Err(Error::InvalidOneHot(7))
        ));
    }

    #[test]
    fn cvae_separates_conditions() {
        let levels = [0.15, 0.3, 0.5, 0.7, 0.85];
        let n = 60;
        let mut rows = Vec::new();
        let mut states = Vec::new();
        for (k, s) in ProductionState::ALL.into_iter().enumerate() {
            for _ in 0..n {
                rows.push([levels[k]]);
                states.push(s);
            }
        }
        let set = TrainingSet::from_rows(&rows).unwrap().with_states(&states).unwrap();
        let cfg = TrainConfig {
            epochs: 150,
            seed: 21,
            ..TrainConfig::default()
        };
        let (model, _) = train_cvae(&set, norm1(), &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let means: Vec<f64> = ProductionState::ALL
            .iter()
            .map(|&s| model.sample(s, 2000, &mut rng).unwrap().mean())
            .collect();
        for (m, v) in means.iter().zip(levels) {
            assert!((m - v).abs() < 0.1, "{means:?}");
        }
        assert!(means.windows(2).all(|w| w[0] < w[1]), "{means:?}");
        assert_eq!(model.sample(ProductionState::Running, 0, &mut rng).unwrap().rows(), 0);
    }
}
