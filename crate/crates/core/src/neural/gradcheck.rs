use super::matrix::Matrix;
use super::network::DenseNetwork;
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Floor of the relative-error denominator. Central differences at
/// [`DEFAULT_STEP`] resolve gradients down to roughly 1e-11, so smaller
/// magnitudes are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// A scalar objective over a flat parameter vector with an analytic gradient.
pub trait Objective {
    fn parameter_count(&self) -> usize;
    fn parameter_mut(&mut self, index: usize) -> &mut f64;
    fn loss(&self) -> Result<f64>;
    fn loss_and_gradient(&self) -> Result<(f64, Vec<f64>)>;

    /// Loss together with the on/off state of every piecewise-linear unit.
    /// Smooth objectives report no units.
    fn loss_and_kinks(&self) -> Result<(f64, Vec<bool>)> {
        Ok((self.loss()?, Vec::new()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// `|analytic - numeric| / max(|analytic|, |numeric|, RELATIVE_FLOOR)`,
    /// worst over the checked parameters.
    pub max_relative_error: f64,
    pub checked: usize,
    /// Parameters whose `+-h` perturbation switched a ReLU on or off; a
    /// central difference across a kink is not a derivative.
    pub skipped_at_kinks: usize,
}

/// Compares the analytic gradient with central differences of step `h`.
pub fn check_objective_report<O: Objective>(objective: &mut O, h: f64) -> Result<GradCheckReport> {
    let (_, analytic) = objective.loss_and_gradient()?;
    let (_, base) = objective.loss_and_kinks()?;
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        skipped_at_kinks: 0,
    };
    for (i, &a) in analytic.iter().enumerate().take(objective.parameter_count()) {
        let original = *objective.parameter_mut(i);
        *objective.parameter_mut(i) = original + h;
        let (up, up_kinks) = objective.loss_and_kinks()?;
        *objective.parameter_mut(i) = original - h;
        let (down, down_kinks) = objective.loss_and_kinks()?;
        *objective.parameter_mut(i) = original;
        if up_kinks != base || down_kinks != base {
            report.skipped_at_kinks += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * h);
        let denom = a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        report.max_relative_error = report.max_relative_error.max((a - numeric).abs() / denom);
        report.checked += 1;
    }
    Ok(report)
}

/// Largest relative disagreement from [`check_objective_report`].
pub fn check_objective<O: Objective>(objective: &mut O, h: f64) -> Result<f64> {
    Ok(check_objective_report(objective, h)?.max_relative_error)
}

/// Loss on the network output: value and gradient with respect to the output.
pub type OutputLoss<'a> = dyn Fn(&Matrix) -> Result<(f64, Matrix)> + 'a;

struct NetworkObjective<'a> {
    net: DenseNetwork,
    x: &'a Matrix,
    loss: &'a OutputLoss<'a>,
    gradient_scale: f64,
}

impl Objective for NetworkObjective<'_> {
    fn parameter_count(&self) -> usize {
        self.net.parameter_count()
    }

    fn parameter_mut(&mut self, index: usize) -> &mut f64 {
        self.net.parameter_mut(index).expect("parameter index in range")
    }

    fn loss(&self) -> Result<f64> {
        let out = self.net.predict(self.x)?;
        Ok((self.loss)(&out)?.0)
    }

    fn loss_and_gradient(&self) -> Result<(f64, Vec<f64>)> {
        let cache = self.net.forward(self.x)?;
        let (l, g) = (self.loss)(cache.output())?;
        let (grads, _) = self.net.backward(&cache, &g)?;
        Ok((l, grads.iter().map(|v| v * self.gradient_scale).collect()))
    }

    fn loss_and_kinks(&self) -> Result<(f64, Vec<bool>)> {
        let cache = self.net.forward(self.x)?;
        Ok(((self.loss)(cache.output())?.0, self.net.relu_pattern_of(&cache)))
    }
}

/// Gradient check of a single network under an output loss.
pub fn grad_check_report(net: &DenseNetwork, loss: &OutputLoss<'_>, x: &Matrix, h: f64) -> Result<GradCheckReport> {
    check_objective_report(
        &mut NetworkObjective {
            net: net.clone(),
            x,
            loss,
            gradient_scale: 1.0,
        },
        h,
    )
}

pub fn grad_check(net: &DenseNetwork, loss: &OutputLoss<'_>, x: &Matrix, h: f64) -> Result<f64> {
    Ok(grad_check_report(net, loss, x, h)?.max_relative_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::loss::{bce_loss, mse_loss};
    use crate::neural::network::Activation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn standard_architecture_bce() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = DenseNetwork::mlp(1, &[32, 64, 32, 16, 32], Activation::Relu, 1, Activation::Sigmoid, &mut rng);
        let x = random_batch(&mut rng, 8, 1);
        let t = random_batch(&mut rng, 8, 1);
        let loss = move |out: &Matrix| bce_loss(out, &t);
        let err = grad_check(&net, &loss, &x, DEFAULT_STEP).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn linear_quadratic_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = DenseNetwork::mlp(3, &[], Activation::Linear, 2, Activation::Linear, &mut rng);
        let x = random_batch(&mut rng, 5, 3);
        let t = random_batch(&mut rng, 5, 2);
        let loss = move |out: &Matrix| mse_loss(out, &t);
        let err = grad_check(&net, &loss, &x, DEFAULT_STEP).unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn three_layer_net_with_sigmoids() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = DenseNetwork::mlp(2, &[6, 5], Activation::Sigmoid, 2, Activation::Sigmoid, &mut rng);
        let x = random_batch(&mut rng, 4, 2);
        let t = random_batch(&mut rng, 4, 2);
        let loss = move |out: &Matrix| bce_loss(out, &t);
        assert!(grad_check(&net, &loss, &x, DEFAULT_STEP).unwrap() < 1e-4);
    }

    #[test]
    fn kink_crossings_are_skipped() {
        // one ReLU unit sitting exactly on its kink for the single input row
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = DenseNetwork::mlp(1, &[1], Activation::Relu, 1, Activation::Sigmoid, &mut rng);
        *net.parameter_mut(0).unwrap() = 1.0;
        *net.parameter_mut(1).unwrap() = -0.5;
        let x = Matrix::from_rows(&[[0.5]]).unwrap();
        let t = Matrix::from_rows(&[[0.9]]).unwrap();
        let loss = move |out: &Matrix| bce_loss(out, &t);
        let report = grad_check_report(&net, &loss, &x, DEFAULT_STEP).unwrap();
        assert_eq!(report.skipped_at_kinks, 2);
        assert_eq!(report.checked + report.skipped_at_kinks, net.parameter_count());
        assert!(report.max_relative_error < 1e-6, "{report:?}");
    }

    #[test]
    fn standard_architecture_many_seeds() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = DenseNetwork::mlp(2, &[32, 64, 32, 16, 32], Activation::Relu, 1, Activation::Sigmoid, &mut rng);
            let x = random_batch(&mut rng, 8, 2);
            let t = random_batch(&mut rng, 8, 1);
            let loss = move |out: &Matrix| bce_loss(out, &t);
            let report = grad_check_report(&net, &loss, &x, DEFAULT_STEP).unwrap();
            assert!(report.max_relative_error < 1e-4, "seed {seed}: {report:?}");
            assert!(report.skipped_at_kinks * 20 <= net.parameter_count(), "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = DenseNetwork::mlp(2, &[4], Activation::Sigmoid, 1, Activation::Sigmoid, &mut rng);
        let x = random_batch(&mut rng, 4, 2);
        let t = random_batch(&mut rng, 4, 1);
        let loss = move |out: &Matrix| bce_loss(out, &t);
        let mut obj = NetworkObjective {
            net,
            x: &x,
            loss: &loss,
            gradient_scale: 2.0,
        };
        assert!(check_objective(&mut obj, DEFAULT_STEP).unwrap() > 0.3);
    }
}
