use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Predictions are clamped this far from 0 and 1 before taking logs.
pub const BCE_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy over all elements, and its gradient with
/// respect to `pred`.
pub fn bce_loss(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() {
        return Err(Error::DimensionMismatch {
            expected: target.data().len(),
            got: pred.data().len(),
        });
    }
    let n = pred.data().len().max(1) as f64;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut total = 0.0;
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        total -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        *g = (p - t) / (p * (1.0 - p)) / n;
    }
    Ok((total / n, grad))
}

/// KL divergence of `N(mu, exp(logvar))` from the standard normal, summed
/// over latent dimensions and averaged over the batch.
///
/// Returns the loss and the gradients with respect to `mu` and `logvar`.
pub fn gaussian_kl_loss(mu: &Matrix, logvar: &Matrix) -> Result<(f64, Matrix, Matrix)> {
    if mu.shape() != logvar.shape() {
        return Err(Error::DimensionMismatch {
            expected: mu.data().len(),
            got: logvar.data().len(),
        });
    }
    let batch = mu.rows().max(1) as f64;
    let mut dmu = Matrix::zeros(mu.rows(), mu.cols());
    let mut dlv = Matrix::zeros(mu.rows(), mu.cols());
    let mut total = 0.0;
    for (i, (&m, &lv)) in mu.data().iter().zip(logvar.data()).enumerate() {
        let e = lv.exp();
        total += -0.5 * (1.0 + lv - m * m - e);
        dmu.data_mut()[i] = m / batch;
        dlv.data_mut()[i] = 0.5 * (e - 1.0) / batch;
    }
    Ok((total / batch, dmu, dlv))
}

/// Mean squared error; used for sanity checks of the gradient checker.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() {
        return Err(Error::DimensionMismatch {
            expected: target.data().len(),
            got: pred.data().len(),
        });
    }
    let n = pred.data().len().max(1) as f64;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut total = 0.0;
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        total += (p - t) * (p - t);
        *g = 2.0 * (p - t) / n;
    }
    Ok((total / n, grad))
}
