//! Log-rescale followed by per-dimension min-max scaling to `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimBounds {
    pub min_log: f64,
    pub max_log: f64,
}

impl DimBounds {
    fn span(&self) -> f64 {
        self.max_log - self.min_log
    }
}

/// Bounds of `ln x` per dimension, fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizationSpec {
    dims: Vec<DimBounds>,
}

impl NormalizationSpec {
    /// Builds a spec from explicit bounds. Every dimension needs
    /// `max_log > min_log`.
    pub fn from_bounds(dims: Vec<DimBounds>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidArgument(
                "normalization needs at least one dimension".into(),
            ));
        }
        for (i, d) in dims.iter().enumerate() {
            if !(d.min_log.is_finite() && d.max_log.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "dimension {i} has non-finite bounds"
                )));
            }
            if d.max_log <= d.min_log {
                return Err(Error::DegenerateDimension(i));
            }
        }
        Ok(Self { dims })
    }

    /// Fits bounds to the natural log of each dimension.
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: rows.len(),
            });
        }
        let dim = rows[0].as_ref().len();
        let mut dims = vec![
            DimBounds {
                min_log: f64::INFINITY,
                max_log: f64::NEG_INFINITY,
            };
            dim
        ];
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            for (b, &x) in dims.iter_mut().zip(row) {
                if !(x > 0.0) || !x.is_finite() {
                    return Err(Error::NonPositive(x));
                }
                let l = x.ln();
                b.min_log = b.min_log.min(l);
                b.max_log = b.max_log.max(l);
            }
        }
        Self::from_bounds(dims)
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn bounds(&self) -> &[DimBounds] {
        &self.dims
    }

    /// Maps positive values into `[0, 1]`; values outside the fitted range
    /// are clamped to the nearest end.
    pub fn normalize(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        x.iter()
            .zip(&self.dims)
            .map(|(&v, b)| {
                if !(v > 0.0) {
                    return Err(Error::NonPositive(v));
                }
                Ok(((v.ln() - b.min_log) / b.span()).clamp(0.0, 1.0))
            })
            .collect()
    }

    pub fn denormalize(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u.len())?;
        u.iter()
            .zip(&self.dims)
            .map(|(&v, b)| {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::OutOfUnitRange(v));
                }
                Ok((b.min_log + v * b.span()).exp())
            })
            .collect()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dims.len() {
            return Err(Error::DimensionMismatch {
                expected: self.dims.len(),
                got: len,
            });
        }
        Ok(())
    }
}
