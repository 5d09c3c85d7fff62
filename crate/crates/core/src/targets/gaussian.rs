use nalgebra::{Cholesky, DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::Target;
use crate::error::{invalid, Error, Result};

/// Off-diagonal correlation of the single-Gaussian benchmark.
pub const SG_CORRELATION: f64 = 0.8;

/// Multivariate normal target `N(mean, cov)`.
#[derive(Clone, Debug)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    precision: DMatrix<f64>,
    chol_lower: DMatrix<f64>,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.nrows() != d || cov.ncols() != d {
            return Err(invalid("mean and covariance shapes disagree"));
        }
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Factorization("covariance is not positive definite".into()))?;
        let precision = chol.inverse();
        let precision = (&precision + precision.transpose()) * 0.5;
        Ok(Self {
            mean,
            chol_lower: chol.l(),
            cov,
            precision,
        })
    }

    pub fn standard(d: usize) -> Self {
        Self::new(DVector::zeros(d), DMatrix::identity(d, d)).expect("identity is PD")
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    fn check(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.mean.len() {
            return Err(invalid(format!(
                "point has dimension {}, target has {}",
                x.len(),
                self.mean.len()
            )));
        }
        Ok(DVector::from_column_slice(x) - &self.mean)
    }
}

/// Zero-mean Gaussian with unit variances and pairwise correlation 0.8.
pub fn sg_target(d: usize) -> Result<Gaussian> {
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    let cov = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { SG_CORRELATION });
    Gaussian::new(DVector::zeros(d), cov)
}

impl Target for Gaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        let c = self.check(x)?;
        Ok(-0.5 * c.dot(&(&self.precision * &c)))
    }

    fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        let c = self.check(x)?;
        Ok((-(&self.precision * c)).as_slice().to_vec())
    }

    fn hessian_log_density(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        Some(-self.precision.clone())
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn moments(&self) -> Option<(DVector<f64>, DMatrix<f64>)> {
        Some((self.mean.clone(), self.cov.clone()))
    }

    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let d = self.dim();
        let mut out = Vec::with_capacity(n * d);
        for _ in 0..n {
            let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut *rng));
            let x = &self.mean + &self.chol_lower * z;
            out.extend_from_slice(x.as_slice());
        }
        Some(out)
    }
}
