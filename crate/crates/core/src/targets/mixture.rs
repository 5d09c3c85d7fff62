use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use super::Target;
use crate::error::{invalid, Result};

/// Per-coordinate offset of the mixture components at `+a` and `-a`.
pub const GMM_OFFSET: f64 = 1.2;

/// Mixture of unit-covariance Gaussians `sum_k c_k N(mu_k, I)`.
#[derive(Clone, Debug)]
pub struct IsotropicMixture {
    dim: usize,
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
}

impl IsotropicMixture {
    pub fn new(weights: Vec<f64>, means: Vec<DVector<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() {
            return Err(invalid("mixture needs one mean per weight"));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(invalid("mixture means must share a positive dimension"));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(invalid("mixture weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self {
            dim,
            weights,
            means,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    /// Log of each weighted component density (unnormalized) and their log-sum.
    fn log_terms(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        if x.len() != self.dim {
            return Err(invalid(format!(
                "point has dimension {}, target has {}",
                x.len(),
                self.dim
            )));
        }
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.means)
            .map(|(w, m)| {
                let d2: f64 = x.iter().zip(m.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                w.ln() - 0.5 * d2
            })
            .collect();
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
        Ok((terms, lse))
    }

    fn responsibilities(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let (terms, lse) = self.log_terms(x)?;
        Ok((terms.iter().map(|t| (t - lse).exp()).collect(), lse))
    }
}

/// Two-component mixture with weight 2/3 at `a = 1.2 * 1` and 1/3 at `-a`.
pub fn gmm_target(d: usize) -> Result<IsotropicMixture> {
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    let a = DVector::from_element(d, GMM_OFFSET);
    IsotropicMixture::new(vec![2.0 / 3.0, 1.0 / 3.0], vec![a.clone(), -a])
}

impl Target for IsotropicMixture {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_terms(x)?.1)
    }

    fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.log_density_and_score(x)?.1)
    }

    fn log_density_and_score(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (resp, lse) = self.responsibilities(x)?;
        let mut s = vec![0.0; self.dim];
        for (r, m) in resp.iter().zip(&self.means) {
            for (k, sk) in s.iter_mut().enumerate() {
                *sk += r * (m[k] - x[k]);
            }
        }
        Ok((lse, s))
    }

    fn hessian_log_density(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let (resp, _) = self.responsibilities(x).ok()?;
        let d = self.dim;
        let xv = DVector::from_column_slice(x);
        let mut h = -DMatrix::identity(d, d);
        let mut s = DVector::zeros(d);
        for (r, m) in resp.iter().zip(&self.means) {
            let sk = m - &xv;
            h += (&sk * sk.transpose()) * *r;
            s += sk * *r;
        }
        h -= &s * s.transpose();
        Some(h)
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn moments(&self) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let d = self.dim;
        let mut mean = DVector::zeros(d);
        let mut second = DMatrix::identity(d, d);
        for (w, m) in self.weights.iter().zip(&self.means) {
            mean += m * *w;
            second += (m * m.transpose()) * *w;
        }
        let cov = second - &mean * mean.transpose();
        Some((mean, cov))
    }

    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(n * self.dim);
        for _ in 0..n {
            let u: f64 = rng.random();
            let mut k = 0;
            let mut acc = self.weights[0];
            while u >= acc && k + 1 < self.weights.len() {
                k += 1;
                acc += self.weights[k];
            }
            for c in 0..self.dim {
                let z: f64 = StandardNormal.sample(&mut *rng);
                out.push(self.means[k][c] + z);
            }
        }
        Some(out)
    }
}
