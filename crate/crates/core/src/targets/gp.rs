//! Posterior over the two log-hyperparameters of an RBF Gaussian-process regression.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Target;
use crate::error::{invalid, Error, Result};

/// Observation-noise jitter added to the kernel diagonal.
pub const GP_JITTER: f64 = 0.04;

/// Paired scalar observations `(x_n, y_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GpData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl GpData {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(invalid("x and y must have the same length"));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(invalid("observations must be finite"));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Prior term subtracted from the log marginal likelihood.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GpPrior {
    None,
    /// `-log(1 + phi^T phi)`.
    #[default]
    Log1pQuadratic,
}

/// Target over `phi = (log amplitude, log inverse squared length-scale)`.
#[derive(Clone, Debug)]
pub struct GpPosterior {
    data: GpData,
    sq_dists: DMatrix<f64>,
    prior: GpPrior,
}

pub fn gp_target(data: GpData, prior: GpPrior) -> Result<GpPosterior> {
    if data.len() < 2 {
        return Err(invalid("GP target needs at least 2 observations"));
    }
    let n = data.len();
    let sq_dists = DMatrix::from_fn(n, n, |i, j| (data.x[i] - data.x[j]).powi(2));
    Ok(GpPosterior {
        data,
        sq_dists,
        prior,
    })
}

struct GpFactors {
    kernel: DMatrix<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
    alpha: DVector<f64>,
}

impl GpPosterior {
    pub fn data(&self) -> &GpData {
        &self.data
    }

    fn factor(&self, phi: &[f64]) -> Result<GpFactors> {
        if phi.len() != 2 {
            return Err(invalid(format!("GP target is 2-D, got {}", phi.len())));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite GP hyperparameters"));
        }
        let amp = phi[0].exp();
        let inv_ls = phi[1].exp();
        let kernel = self.sq_dists.map(|d2| amp * (-inv_ls * d2).exp());
        let mut ky = kernel.clone();
        for i in 0..ky.nrows() {
            ky[(i, i)] += GP_JITTER;
        }
        let chol = Cholesky::new(ky).ok_or_else(|| {
            Error::Factorization(format!(
                "K + {GP_JITTER} I is not positive definite at phi = ({}, {})",
                phi[0], phi[1]
            ))
        })?;
        let alpha = chol.solve(&DVector::from_column_slice(&self.data.y));
        Ok(GpFactors {
            kernel,
            chol,
            alpha,
        })
    }

    fn log_likelihood(&self, f: &GpFactors) -> f64 {
        let y = DVector::from_column_slice(&self.data.y);
        let logdet: f64 = 2.0 * f.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        -0.5 * y.dot(&f.alpha) - 0.5 * logdet
    }

    fn prior_value(&self, phi: &[f64]) -> f64 {
        match self.prior {
            GpPrior::None => 0.0,
            GpPrior::Log1pQuadratic => (phi[0] * phi[0] + phi[1] * phi[1]).ln_1p(),
        }
    }

    fn prior_gradient(&self, phi: &[f64]) -> [f64; 2] {
        match self.prior {
            GpPrior::None => [0.0, 0.0],
            GpPrior::Log1pQuadratic => {
                let q = 1.0 + phi[0] * phi[0] + phi[1] * phi[1];
                [2.0 * phi[0] / q, 2.0 * phi[1] / q]
            }
        }
    }
}

impl Target for GpPosterior {
    fn dim(&self) -> usize {
        2
    }

    fn log_density(&self, phi: &[f64]) -> Result<f64> {
        let f = self.factor(phi)?;
        Ok(self.log_likelihood(&f) - self.prior_value(phi))
    }

    fn score(&self, phi: &[f64]) -> Result<Vec<f64>> {
        Ok(self.log_density_and_score(phi)?.1)
    }

    fn log_density_and_score(&self, phi: &[f64]) -> Result<(f64, Vec<f64>)> {
        let f = self.factor(phi)?;
        let value = self.log_likelihood(&f) - self.prior_value(phi);
        let ky_inv = f.chol.inverse();
        let inv_ls = phi[1].exp();
        // dK/dphi_1 = K, dK/dphi_2 = -exp(phi_2) D2 .* K
        let dk2 = f.kernel.zip_map(&self.sq_dists, |k, d2| -inv_ls * d2 * k);
        let grad_term = |dk: &DMatrix<f64>| {
            let quad = f.alpha.dot(&(dk * &f.alpha));
            let trace = ky_inv.component_mul(dk).sum();
            0.5 * quad - 0.5 * trace
        };
        let prior = self.prior_gradient(phi);
        let score = vec![grad_term(&f.kernel) - prior[0], grad_term(&dk2) - prior[1]];
        Ok((value, score))
    }
}

/// Reads the first two numeric columns of a comma-separated file as `(x, y)`.
///
/// A single leading non-numeric line is treated as a header.
pub fn load_two_column_csv(path: impl AsRef<Path>) -> Result<GpData> {
    let path = path.as_ref();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => parse_err(0, format!("{other:?}")),
        })?;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(idx + 1, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() < 2 {
            return Err(parse_err(line, "expected at least two columns".into()));
        }
        let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
        match parsed {
            (Ok(a), Ok(b)) if a.is_finite() && b.is_finite() => {
                x.push(a);
                y.push(b);
            }
            _ if idx == 0 => continue,
            _ => {
                return Err(parse_err(
                    line,
                    format!("non-numeric cells '{}', '{}'", &record[0], &record[1]),
                ))
            }
        }
    }
    if x.len() < 2 {
        return Err(parse_err(
            x.len(),
            format!("need at least 2 data rows, found {}", x.len()),
        ));
    }
    GpData::new(x, y)
}

/// Deterministic stand-in for the LIDAR scan: 221 points over range 390..720
/// with a sigmoidal drop in log-ratio and range-dependent noise.
pub fn synthetic_lidar(n: usize, seed: u64) -> GpData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (390.0, 720.0);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let r = if n > 1 {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        } else {
            lo
        };
        let mean = -0.05 - 0.7 / (1.0 + (-(r - 600.0) / 25.0).exp());
        let sd = 0.02 + 0.1 * (r - lo) / (hi - lo);
        let noise: f64 = Normal::new(0.0, sd).unwrap().sample(&mut rng);
        x.push(r);
        y.push(mean + noise);
    }
    GpData { x, y }
}
