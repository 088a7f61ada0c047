//! Structured residual covariance matrices under unconstrained
//! parameterizations, so the optimizer can search all of R^d while every
//! finite parameter vector materializes to a symmetric positive definite
//! matrix.
//!
//! - unstructured: log-Cholesky (log diagonal, raw off-diagonal of L)
//! - AR1: (log sigma, atanh rho), rho in (-1, 1)
//! - compound symmetry: (log sigma, u) with tanh(u) mapped onto the PD range
//!   (-1/(K-1), 1)
//! - independence: log sigma_t per visit

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovStructure {
    Unstructured,
    Ar1,
    CompoundSymmetry,
    Independence,
}

impl CovStructure {
    pub fn n_params(&self, k: usize) -> usize {
        match self {
            CovStructure::Unstructured => k * (k + 1) / 2,
            CovStructure::Ar1 | CovStructure::CompoundSymmetry => 2,
            CovStructure::Independence => k,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CovStructure::Unstructured => "unstructured",
            CovStructure::Ar1 => "ar1",
            CovStructure::CompoundSymmetry => "compound_symmetry",
            CovStructure::Independence => "independence",
        }
    }
}

impl std::str::FromStr for CovStructure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unstructured" | "un" => Ok(CovStructure::Unstructured),
            "ar1" => Ok(CovStructure::Ar1),
            "compound_symmetry" | "cs" => Ok(CovStructure::CompoundSymmetry),
            "independence" | "ind" => Ok(CovStructure::Independence),
            other => Err(Error::InvalidInput(format!(
                "unknown covariance structure `{other}`"
            ))),
        }
    }
}

/// CS correlations below -1/(K-1) are indefinite; keep a small margin.
fn cs_rho_bounds(k: usize) -> (f64, f64) {
    let lo = if k > 1 {
        -1.0 / (k as f64 - 1.0) + 1e-6
    } else {
        -1.0 + 1e-6
    };
    (lo, 1.0 - 1e-6)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceParams {
    pub structure: CovStructure,
    pub k: usize,
    pub theta: DVector<f64>,
}

impl CovarianceParams {
    pub fn new(structure: CovStructure, k: usize, theta: DVector<f64>) -> Result<Self> {
        let expected = structure.n_params(k);
        if theta.len() != expected {
            return Err(Error::InvalidInput(format!(
                "{} covariance over {k} visits takes {expected} parameters, got {}",
                structure.as_str(),
                theta.len()
            )));
        }
        Ok(Self { structure, k, theta })
    }

    /// The K x K covariance matrix for the current parameters.
    pub fn materialize(&self) -> DMatrix<f64> {
        let k = self.k;
        match self.structure {
            CovStructure::Unstructured => {
                let mut l = DMatrix::zeros(k, k);
                let mut idx = 0;
                for i in 0..k {
                    for j in 0..=i {
                        l[(i, j)] = if i == j {
                            self.theta[idx].exp()
                        } else {
                            self.theta[idx]
                        };
                        idx += 1;
                    }
                }
                &l * l.transpose()
            }
            CovStructure::Ar1 => {
                let sigma2 = (2.0 * self.theta[0]).exp();
                let rho = self.theta[1].tanh();
                DMatrix::from_fn(k, k, |i, j| {
                    sigma2 * rho.powi((i as i32 - j as i32).abs())
                })
            }
            CovStructure::CompoundSymmetry => {
                let sigma2 = (2.0 * self.theta[0]).exp();
                let (lo, hi) = cs_rho_bounds(k);
                let rho = lo + (hi - lo) * (self.theta[1].tanh() + 1.0) / 2.0;
                DMatrix::from_fn(k, k, |i, j| if i == j { sigma2 } else { sigma2 * rho })
            }
            CovStructure::Independence => {
                DMatrix::from_fn(k, k, |i, j| {
                    if i == j {
                        (2.0 * self.theta[i]).exp()
                    } else {
                        0.0
                    }
                })
            }
        }
    }

    /// Maps a sample covariance estimate into the unconstrained parameter
    /// space; used to initialize the optimizer.
    pub fn from_sample_cov(structure: CovStructure, sample: &DMatrix<f64>) -> Result<Self> {
        let k = sample.nrows();
        if sample.ncols() != k || k == 0 {
            return Err(Error::InvalidInput("sample covariance must be square".into()));
        }
        let theta = match structure {
            CovStructure::Unstructured => {
                let spd = nearest_spd(sample);
                let chol = spd
                    .cholesky()
                    .ok_or(Error::SingularSystem)?;
                let l = chol.l();
                let mut theta = Vec::with_capacity(k * (k + 1) / 2);
                for i in 0..k {
                    for j in 0..=i {
                        theta.push(if i == j { l[(i, j)].max(1e-8).ln() } else { l[(i, j)] });
                    }
                }
                DVector::from_vec(theta)
            }
            CovStructure::Ar1 => {
                let sigma2 = diag_mean(sample);
                let rho = lag1_corr(sample).clamp(-0.99, 0.99);
                DVector::from_vec(vec![0.5 * sigma2.max(1e-12).ln(), rho.atanh()])
            }
            CovStructure::CompoundSymmetry => {
                let sigma2 = diag_mean(sample);
                let (lo, hi) = cs_rho_bounds(k);
                let rho = offdiag_corr(sample).clamp(lo + 1e-4, hi - 1e-4);
                // invert rho = lo + (hi-lo)(tanh(u)+1)/2
                let t = (2.0 * (rho - lo) / (hi - lo) - 1.0).clamp(-0.999999, 0.999999);
                DVector::from_vec(vec![0.5 * sigma2.max(1e-12).ln(), t.atanh()])
            }
            CovStructure::Independence => DVector::from_fn(k, |i, _| {
                0.5 * sample[(i, i)].max(1e-12).ln()
            }),
        };
        CovarianceParams::new(structure, k, theta)
    }
}

fn diag_mean(m: &DMatrix<f64>) -> f64 {
    let k = m.nrows();
    (0..k).map(|i| m[(i, i)]).sum::<f64>() / k as f64
}

fn lag1_corr(m: &DMatrix<f64>) -> f64 {
    let k = m.nrows();
    if k < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..k - 1 {
        let denom = (m[(i, i)] * m[(i + 1, i + 1)]).sqrt();
        if denom > 0.0 {
            acc += m[(i, i + 1)] / denom;
        }
    }
    acc / (k - 1) as f64
}

fn offdiag_corr(m: &DMatrix<f64>) -> f64 {
    let k = m.nrows();
    if k < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for i in 0..k {
        for j in 0..i {
            let denom = (m[(i, i)] * m[(j, j)]).sqrt();
            if denom > 0.0 {
                acc += m[(i, j)] / denom;
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        acc / count as f64
    }
}

/// Adds the smallest diagonal ridge (in powers of ten) that makes `m` pass a
/// Cholesky factorization.
pub fn nearest_spd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    if sym.clone().cholesky().is_some() {
        return sym;
    }
    let scale = diag_mean(&sym).abs().max(1e-12);
    let mut ridge = 1e-10 * scale;
    loop {
        let candidate = &sym + DMatrix::identity(sym.nrows(), sym.ncols()) * ridge;
        if candidate.clone().cholesky().is_some() {
            return candidate;
        }
        ridge *= 10.0;
        if ridge > 1e6 * scale {
            return DMatrix::identity(sym.nrows(), sym.ncols()) * scale;
        }
    }
}
