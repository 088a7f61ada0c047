//! Weighted least squares and iteratively reweighted logistic regression.
//!
//! The logistic solver maximizes the weighted Bernoulli quasi-log-likelihood
//! and accepts fractional responses in [0, 1], which the sequential-regression
//! estimator needs for its pseudo-outcomes.

use crate::error::{Error, Result};
use crate::stats::inv_logit;
use nalgebra::{DMatrix, DVector};

/// Coefficients above this magnitude are treated as separation; the estimate
/// is capped there and flagged.
pub const SEPARATION_CAP: f64 = 30.0;

/// Convergence and conditioning summary of an iterative fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    pub condition: f64,
}

impl FitDiagnostics {
    pub fn exact() -> Self {
        FitDiagnostics {
            converged: true,
            iterations: 0,
            objective: 0.0,
            gradient_norm: 0.0,
            condition: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WlsFit {
    pub beta: DVector<f64>,
    pub fitted: DVector<f64>,
}

/// Minimizes sum_i w_i (y_i - x_i' beta)^2 via Cholesky of the weighted
/// normal equations.
pub fn wls(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> Result<WlsFit> {
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n || w.len() != n {
        return Err(Error::InvalidInput("wls: row counts do not align".into()));
    }
    if w.iter().any(|&wi| wi <= 0.0 || !wi.is_finite()) {
        return Err(Error::InvalidInput("wls: weights must be positive and finite".into()));
    }
    let mut xtwx = DMatrix::zeros(p, p);
    let mut xtwy = DVector::zeros(p);
    for i in 0..n {
        let xi = x.row(i);
        let wi = w[i];
        for a in 0..p {
            xtwy[a] += wi * xi[a] * y[i];
            for b in 0..=a {
                xtwx[(a, b)] += wi * xi[a] * xi[b];
            }
        }
    }
    for a in 0..p {
        for b in (a + 1)..p {
            xtwx[(a, b)] = xtwx[(b, a)];
        }
    }
    let beta = solve_spd(&xtwx, &xtwy)?;
    let fitted = x * &beta;
    Ok(WlsFit { beta, fitted })
}

/// Cholesky solve of a symmetric positive definite system, with a scaled
/// singularity check.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let p = a.nrows();
    let max_diag = (0..p).map(|i| a[(i, i)].abs()).fold(0.0_f64, f64::max);
    if max_diag == 0.0 || !max_diag.is_finite() {
        return Err(Error::SingularSystem);
    }
    let chol = a.clone().cholesky().ok_or(Error::SingularSystem)?;
    // Guard against numerically semi-definite systems that slip through.
    let l = chol.l_dirty();
    for i in 0..p {
        if l[(i, i)] <= (1e-12 * max_diag).sqrt() * 1e-1 {
            return Err(Error::SingularSystem);
        }
    }
    Ok(chol.solve(b))
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub beta: DVector<f64>,
    pub fitted: DVector<f64>,
    pub diagnostics: FitDiagnostics,
    pub separation: bool,
}

fn quasi_loglik(y: &DVector<f64>, mu: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let mut ll = 0.0;
    for i in 0..y.len() {
        let m = mu[i].clamp(1e-12, 1.0 - 1e-12);
        ll += w[i] * (y[i] * m.ln() + (1.0 - y[i]) * (1.0 - m).ln());
    }
    ll
}

/// Weighted logistic regression by IRLS with step halving. Responses may be
/// fractional. Stops when the step and the weighted score are both below
/// tolerance; coefficients beyond `SEPARATION_CAP` are capped and flagged.
pub fn irls_logistic(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> Result<LogisticFit> {
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n || w.len() != n {
        return Err(Error::InvalidInput("irls: row counts do not align".into()));
    }
    if y.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::InvalidInput("irls: responses must lie in [0, 1]".into()));
    }
    if w.iter().any(|&wi| wi <= 0.0 || !wi.is_finite()) {
        return Err(Error::InvalidInput("irls: weights must be positive and finite".into()));
    }

    const MAX_ITER: usize = 100;
    const STEP_TOL: f64 = 1e-8;
    const SCORE_TOL: f64 = 1e-6;

    let mut beta = DVector::zeros(p);
    let mut eta = x * &beta;
    let mut mu = eta.map(inv_logit);
    let mut ll = quasi_loglik(y, &mu, w);
    let mut separation = false;
    let mut iterations = 0;
    let mut converged = false;
    let mut last_xtwx = DMatrix::identity(p, p);

    for iter in 1..=MAX_ITER {
        iterations = iter;
        // Working response and weights for the quasi-Bernoulli model.
        let mut xtwx = DMatrix::zeros(p, p);
        let mut xtwz = DVector::zeros(p);
        for i in 0..n {
            let v = (mu[i] * (1.0 - mu[i])).max(1e-14);
            let wi = w[i] * v;
            let z = eta[i] + (y[i] - mu[i]) / v;
            let xi = x.row(i);
            for a in 0..p {
                xtwz[a] += wi * xi[a] * z;
                for b in 0..=a {
                    xtwx[(a, b)] += wi * xi[a] * xi[b];
                }
            }
        }
        for a in 0..p {
            for b in (a + 1)..p {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
        }
        last_xtwx = xtwx.clone();
        let proposal = match solve_spd(&xtwx, &xtwz) {
            Ok(p) => p,
            // A solvable system that degenerates while coefficients grow is
            // the quasi-separation signature: saturated observations stop
            // contributing curvature. Cap and flag instead of failing.
            Err(_) if iter > 1 => {
                separation = true;
                beta = beta.map(|b| b.clamp(-SEPARATION_CAP, SEPARATION_CAP));
                eta = x * &beta;
                mu = eta.map(inv_logit);
                ll = quasi_loglik(y, &mu, w);
                break;
            }
            Err(e) => return Err(e),
        };
        let mut step = &proposal - &beta;

        // Step halving on objective decrease.
        let mut accepted = false;
        for _ in 0..24 {
            let candidate = &beta + &step;
            let eta_c = x * &candidate;
            let mu_c = eta_c.map(inv_logit);
            let ll_c = quasi_loglik(y, &mu_c, w);
            if ll_c >= ll - 1e-14 {
                let delta = step.amax();
                beta = candidate;
                eta = eta_c;
                mu = mu_c;
                ll = ll_c;
                accepted = true;
                if delta < STEP_TOL && score_norm(x, y, &mu, w) < SCORE_TOL {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        if beta.amax() > SEPARATION_CAP {
            separation = true;
            beta = beta.map(|b| b.clamp(-SEPARATION_CAP, SEPARATION_CAP));
            eta = x * &beta;
            mu = eta.map(inv_logit);
            ll = quasi_loglik(y, &mu, w);
            break;
        }
        if converged {
            break;
        }
    }

    let gradient_norm = score_norm(x, y, &mu, w);
    let condition = condition_estimate(&last_xtwx);
    Ok(LogisticFit {
        beta,
        fitted: mu,
        diagnostics: FitDiagnostics {
            converged: converged && !separation,
            iterations,
            objective: ll,
            gradient_norm,
            condition,
        },
        separation,
    })
}

fn score_norm(x: &DMatrix<f64>, y: &DVector<f64>, mu: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let p = x.ncols();
    let mut score = DVector::<f64>::zeros(p);
    for i in 0..x.nrows() {
        let r = w[i] * (y[i] - mu[i]);
        for a in 0..p {
            score[a] += r * x[(i, a)];
        }
    }
    score.norm()
}

pub fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 1.0;
    }
    let svals = a.clone().singular_values();
    let max = svals.max();
    let min = svals.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
