//! (RE)ML fitting of structured residual covariances with the fixed effects
//! profiled out. The REML objective is minimized over the unconstrained
//! covariance parameters by BFGS with central-difference gradients.

use crate::error::{Error, Result};
use crate::numerics::covariance::{nearest_spd, CovStructure, CovarianceParams};
use crate::numerics::glm::{condition_estimate, solve_spd, FitDiagnostics};
use crate::numerics::gls::{GlsParts, GlsWorkspace, SubjectBlock};
use crate::numerics::optim::{bfgs_minimize, central_gradient, OptimOptions};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitCriterion {
    /// Restricted maximum likelihood (the default for repeated-measures
    /// primary analyses).
    #[default]
    Reml,
    Ml,
}

#[derive(Debug, Clone, Default)]
pub struct RemlOptions {
    pub criterion: FitCriterion,
    /// Starting parameters; when absent, derived from the sample covariance
    /// of complete cases (falling back to pooled pairwise moments).
    pub init: Option<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct RemlFit {
    pub covariance: CovarianceParams,
    pub beta: DVector<f64>,
    pub diagnostics: FitDiagnostics,
}

fn neg2_from_parts(parts: &GlsParts, criterion: FitCriterion) -> Result<f64> {
    let beta = solve_spd(&parts.xtx, &parts.xty)?;
    let rss = parts.yty - beta.dot(&parts.xty);
    let mut obj = parts.logdet_sum + rss;
    if criterion == FitCriterion::Reml {
        let chol = parts.xtx.clone().cholesky().ok_or(Error::SingularSystem)?;
        let l = chol.l_dirty();
        obj += 2.0 * (0..parts.xtx.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
    }
    Ok(obj)
}

/// -2 log (restricted) likelihood up to an additive constant:
/// sum_i log|S_i| + r' S^-1 r, plus log|X' S^-1 X| under REML.
pub fn neg2_objective(
    blocks: &[SubjectBlock],
    params: &CovarianceParams,
    criterion: FitCriterion,
) -> Result<f64> {
    let workspace = GlsWorkspace::new(blocks, params.k)?;
    neg2_from_parts(&workspace.accumulate(&params.materialize())?, criterion)
}

/// The gradient the optimizer uses: central differences of the objective,
/// step 1e-6 * (1 + |theta_j|). Exposed so it can be validated against an
/// independent differencing of `neg2_objective`.
pub fn objective_gradient(
    blocks: &[SubjectBlock],
    params: &CovarianceParams,
    criterion: FitCriterion,
) -> Result<DVector<f64>> {
    let structure = params.structure;
    let k = params.k;
    let f = |theta: &DVector<f64>| -> f64 {
        CovarianceParams::new(structure, k, theta.clone())
            .ok()
            .and_then(|p| neg2_objective(blocks, &p, criterion).ok())
            .unwrap_or(f64::INFINITY)
    };
    let g = central_gradient(&f, &params.theta);
    if g.iter().all(|v| v.is_finite()) {
        Ok(g)
    } else {
        Err(Error::SingularSystem)
    }
}

/// Sample covariance of complete cases; falls back to pairwise moments when
/// fewer than k+2 subjects are complete.
pub fn initial_sample_cov(blocks: &[SubjectBlock], k: usize) -> DMatrix<f64> {
    let complete: Vec<&SubjectBlock> = blocks.iter().filter(|b| b.n_obs() == k).collect();
    if complete.len() >= k + 2 {
        let n = complete.len() as f64;
        let mut mean = DVector::zeros(k);
        for b in &complete {
            mean += &b.y;
        }
        mean /= n;
        let mut cov = DMatrix::zeros(k, k);
        for b in &complete {
            let d = &b.y - &mean;
            cov += &d * d.transpose();
        }
        cov /= n - 1.0;
        return nearest_spd(&cov);
    }

    // Pairwise moments over whatever is observed.
    let mut sums = DMatrix::<f64>::zeros(k, k);
    let mut counts = DMatrix::<f64>::zeros(k, k);
    let mut means = DVector::<f64>::zeros(k);
    let mut mcounts = DVector::<f64>::zeros(k);
    for b in blocks {
        for (r, &v) in b.visits.iter().enumerate() {
            means[v] += b.y[r];
            mcounts[v] += 1.0;
        }
    }
    for v in 0..k {
        if mcounts[v] > 0.0 {
            means[v] /= mcounts[v];
        }
    }
    for b in blocks {
        for (r, &vr) in b.visits.iter().enumerate() {
            for (c, &vc) in b.visits.iter().enumerate() {
                sums[(vr, vc)] += (b.y[r] - means[vr]) * (b.y[c] - means[vc]);
                counts[(vr, vc)] += 1.0;
            }
        }
    }
    let mut cov = DMatrix::from_fn(k, k, |i, j| {
        if counts[(i, j)] > 1.0 {
            sums[(i, j)] / (counts[(i, j)] - 1.0)
        } else if i == j {
            1.0
        } else {
            0.0
        }
    });
    for i in 0..k {
        if cov[(i, i)] <= 0.0 {
            cov[(i, i)] = 1.0;
        }
    }
    nearest_spd(&cov)
}

/// Fits the covariance by (RE)ML and returns it with the profiled fixed
/// effects. Non-convergence is reported through the diagnostics, not an
/// error.
pub fn fit_reml(
    blocks: &[SubjectBlock],
    k: usize,
    structure: CovStructure,
    opts: &RemlOptions,
) -> Result<RemlFit> {
    if blocks.iter().all(|b| b.n_obs() == 0) {
        return Err(Error::InvalidInput("no observed outcomes to fit".into()));
    }
    let init = match &opts.init {
        Some(theta) => CovarianceParams::new(structure, k, theta.clone())?,
        None => CovarianceParams::from_sample_cov(structure, &initial_sample_cov(blocks, k))?,
    };
    let criterion = opts.criterion;
    let workspace = GlsWorkspace::new(blocks, k)?;
    // Minimize the per-subject mean of the objective: keeps the
    // finite-difference noise floor and the gradient tolerance on a scale
    // that does not grow with the sample.
    let scale = blocks.iter().filter(|b| b.n_obs() > 0).count().max(1) as f64;
    let objective = |theta: &DVector<f64>| -> f64 {
        CovarianceParams::new(structure, k, theta.clone())
            .ok()
            .and_then(|p| workspace.accumulate(&p.materialize()).ok())
            .and_then(|parts| neg2_from_parts(&parts, criterion).ok())
            .map(|f| f / scale)
            .unwrap_or(f64::INFINITY)
    };
    let outcome = bfgs_minimize(&objective, init.theta.clone(), &OptimOptions::default());

    let covariance = CovarianceParams::new(structure, k, outcome.x)?;
    let sigma = covariance.materialize();
    let parts = workspace.accumulate(&sigma)?;
    let beta = solve_spd(&parts.xtx, &parts.xty)?;
    let condition = condition_estimate(&parts.xtx);
    Ok(RemlFit {
        covariance,
        beta,
        diagnostics: FitDiagnostics {
            converged: outcome.converged,
            iterations: outcome.iterations,
            // Reported on the unscaled -2 log-likelihood scale; the gradient
            // norm is on the optimizer's per-subject scale.
            objective: outcome.objective * scale,
            gradient_norm: outcome.grad_norm,
            condition,
        },
    })
}
