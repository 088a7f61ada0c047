//! Marginal longitudinal logistic estimator for binary outcomes, fit by
//! GEE-style scoring with a moment-estimated working correlation. Structures
//! are attempted in ladder order until one converges; the effect is the
//! standardized risk difference, averaging each subject's predicted
//! final-visit risk under both arms over the entire sample.

use nalgebra::{DMatrix, DVector};

use crate::data::{OutcomeKind, TrialDataset};
use crate::error::{Error, Result};
use crate::estimators::design::{BaselineTerms, LongitudinalDesign};
use crate::estimators::{EffectEstimate, EstimatorKind};
use crate::numerics::{
    check_design_rank, irls_logistic, solve_spd, CovStructure, FitDiagnostics, SubjectBlock,
    SEPARATION_CAP,
};
use crate::stats::inv_logit;

pub const DEFAULT_LADDER: [CovStructure; 4] = [
    CovStructure::Unstructured,
    CovStructure::Ar1,
    CovStructure::CompoundSymmetry,
    CovStructure::Independence,
];

#[derive(Debug, Clone)]
pub struct GlmmOptions {
    /// Working correlation structures to try, in order.
    pub ladder: Vec<CovStructure>,
    pub max_outer_iter: usize,
    pub tol: f64,
}

impl Default for GlmmOptions {
    fn default() -> Self {
        GlmmOptions {
            ladder: DEFAULT_LADDER.to_vec(),
            max_outer_iter: 50,
            tol: 1e-6,
        }
    }
}

/// Converged marginal-model fit plus counterfactual predictions.
#[derive(Debug, Clone)]
pub struct GeeFit {
    pub coefficients: DVector<f64>,
    pub structure: CovStructure,
    /// Per-subject predicted final-visit risk under control and treatment.
    pub predictions: Vec<(f64, f64)>,
    pub diagnostics: FitDiagnostics,
}

pub fn glmm_standardized(ds: &TrialDataset, opts: &GlmmOptions) -> Result<EffectEstimate> {
    glmm_standardized_fit(ds, opts).map(|(est, _)| est)
}

pub fn glmm_standardized_fit(
    ds: &TrialDataset,
    opts: &GlmmOptions,
) -> Result<(EffectEstimate, GeeFit)> {
    if ds.outcome_kind() != OutcomeKind::Binary {
        return Err(Error::IncompatibleOutcome {
            estimator: EstimatorKind::GlmmStandardized.label().to_string(),
            outcome: ds.outcome_kind().as_str().to_string(),
        });
    }
    let design = LongitudinalDesign::new(ds, BaselineTerms::Pooled)?;
    let (blocks, subjects) = design.blocks(ds);
    check_design_rank(&blocks, design.p)?;

    let mut tried = Vec::new();
    for &structure in &opts.ladder {
        tried.push(structure.as_str());
        match fit_gee(&blocks, ds.k(), structure, opts)? {
            GeeAttempt::Converged(inner) => {
                let (eta0, eta1) = design.marginal_linear_predictions(ds, &inner.beta);
                let p0: Vec<f64> = eta0.into_iter().map(inv_logit).collect();
                let p1: Vec<f64> = eta1.into_iter().map(inv_logit).collect();
                let mu0 = p0.iter().sum::<f64>() / ds.n() as f64;
                let mu1 = p1.iter().sum::<f64>() / ds.n() as f64;
                let mut est = EffectEstimate::from_arm_means(
                    EstimatorKind::GlmmStandardized,
                    mu0,
                    mu1,
                );
                est.covariance_structure = Some(structure);
                est.diagnostics = inner.diagnostics.clone();
                est.n_used = subjects.len();
                let fit = GeeFit {
                    coefficients: inner.beta,
                    structure,
                    predictions: p0.into_iter().zip(p1).collect(),
                    diagnostics: inner.diagnostics,
                };
                return Ok((est, fit));
            }
            GeeAttempt::NotConverged => continue,
        }
    }
    Err(Error::AllStructuresFailed {
        tried: tried.join(", "),
    })
}

struct GeeInner {
    beta: DVector<f64>,
    diagnostics: FitDiagnostics,
}

enum GeeAttempt {
    Converged(GeeInner),
    NotConverged,
}

fn fit_gee(
    blocks: &[SubjectBlock],
    k: usize,
    structure: CovStructure,
    opts: &GlmmOptions,
) -> Result<GeeAttempt> {
    // Independence start: plain logistic regression on the stacked rows.
    let total: usize = blocks.iter().map(|b| b.n_obs()).sum();
    let p = blocks[0].design.ncols();
    let mut stacked_x = DMatrix::zeros(total, p);
    let mut stacked_y = DVector::zeros(total);
    let mut row = 0;
    for b in blocks {
        stacked_x
            .view_mut((row, 0), (b.n_obs(), p))
            .copy_from(&b.design);
        stacked_y.rows_mut(row, b.n_obs()).copy_from(&b.y);
        row += b.n_obs();
    }
    let unit = DVector::from_element(total, 1.0);
    let init = irls_logistic(&stacked_x, &stacked_y, &unit)?;
    if init.separation {
        return Err(Error::SeparationDetected {
            context: "marginal logistic model".into(),
        });
    }
    let mut beta = init.beta;

    for outer in 1..=opts.max_outer_iter {
        // Pearson residuals at the current coefficients.
        let mus: Vec<DVector<f64>> = blocks
            .iter()
            .map(|b| (&b.design * &beta).map(inv_logit))
            .collect();
        let corr = working_correlation(blocks, &mus, k, structure);

        // One Fisher-scoring step under the working correlation.
        let mut a = DMatrix::zeros(p, p);
        let mut bvec = DVector::zeros(p);
        for (b, mu) in blocks.iter().zip(&mus) {
            let m = b.n_obs();
            let sub = DMatrix::from_fn(m, m, |r, c| corr[(b.visits[r], b.visits[c])]);
            let chol = match sub.cholesky() {
                Some(c) => c,
                None => return Ok(GeeAttempt::NotConverged),
            };
            // Scale rows by sqrt(v); whiten by the correlation Cholesky.
            let mut aug = DMatrix::zeros(m, p + 1);
            for r in 0..m {
                let v = (mu[r] * (1.0 - mu[r])).max(1e-10);
                let u = v.sqrt();
                for c in 0..p {
                    aug[(r, c)] = u * b.design[(r, c)];
                }
                aug[(r, p)] = (b.y[r] - mu[r]) / u;
            }
            chol.l_dirty().solve_lower_triangular_mut(&mut aug);
            for r in 0..m {
                for c1 in 0..p {
                    bvec[c1] += aug[(r, c1)] * aug[(r, p)];
                    for c2 in 0..=c1 {
                        a[(c1, c2)] += aug[(r, c1)] * aug[(r, c2)];
                    }
                }
            }
        }
        for c1 in 0..p {
            for c2 in (c1 + 1)..p {
                a[(c1, c2)] = a[(c2, c1)];
            }
        }
        let step = match solve_spd(&a, &bvec) {
            Ok(s) => s,
            Err(_) => return Ok(GeeAttempt::NotConverged),
        };
        beta += &step;
        if beta.amax() > SEPARATION_CAP {
            return Err(Error::SeparationDetected {
                context: "marginal logistic model".into(),
            });
        }
        let last_step = step.amax();
        if last_step < opts.tol {
            let mut ll = 0.0;
            for b in blocks {
                let mu = (&b.design * &beta).map(inv_logit);
                for r in 0..b.n_obs() {
                    let m = mu[r].clamp(1e-12, 1.0 - 1e-12);
                    ll += b.y[r] * m.ln() + (1.0 - b.y[r]) * (1.0 - m).ln();
                }
            }
            return Ok(GeeAttempt::Converged(GeeInner {
                beta,
                diagnostics: FitDiagnostics {
                    converged: true,
                    iterations: outer,
                    objective: ll,
                    gradient_norm: last_step,
                    condition: crate::numerics::condition_estimate(&a),
                },
            }));
        }
    }
    Ok(GeeAttempt::NotConverged)
}

/// Moment estimate of the working correlation: Pearson residual
/// cross-products averaged over subjects observed at both visits, normalized
/// to unit diagonal, projected onto the requested structure, and damped
/// toward the identity until positive definite.
fn working_correlation(
    blocks: &[SubjectBlock],
    mus: &[DVector<f64>],
    k: usize,
    structure: CovStructure,
) -> DMatrix<f64> {
    if structure == CovStructure::Independence {
        return DMatrix::identity(k, k);
    }
    let mut sums = DMatrix::<f64>::zeros(k, k);
    let mut counts = DMatrix::<f64>::zeros(k, k);
    for (b, mu) in blocks.iter().zip(mus) {
        let m = b.n_obs();
        let mut e = vec![0.0; m];
        for r in 0..m {
            let v = (mu[r] * (1.0 - mu[r])).max(1e-10);
            e[r] = (b.y[r] - mu[r]) / v.sqrt();
        }
        for r in 0..m {
            for c in 0..m {
                sums[(b.visits[r], b.visits[c])] += e[r] * e[c];
                counts[(b.visits[r], b.visits[c])] += 1.0;
            }
        }
    }
    let moment = DMatrix::from_fn(k, k, |i, j| {
        if counts[(i, j)] > 0.0 {
            sums[(i, j)] / counts[(i, j)]
        } else {
            0.0
        }
    });
    let mut corr = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            1.0
        } else {
            let d = (moment[(i, i)] * moment[(j, j)]).sqrt();
            if d > 0.0 {
                (moment[(i, j)] / d).clamp(-0.99, 0.99)
            } else {
                0.0
            }
        }
    });

    corr = match structure {
        CovStructure::Unstructured => corr,
        CovStructure::Ar1 => {
            let mut rho = 0.0;
            for t in 0..k - 1 {
                rho += corr[(t, t + 1)];
            }
            rho = (rho / (k - 1).max(1) as f64).clamp(-0.99, 0.99);
            DMatrix::from_fn(k, k, |i, j| rho.powi((i as i32 - j as i32).abs()))
        }
        CovStructure::CompoundSymmetry => {
            let mut rho = 0.0;
            let mut cnt = 0.0;
            for i in 0..k {
                for j in 0..i {
                    rho += corr[(i, j)];
                    cnt += 1.0;
                }
            }
            let lo = if k > 1 { -1.0 / (k as f64 - 1.0) + 1e-3 } else { -0.99 };
            let rho = if cnt > 0.0 { (rho / cnt).clamp(lo, 0.99) } else { 0.0 };
            DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { rho })
        }
        CovStructure::Independence => unreachable!(),
    };

    // Damp off-diagonals toward zero until the matrix factors.
    for _ in 0..200 {
        if corr.clone().cholesky().is_some() {
            break;
        }
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    corr[(i, j)] *= 0.95;
                }
            }
        }
    }
    corr
}
