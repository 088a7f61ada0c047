//! Repeated-measures linear estimators for continuous outcomes: saturated
//! visit and visit-by-arm means with residual covariance fit by REML. The
//! plain variant pools baseline coefficients across visits; the starred
//! variant gives every visit from the second onward its own baseline
//! coefficient vector. The treatment effect at the final visit is the arm
//! main effect plus the final-visit arm interaction.

use nalgebra::DVector;

use crate::data::{OutcomeKind, TrialDataset};
use crate::error::{Error, Result};
use crate::estimators::design::{BaselineTerms, LongitudinalDesign};
use crate::estimators::{EffectEstimate, EstimatorKind};
use crate::numerics::{
    check_design_rank, fit_reml, CovStructure, CovarianceParams, FitCriterion, RemlOptions,
};

#[derive(Debug, Clone)]
pub struct MmrmOptions {
    pub structure: CovStructure,
    pub criterion: FitCriterion,
    /// Starting covariance parameters (used to warm-start resampled refits).
    pub init: Option<DVector<f64>>,
    /// Starred variant only: also include first-visit baseline main effects
    /// in addition to the per-visit terms from the second visit onward.
    pub first_visit_baseline: bool,
}

impl Default for MmrmOptions {
    fn default() -> Self {
        MmrmOptions {
            structure: CovStructure::Unstructured,
            criterion: FitCriterion::Reml,
            init: None,
            first_visit_baseline: false,
        }
    }
}

/// Fitted coefficients and covariance of a repeated-measures run.
#[derive(Debug, Clone)]
pub struct MmrmFit {
    pub coefficients: DVector<f64>,
    pub covariance: CovarianceParams,
}

fn check_arms_present(ds: &TrialDataset) -> Result<()> {
    let last = ds.k() - 1;
    for arm in 0..2u8 {
        let any = ds
            .records()
            .iter()
            .any(|r| r.arm.index() == arm as usize && r.outcomes[last].is_some());
        if !any {
            return Err(Error::EmptyArm { arm });
        }
    }
    Ok(())
}

fn fit(
    ds: &TrialDataset,
    opts: &MmrmOptions,
    kind: EstimatorKind,
    baseline: BaselineTerms,
) -> Result<(EffectEstimate, MmrmFit)> {
    if ds.outcome_kind() != OutcomeKind::Continuous {
        return Err(Error::IncompatibleOutcome {
            estimator: kind.label().to_string(),
            outcome: ds.outcome_kind().as_str().to_string(),
        });
    }
    check_arms_present(ds)?;
    let design = LongitudinalDesign::new(ds, baseline)?;
    let (blocks, subjects) = design.blocks(ds);
    check_design_rank(&blocks, design.p)?;

    let reml = fit_reml(
        &blocks,
        ds.k(),
        opts.structure,
        &RemlOptions {
            criterion: opts.criterion,
            init: opts.init.clone(),
        },
    )?;

    let (eta0, eta1) = design.marginal_linear_predictions(ds, &reml.beta);
    let mu0 = eta0.iter().sum::<f64>() / ds.n() as f64;
    let mu1 = eta1.iter().sum::<f64>() / ds.n() as f64;

    let mut est = EffectEstimate::from_arm_means(kind, mu0, mu1);
    est.covariance_structure = Some(opts.structure);
    est.diagnostics = reml.diagnostics.clone();
    est.n_used = subjects.len();
    if !reml.diagnostics.converged {
        est.warnings.push("covariance fit did not converge".into());
    }
    Ok((
        est,
        MmrmFit {
            coefficients: reml.beta,
            covariance: reml.covariance,
        },
    ))
}

/// Pooled-baseline repeated-measures estimator.
pub fn mmrm(ds: &TrialDataset, opts: &MmrmOptions) -> Result<EffectEstimate> {
    fit(ds, opts, EstimatorKind::Mmrm, BaselineTerms::Pooled).map(|(est, _)| est)
}

/// Visit-by-baseline interaction variant. With a single visit there are no
/// interaction terms and the model coincides with the pooled one.
pub fn mmrm_star(ds: &TrialDataset, opts: &MmrmOptions) -> Result<EffectEstimate> {
    let baseline = star_baseline_terms(ds, opts);
    fit(ds, opts, EstimatorKind::MmrmStar, baseline).map(|(est, _)| est)
}

fn star_baseline_terms(ds: &TrialDataset, opts: &MmrmOptions) -> BaselineTerms {
    if ds.k() == 1 {
        // No visits beyond the first: the interaction family degenerates to
        // the pooled model.
        BaselineTerms::Pooled
    } else if opts.first_visit_baseline {
        BaselineTerms::PerVisitWithFirst
    } else {
        BaselineTerms::PerVisitFromSecond
    }
}

/// Full fit metadata for callers that need the coefficient vector.
pub fn mmrm_fit(ds: &TrialDataset, opts: &MmrmOptions, star: bool) -> Result<(EffectEstimate, MmrmFit)> {
    if star {
        let baseline = star_baseline_terms(ds, opts);
        fit(ds, opts, EstimatorKind::MmrmStar, baseline)
    } else {
        fit(ds, opts, EstimatorKind::Mmrm, BaselineTerms::Pooled)
    }
}

/// Covariance parameters of a full-data fit, for warm-starting resampled
/// refits. Returns `None` when the fit fails or does not converge.
pub(crate) fn prefit_theta(ds: &TrialDataset, opts: &MmrmOptions, star: bool) -> Option<DVector<f64>> {
    let (est, fit) = mmrm_fit(ds, opts, star).ok()?;
    if est.diagnostics.converged {
        Some(fit.covariance.theta)
    } else {
        None
    }
}
