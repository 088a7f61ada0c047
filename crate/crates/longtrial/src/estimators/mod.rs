//! The five estimators of the average treatment effect at the final visit,
//! each a pure function of an immutable dataset. `delta` is always the
//! treated mean minus the control mean.

mod design;
mod gee;
mod mmrm;
mod tmle;
mod unadjusted;

pub use gee::{glmm_standardized, glmm_standardized_fit, GeeFit, GlmmOptions, DEFAULT_LADDER};
pub use mmrm::{mmrm, mmrm_fit, mmrm_star, MmrmFit, MmrmOptions};
pub use tmle::{tmle, tmle_fit, TmleFit, TmleOptions};
pub use unadjusted::unadjusted;

use crate::data::{OutcomeKind, TrialDataset};
use crate::error::{Error, Result};
use crate::numerics::{CovStructure, FitDiagnostics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Unadjusted,
    Mmrm,
    MmrmStar,
    GlmmStandardized,
    Tmle,
}

impl EstimatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Unadjusted => "unadjusted",
            EstimatorKind::Mmrm => "mmrm",
            EstimatorKind::MmrmStar => "mmrm_star",
            EstimatorKind::GlmmStandardized => "glmm",
            EstimatorKind::Tmle => "tmle",
        }
    }

    pub fn supports(&self, outcome: OutcomeKind) -> bool {
        match self {
            EstimatorKind::Unadjusted | EstimatorKind::Tmle => true,
            EstimatorKind::Mmrm | EstimatorKind::MmrmStar => outcome == OutcomeKind::Continuous,
            EstimatorKind::GlmmStandardized => outcome == OutcomeKind::Binary,
        }
    }
}

/// Point estimate of the average treatment effect with per-arm means and fit
/// diagnostics. `delta == arm_means.1 - arm_means.0` by construction.
#[derive(Debug, Clone)]
pub struct EffectEstimate {
    pub delta: f64,
    /// (control mean, treated mean) at the final visit.
    pub arm_means: (f64, f64),
    pub kind: EstimatorKind,
    pub covariance_structure: Option<CovStructure>,
    pub diagnostics: FitDiagnostics,
    /// Subjects contributing observed information to the fit.
    pub n_used: usize,
    pub warnings: Vec<String>,
}

impl EffectEstimate {
    pub fn from_arm_means(kind: EstimatorKind, mu0: f64, mu1: f64) -> Self {
        EffectEstimate {
            delta: mu1 - mu0,
            arm_means: (mu0, mu1),
            kind,
            covariance_structure: None,
            diagnostics: FitDiagnostics::exact(),
            n_used: 0,
            warnings: vec![],
        }
    }
}

/// Anything that maps a dataset to an effect estimate. Implementations must
/// be deterministic; resampling-based inference relies on it.
pub trait Estimator: Send + Sync {
    fn label(&self) -> String;

    fn estimate(&self, ds: &TrialDataset) -> Result<EffectEstimate>;

    /// A variant tuned for repeated refits on resamples of `ds` (for example
    /// warm-started at the full-data covariance estimate). `None` means use
    /// `self` unchanged.
    fn for_resamples(&self, _ds: &TrialDataset) -> Option<Box<dyn Estimator>> {
        None
    }
}

/// Concrete estimator configuration, parseable from CLI names.
#[derive(Debug, Clone)]
pub enum EstimatorSpec {
    Unadjusted,
    Mmrm(MmrmOptions),
    MmrmStar(MmrmOptions),
    Glmm(GlmmOptions),
    Tmle(TmleOptions),
}

impl EstimatorSpec {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            EstimatorSpec::Unadjusted => EstimatorKind::Unadjusted,
            EstimatorSpec::Mmrm(_) => EstimatorKind::Mmrm,
            EstimatorSpec::MmrmStar(_) => EstimatorKind::MmrmStar,
            EstimatorSpec::Glmm(_) => EstimatorKind::GlmmStandardized,
            EstimatorSpec::Tmle(_) => EstimatorKind::Tmle,
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "unadjusted" | "unadj" => Ok(EstimatorSpec::Unadjusted),
            "mmrm" => Ok(EstimatorSpec::Mmrm(MmrmOptions::default())),
            "mmrm_star" | "mmrm*" => Ok(EstimatorSpec::MmrmStar(MmrmOptions::default())),
            "glmm" => Ok(EstimatorSpec::Glmm(GlmmOptions::default())),
            "tmle" => Ok(EstimatorSpec::Tmle(TmleOptions::default())),
            other => Err(Error::InvalidInput(format!("unknown estimator `{other}`"))),
        }
    }

    /// The estimators compatible with an outcome kind, in reporting order.
    pub fn default_set(outcome: OutcomeKind) -> Vec<EstimatorSpec> {
        match outcome {
            OutcomeKind::Continuous => vec![
                EstimatorSpec::Unadjusted,
                EstimatorSpec::Mmrm(MmrmOptions::default()),
                EstimatorSpec::MmrmStar(MmrmOptions::default()),
                EstimatorSpec::Tmle(TmleOptions::default()),
            ],
            OutcomeKind::Binary => vec![
                EstimatorSpec::Unadjusted,
                EstimatorSpec::Glmm(GlmmOptions::default()),
                EstimatorSpec::Tmle(TmleOptions::default()),
            ],
        }
    }
}

impl Estimator for EstimatorSpec {
    fn label(&self) -> String {
        self.kind().label().to_string()
    }

    fn estimate(&self, ds: &TrialDataset) -> Result<EffectEstimate> {
        if !self.kind().supports(ds.outcome_kind()) {
            return Err(Error::IncompatibleOutcome {
                estimator: self.label(),
                outcome: ds.outcome_kind().as_str().to_string(),
            });
        }
        match self {
            EstimatorSpec::Unadjusted => unadjusted(ds),
            EstimatorSpec::Mmrm(opts) => mmrm(ds, opts),
            EstimatorSpec::MmrmStar(opts) => mmrm_star(ds, opts),
            EstimatorSpec::Glmm(opts) => glmm_standardized(ds, opts),
            EstimatorSpec::Tmle(opts) => tmle(ds, opts),
        }
    }

    fn for_resamples(&self, ds: &TrialDataset) -> Option<Box<dyn Estimator>> {
        // Warm-start repeated covariance fits at the full-data optimum.
        match self {
            EstimatorSpec::Mmrm(opts) => {
                let warm = mmrm::prefit_theta(ds, opts, false)?;
                let mut opts = opts.clone();
                opts.init = Some(warm);
                Some(Box::new(EstimatorSpec::Mmrm(opts)))
            }
            EstimatorSpec::MmrmStar(opts) => {
                let warm = mmrm::prefit_theta(ds, opts, true)?;
                let mut opts = opts.clone();
                opts.init = Some(warm);
                Some(Box::new(EstimatorSpec::MmrmStar(opts)))
            }
            _ => None,
        }
    }
}
