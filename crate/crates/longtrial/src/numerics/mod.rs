//! Shared numerical kernels: weighted least squares, fractional-response
//! logistic regression, profiled GLS, and (RE)ML covariance optimization.

mod covariance;
mod glm;
mod gls;
mod optim;
mod reml;

pub use covariance::{nearest_spd, CovStructure, CovarianceParams};
pub use glm::{
    condition_estimate, irls_logistic, solve_spd, wls, FitDiagnostics, LogisticFit, WlsFit,
    SEPARATION_CAP,
};
pub use gls::{check_design_rank, gls_profile_beta, GlsWorkspace, SubjectBlock};
pub use optim::{bfgs_minimize, central_gradient, OptimOptions, OptimOutcome};
pub use reml::{
    fit_reml, initial_sample_cov, neg2_objective, objective_gradient, FitCriterion, RemlFit,
    RemlOptions,
};
