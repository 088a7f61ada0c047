use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed file {path} (line {line}): {message}")]
    MalformedFile {
        path: String,
        line: usize,
        message: String,
    },

    #[error("subject {subject}: outcome observed at visit {visit} after an earlier missing visit")]
    NonMonotoneMissingness { subject: String, visit: usize },

    #[error("subject {subject} appears with both arm values")]
    MixedArmSubject { subject: String },

    #[error("subject {subject}: missing baseline covariate `{covariate}`")]
    MissingBaseline { subject: String, covariate: String },

    #[error("design matrix is rank deficient: {detail}")]
    RankDeficientDesign { detail: String },

    #[error("linear system is singular or numerically indefinite")]
    SingularSystem,

    #[error("arm {arm} has no subjects observed at the final visit")]
    EmptyArm { arm: u8 },

    #[error("coefficient separation detected in {context}")]
    SeparationDetected { context: String },

    #[error("no working covariance structure converged: tried {tried}")]
    AllStructuresFailed { tried: String },

    #[error("risk set too small for {arm} at step {step}: {count} subjects (need {needed})")]
    InsufficientRiskSet {
        /// "control", "treated", or "both arms" for pooled fits.
        arm: String,
        step: usize,
        count: usize,
        needed: usize,
    },

    #[error("{failed} of {total} bootstrap replicates failed (limit {limit})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        limit: usize,
    },

    #[error("replicate set is degenerate: {detail}")]
    DegenerateReplicates { detail: String },

    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),

    #[error("dropout calibration cannot reach target {target} at visit {visit}: {detail}")]
    CalibrationOutOfRange {
        visit: usize,
        target: f64,
        detail: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("report schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("estimator `{estimator}` does not support {outcome} outcomes")]
    IncompatibleOutcome {
        estimator: String,
        outcome: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
