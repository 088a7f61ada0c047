//! Analysis report schema: the canonical JSON written by `analyze` and read
//! back by `report`.

use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub study: String,
    pub seed: u64,
    pub bootstrap: BootstrapMeta,
    pub dataset: DatasetSummary,
    pub estimates: Vec<EstimateRecord>,
    pub failures: Vec<FailureRecord>,
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BootstrapMeta {
    pub replicates: usize,
    pub level: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub path: String,
    pub n: usize,
    pub visits: usize,
    pub outcome: String,
    pub n_by_arm: [usize; 2],
    pub missing_overall: Vec<f64>,
    pub missing_by_arm: [Vec<f64>; 2],
    pub coerced_values: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub estimator: String,
    pub delta: f64,
    /// (control, treated) means at the final visit.
    pub arm_means: [f64; 2],
    pub variance: f64,
    pub interval: IntervalRecord,
    /// V_unadjusted / V_this; 1.0 for the unadjusted row.
    pub variance_ratio: Option<f64>,
    pub structure: Option<String>,
    pub converged: bool,
    pub n_used: usize,
    pub excluded_replicates: usize,
    pub jackknife_failed: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub z0: Option<f64>,
    pub acceleration: f64,
    pub fallback: String,
    pub degenerate: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FailureRecord {
    pub estimator: String,
    pub error: String,
}
