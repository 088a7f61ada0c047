//! Monte Carlo study engine: synthetic source populations, trial generation
//! with effect injection and monotone dropout, truth oracles, and metric
//! aggregation over replicated trials.

pub mod config;
mod scenario;
mod source;
mod trial;

pub use config::{load_scenario, ScenarioConfig, SCENARIO_SCHEMA_VERSION};
pub use scenario::{run_scenario, EstimatorSummary, ScenarioCombo, ScenarioMetrics, ScenarioOptions};
pub use source::{
    source_from_dataset, synthesize_source, SourceParams, SourcePopulation, SourceProvenance,
    TruncNormal,
};
pub use trial::{
    generate_trial, resolve_dropout, true_delta_analytic, true_delta_oracle, DropoutMechanism,
    EffectProfile, MarSpec, ResolvedDropout,
};
