//! Scenario configuration files: versioned TOML describing the source pool,
//! trial size, study grid, effect profiles, and dropout mechanisms.

use std::path::Path;

use serde::Deserialize;

use crate::data::{load_csv, CovariateSchema, CsvLayout, LoadOptions, OutcomeKind};
use crate::error::{Error, Result};
use crate::sim::source::{source_from_dataset, synthesize_source, SourceParams, SourcePopulation};
use crate::sim::trial::{DropoutMechanism, EffectProfile, MarSpec};
use crate::sim::ScenarioCombo;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub name: String,
    pub source: SourceConfig,
    pub trial: TrialConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub effect: EffectConfig,
    #[serde(default)]
    pub dropout: DropoutConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// "synthetic" or "file".
    pub kind: String,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// File pools: path to a complete wide-layout CSV.
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub outcome: Option<String>,
    #[serde(default)]
    pub covariates: Option<String>,
    // Generator overrides (synthetic pools).
    #[serde(default)]
    pub mean_change: Option<Vec<f64>>,
    #[serde(default)]
    pub sd_change: Option<Vec<f64>>,
    #[serde(default)]
    pub baseline_corr: Option<f64>,
    #[serde(default)]
    pub baseline_corr_profile: Option<Vec<f64>>,
    #[serde(default)]
    pub weight_corr: Option<f64>,
    #[serde(default)]
    pub resid_corr_lag1: Option<f64>,
    #[serde(default)]
    pub responder_threshold: Option<f64>,
    #[serde(default)]
    pub male_prob: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    pub n: usize,
    #[serde(default)]
    pub visit_weeks: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub outcomes: Vec<String>,
    pub effects: Vec<String>,
    pub dropouts: Vec<String>,
    pub replicates: usize,
    #[serde(default)]
    pub boot: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EffectConfig {
    #[serde(default)]
    pub beneficial: Option<BeneficialConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeneficialConfig {
    #[serde(default)]
    pub continuous: Option<ContinuousEffectConfig>,
    #[serde(default)]
    pub binary: Option<BinaryEffectConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousEffectConfig {
    pub decrements: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinaryEffectConfig {
    pub flip_probs: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DropoutConfig {
    #[serde(default)]
    pub mcar: Option<McarConfig>,
    #[serde(default)]
    pub mar: Option<MarConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McarConfig {
    pub target_missing: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarConfig {
    pub control_missing: Vec<f64>,
    pub treated_missing: Vec<f64>,
    #[serde(default = "default_slope")]
    pub slope_continuous: f64,
    #[serde(default = "default_slope")]
    pub slope_binary: f64,
}

fn default_slope() -> f64 {
    0.5
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let config: ScenarioConfig = toml::from_str(&text).map_err(|e| {
        Error::Config(format!("{}: {e}", path.as_ref().display()))
    })?;
    config.validate()?;
    Ok(config)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != SCENARIO_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported scenario schema version {} (expected {SCENARIO_SCHEMA_VERSION})",
                self.version
            )));
        }
        match self.source.kind.as_str() {
            "synthetic" => {}
            "file" => {
                if self.source.path.is_none() {
                    return Err(Error::Config("source.kind = \"file\" requires source.path".into()));
                }
                let pool_outcome = self.source.outcome.as_deref().unwrap_or("continuous");
                for outcome in &self.run.outcomes {
                    if outcome != pool_outcome {
                        return Err(Error::Config(format!(
                            "file pools provide `{pool_outcome}` outcomes only, but run.outcomes requests `{outcome}`"
                        )));
                    }
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "source.kind must be \"synthetic\" or \"file\", got `{other}`"
                )))
            }
        }
        if self.trial.n == 0 {
            return Err(Error::Config("trial.n must be positive".into()));
        }
        if self.run.outcomes.is_empty() || self.run.effects.is_empty() || self.run.dropouts.is_empty()
        {
            return Err(Error::Config(
                "run.outcomes, run.effects and run.dropouts must be non-empty".into(),
            ));
        }
        // Resolve the grid eagerly so field errors surface at load time.
        self.combos()?;
        Ok(())
    }

    /// The study grid in file order: outcome x effect x dropout.
    pub fn combos(&self) -> Result<Vec<ScenarioCombo>> {
        let mut combos = Vec::new();
        for outcome_name in &self.run.outcomes {
            let outcome: OutcomeKind = outcome_name.parse().map_err(|_| {
                Error::Config(format!("run.outcomes: unknown outcome `{outcome_name}`"))
            })?;
            for effect_name in &self.run.effects {
                let effect = self.effect_profile(effect_name, outcome)?;
                for dropout_name in &self.run.dropouts {
                    let dropout = self.dropout_mechanism(dropout_name, outcome)?;
                    combos.push(ScenarioCombo {
                        outcome,
                        effect: effect.clone(),
                        dropout,
                    });
                }
            }
        }
        Ok(combos)
    }

    fn effect_profile(&self, name: &str, outcome: OutcomeKind) -> Result<EffectProfile> {
        match name {
            "zero" => Ok(EffectProfile::Zero),
            "beneficial" => {
                let beneficial = self.effect.beneficial.as_ref().ok_or_else(|| {
                    Error::Config("run.effects includes `beneficial` but [effect.beneficial] is missing".into())
                })?;
                match outcome {
                    OutcomeKind::Continuous => {
                        let c = beneficial.continuous.as_ref().ok_or_else(|| {
                            Error::Config("[effect.beneficial.continuous] is missing".into())
                        })?;
                        Ok(EffectProfile::BeneficialContinuous {
                            decrements: c.decrements.clone(),
                        })
                    }
                    OutcomeKind::Binary => {
                        let b = beneficial.binary.as_ref().ok_or_else(|| {
                            Error::Config("[effect.beneficial.binary] is missing".into())
                        })?;
                        Ok(EffectProfile::BeneficialBinary {
                            flip_probs: b.flip_probs.clone(),
                        })
                    }
                }
            }
            other => Err(Error::Config(format!("run.effects: unknown effect `{other}`"))),
        }
    }

    fn dropout_mechanism(&self, name: &str, outcome: OutcomeKind) -> Result<DropoutMechanism> {
        match name {
            "none" => Ok(DropoutMechanism::None),
            "mcar" => {
                let m = self.dropout.mcar.as_ref().ok_or_else(|| {
                    Error::Config("run.dropouts includes `mcar` but [dropout.mcar] is missing".into())
                })?;
                Ok(DropoutMechanism::Mcar {
                    target_missing: m.target_missing.clone(),
                })
            }
            "mar" => {
                let m = self.dropout.mar.as_ref().ok_or_else(|| {
                    Error::Config("run.dropouts includes `mar` but [dropout.mar] is missing".into())
                })?;
                let slope = match outcome {
                    OutcomeKind::Continuous => m.slope_continuous,
                    OutcomeKind::Binary => m.slope_binary,
                };
                Ok(DropoutMechanism::Mar(MarSpec {
                    control_targets: m.control_missing.clone(),
                    treated_targets: m.treated_missing.clone(),
                    slope,
                    intercepts: None,
                }))
            }
            other => Err(Error::Config(format!("run.dropouts: unknown dropout `{other}`"))),
        }
    }

    /// Builds (or loads) the resampling pool.
    pub fn source_population(&self) -> Result<SourcePopulation> {
        match self.source.kind.as_str() {
            "synthetic" => {
                let mut params = SourceParams::default();
                if let Some(n) = self.source.n {
                    params.n = n;
                }
                if let Some(weeks) = &self.trial.visit_weeks {
                    params.visit_weeks = weeks.clone();
                    let k = weeks.len();
                    if params.mean_change.len() != k && self.source.mean_change.is_none() {
                        return Err(Error::Config(
                            "trial.visit_weeks length differs from the default generator; set source.mean_change, source.sd_change and source.baseline_corr_profile".into(),
                        ));
                    }
                }
                if let Some(v) = &self.source.mean_change {
                    params.mean_change = v.clone();
                }
                if let Some(v) = &self.source.sd_change {
                    params.sd_change = v.clone();
                }
                if let Some(v) = self.source.baseline_corr {
                    params.baseline_corr = v;
                }
                if let Some(v) = &self.source.baseline_corr_profile {
                    params.baseline_corr_profile = v.clone();
                }
                if let Some(v) = self.source.weight_corr {
                    params.weight_corr = v;
                }
                if let Some(v) = self.source.resid_corr_lag1 {
                    params.resid_corr_lag1 = v;
                }
                if let Some(v) = self.source.responder_threshold {
                    params.responder_threshold = v;
                }
                if let Some(v) = self.source.male_prob {
                    params.male_prob = v;
                }
                let seed = self.source.seed.unwrap_or(0);
                synthesize_source(&params, seed)
            }
            "file" => {
                let path = self.source.path.as_ref().expect("validated");
                let outcome: OutcomeKind = self
                    .source
                    .outcome
                    .as_deref()
                    .unwrap_or("continuous")
                    .parse()?;
                let schema = match &self.source.covariates {
                    Some(spec) => CovariateSchema::parse_spec(spec)?,
                    None => CovariateSchema::empty(),
                };
                let loaded = load_csv(
                    path,
                    &schema,
                    &LoadOptions {
                        layout: CsvLayout::Wide,
                        outcome_kind: outcome,
                        coerce_monotone: false,
                    },
                )?;
                source_from_dataset(loaded.dataset, path.clone())
            }
            _ => unreachable!("validated"),
        }
    }
}
