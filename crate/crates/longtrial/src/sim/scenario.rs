//! Monte Carlo study over one (outcome, effect, dropout) combination:
//! generate trials, run every estimator, optionally wrap each estimate in a
//! bootstrap interval, and aggregate bias / variance / MSE / relative MSE /
//! coverage with Monte Carlo standard errors.

use crate::data::OutcomeKind;
use crate::error::{Error, Result};
use crate::estimators::{Estimator, EstimatorKind, EstimatorSpec};
use crate::exec::{map_indexed, ExecPolicy};
use crate::inference::{bootstrap, BootstrapOptions};
use crate::rng::stream_id;
use crate::sim::source::SourcePopulation;
use crate::sim::trial::{
    generate_trial, resolve_dropout, true_delta_analytic, DropoutMechanism, EffectProfile,
    ResolvedDropout,
};

const TRIAL_STREAM: u64 = 0x7214;
const COVER_STREAM: u64 = 0xC0F;

/// FNV-1a over the combo label: decouples the random streams of different
/// grid cells run under the same seed.
fn combo_salt(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// One cell of the study grid.
#[derive(Debug, Clone)]
pub struct ScenarioCombo {
    pub outcome: OutcomeKind,
    pub effect: EffectProfile,
    pub dropout: DropoutMechanism,
}

impl ScenarioCombo {
    pub fn label(&self) -> String {
        format!(
            "{}/{}/{}",
            self.outcome.as_str(),
            self.effect.label(),
            self.dropout.label()
        )
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOptions {
    /// Subjects per simulated trial.
    pub n: usize,
    pub replicates: usize,
    /// Bootstrap replicates per trial for coverage; 0 disables coverage.
    pub boot_b: usize,
    pub seed: u64,
    pub exec: ExecPolicy,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub bias: f64,
    pub bias_mc_se: f64,
    /// Population variance of the replicate estimates (n denominator), so
    /// that mse == variance + bias^2 holds as an identity.
    pub variance: f64,
    pub variance_mc_se: f64,
    pub mse: f64,
    pub mse_mc_se: f64,
    pub relative_mse: Option<f64>,
    pub relative_mse_mc_se: Option<f64>,
    pub coverage: Option<f64>,
    pub coverage_mc_se: Option<f64>,
    pub retained: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ScenarioMetrics {
    pub label: String,
    pub outcome: String,
    pub effect: String,
    pub dropout: String,
    pub true_delta: f64,
    pub replicates: usize,
    pub estimators: Vec<EstimatorSummary>,
    /// MAR intercepts resolved for this run, when applicable
    /// (arm-by-visit, control first).
    pub mar_intercepts: Option<[Vec<f64>; 2]>,
}

struct ReplicateRow {
    /// Per estimator: the estimate, if the fit succeeded and converged.
    deltas: Vec<Option<f64>>,
    /// Per estimator: whether the bootstrap interval covered the truth.
    covered: Vec<Option<bool>>,
}

pub fn run_scenario(
    src: &SourcePopulation,
    combo: &ScenarioCombo,
    estimators: &[EstimatorSpec],
    opts: &ScenarioOptions,
) -> Result<ScenarioMetrics> {
    if opts.replicates < 2 {
        return Err(Error::InvalidInput("run_scenario needs at least 2 replicates".into()));
    }
    if estimators.is_empty() {
        return Err(Error::InvalidInput("no estimators requested".into()));
    }
    for spec in estimators {
        if !spec.kind().supports(combo.outcome) {
            return Err(Error::IncompatibleOutcome {
                estimator: spec.kind().label().to_string(),
                outcome: combo.outcome.as_str().to_string(),
            });
        }
    }
    let pool = src.dataset(combo.outcome);
    combo.effect.validate(pool.k(), combo.outcome)?;
    let resolved = resolve_dropout(pool, &combo.effect, &combo.dropout)?;
    let truth = true_delta_analytic(pool, &combo.effect)?;

    let salt = combo_salt(&combo.label());
    let rows: Vec<Result<ReplicateRow>> = map_indexed(opts.exec, opts.replicates, |r| {
        let trial_seed = stream_id(opts.seed, &[TRIAL_STREAM, salt, r as u64]);
        let trial = generate_trial(pool, opts.n, &combo.effect, &resolved, trial_seed)?;
        let mut deltas = Vec::with_capacity(estimators.len());
        let mut covered = Vec::with_capacity(estimators.len());
        for (e_idx, spec) in estimators.iter().enumerate() {
            if opts.boot_b > 0 {
                let boot_seed = stream_id(opts.seed, &[COVER_STREAM, salt, r as u64, e_idx as u64]);
                match bootstrap(
                    &trial,
                    spec,
                    &BootstrapOptions {
                        b: opts.boot_b,
                        seed: boot_seed,
                        exec: ExecPolicy::Sequential,
                        ..Default::default()
                    },
                ) {
                    Ok(res) => {
                        covered.push(Some(res.interval.covers(truth)));
                        deltas.push(Some(res.point.delta));
                    }
                    Err(_) => {
                        covered.push(None);
                        deltas.push(None);
                    }
                }
            } else {
                covered.push(None);
                match spec.estimate(&trial) {
                    Ok(est) if est.diagnostics.converged && est.delta.is_finite() => {
                        deltas.push(Some(est.delta));
                    }
                    _ => deltas.push(None),
                }
            }
        }
        Ok(ReplicateRow { deltas, covered })
    });

    let mut collected = Vec::with_capacity(opts.replicates);
    for row in rows {
        collected.push(row?);
    }

    // Squared errors per estimator over retained replicates, kept aligned by
    // replicate index for the relative-MSE covariance term.
    let n_est = estimators.len();
    let mut summaries = Vec::with_capacity(n_est);
    let unadj_idx = estimators
        .iter()
        .position(|e| e.kind() == EstimatorKind::Unadjusted);

    for (e, spec) in estimators.iter().enumerate() {
        let values: Vec<f64> = collected.iter().filter_map(|r| r.deltas[e]).collect();
        let retained = values.len();
        let failures = opts.replicates - retained;
        if retained < 2 {
            return Err(Error::TooManyFailures {
                failed: failures,
                total: opts.replicates,
                limit: opts.replicates - 2,
            });
        }
        let r = retained as f64;
        let mean = values.iter().sum::<f64>() / r;
        let bias = mean - truth;
        let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / r;
        let sq_errs: Vec<f64> = values.iter().map(|v| (v - truth) * (v - truth)).collect();
        let mse = sq_errs.iter().sum::<f64>() / r;
        let sample_var = variance * r / (r - 1.0);
        let bias_mc_se = (sample_var / r).sqrt();
        let variance_mc_se = sample_var * (2.0 / (r - 1.0)).sqrt();
        let mse_var = crate::stats::sample_variance(&sq_errs);
        let mse_mc_se = (mse_var / r).sqrt();

        let (coverage, coverage_mc_se) = if opts.boot_b > 0 {
            let flags: Vec<bool> = collected.iter().filter_map(|row| row.covered[e]).collect();
            if flags.is_empty() {
                (None, None)
            } else {
                let cov = flags.iter().filter(|&&c| c).count() as f64 / flags.len() as f64;
                let se = (cov * (1.0 - cov) / flags.len() as f64).sqrt();
                (Some(cov), Some(se))
            }
        } else {
            (None, None)
        };

        summaries.push(EstimatorSummary {
            estimator: spec.kind().label().to_string(),
            bias,
            bias_mc_se,
            variance,
            variance_mc_se,
            mse,
            mse_mc_se,
            relative_mse: None,
            relative_mse_mc_se: None,
            coverage,
            coverage_mc_se,
            retained,
            failures,
        });
    }

    // Relative MSE against the unadjusted estimator, with a delta-method
    // Monte Carlo standard error that accounts for the shared replicates.
    if let Some(u) = unadj_idx {
        let mse_u = summaries[u].mse;
        #[allow(clippy::needless_range_loop)] // parallel indexing into rows and summaries
        for e in 0..n_est {
            if e == u {
                summaries[e].relative_mse = Some(1.0);
                summaries[e].relative_mse_mc_se = Some(0.0);
                continue;
            }
            let mse_e = summaries[e].mse;
            if mse_e <= 0.0 {
                continue;
            }
            let ratio = mse_u / mse_e;
            let paired: Vec<(f64, f64)> = collected
                .iter()
                .filter_map(|row| match (row.deltas[u], row.deltas[e]) {
                    (Some(du), Some(de)) => {
                        Some(((du - truth) * (du - truth), (de - truth) * (de - truth)))
                    }
                    _ => None,
                })
                .collect();
            let np = paired.len() as f64;
            if np >= 2.0 {
                let mu = paired.iter().map(|p| p.0).sum::<f64>() / np;
                let me = paired.iter().map(|p| p.1).sum::<f64>() / np;
                let mut vu = 0.0;
                let mut ve = 0.0;
                let mut cov = 0.0;
                for (su, se_) in &paired {
                    vu += (su - mu) * (su - mu);
                    ve += (se_ - me) * (se_ - me);
                    cov += (su - mu) * (se_ - me);
                }
                vu /= np - 1.0;
                ve /= np - 1.0;
                cov /= np - 1.0;
                let rel_var = (ratio * ratio)
                    * (vu / (mu * mu) + ve / (me * me) - 2.0 * cov / (mu * me))
                    / np;
                summaries[e].relative_mse_mc_se = Some(rel_var.max(0.0).sqrt());
            }
            summaries[e].relative_mse = Some(ratio);
        }
    }

    let mar_intercepts = match &resolved {
        ResolvedDropout::Mar { intercepts, .. } => Some(intercepts.clone()),
        _ => None,
    };
    Ok(ScenarioMetrics {
        label: combo.label(),
        outcome: combo.outcome.as_str().to_string(),
        effect: combo.effect.label().to_string(),
        dropout: combo.dropout.label().to_string(),
        true_delta: truth,
        replicates: opts.replicates,
        estimators: summaries,
        mar_intercepts,
    })
}
