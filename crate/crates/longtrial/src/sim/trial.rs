//! Simulated trial generation: resample the pool with replacement, randomize
//! arms fairly, inject the treatment effect, then apply monotone dropout
//! under a missing-completely-at-random or history-dependent mechanism.

use rand::Rng;

use crate::data::{Arm, OutcomeKind, ParticipantRecord, TrialDataset};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::stats::inv_logit;

#[derive(Debug, Clone, PartialEq)]
pub enum EffectProfile {
    Zero,
    /// Continuous outcomes: treated subjects' changes decrease by these
    /// per-visit amounts (in outcome units).
    BeneficialContinuous { decrements: Vec<f64> },
    /// Binary outcomes: treated non-responders flip to responder with these
    /// independent per-visit probabilities.
    BeneficialBinary { flip_probs: Vec<f64> },
}

impl EffectProfile {
    pub fn validate(&self, k: usize, kind: OutcomeKind) -> Result<()> {
        match self {
            EffectProfile::Zero => Ok(()),
            EffectProfile::BeneficialContinuous { decrements } => {
                if kind != OutcomeKind::Continuous {
                    return Err(Error::InvalidParams(
                        "continuous effect profile on a binary outcome".into(),
                    ));
                }
                if decrements.len() != k || decrements.iter().any(|d| !d.is_finite()) {
                    return Err(Error::InvalidParams(format!(
                        "decrements must be {k} finite values"
                    )));
                }
                Ok(())
            }
            EffectProfile::BeneficialBinary { flip_probs } => {
                if kind != OutcomeKind::Binary {
                    return Err(Error::InvalidParams(
                        "binary effect profile on a continuous outcome".into(),
                    ));
                }
                if flip_probs.len() != k || flip_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::InvalidParams(format!(
                        "flip probabilities must be {k} values in [0,1]"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            EffectProfile::Zero => "zero",
            _ => "beneficial",
        }
    }
}

/// History-dependent dropout: per-arm marginal missingness targets hit by
/// calibrating per-visit intercepts, with a slope on the latest observed
/// outcome from the second visit on.
#[derive(Debug, Clone, PartialEq)]
pub struct MarSpec {
    pub control_targets: Vec<f64>,
    pub treated_targets: Vec<f64>,
    /// Log-odds of dropping per unit of the latest observed outcome.
    pub slope: f64,
    /// Calibrated intercepts per arm and visit; resolved automatically when
    /// absent.
    pub intercepts: Option<[Vec<f64>; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DropoutMechanism {
    None,
    /// Visit-wise marginal missing fractions, identical in both arms.
    Mcar { target_missing: Vec<f64> },
    Mar(MarSpec),
}

impl DropoutMechanism {
    pub fn label(&self) -> &'static str {
        match self {
            DropoutMechanism::None => "none",
            DropoutMechanism::Mcar { .. } => "mcar",
            DropoutMechanism::Mar(_) => "mar",
        }
    }
}

fn validate_targets(targets: &[f64], k: usize) -> Result<()> {
    if targets.len() != k {
        return Err(Error::InvalidParams(format!(
            "dropout targets must cover {k} visits"
        )));
    }
    let mut prev = 0.0;
    for (t, &m) in targets.iter().enumerate() {
        if !(0.0..1.0).contains(&m) {
            return Err(Error::InvalidParams(format!(
                "missing fraction at visit {} must be in [0,1)",
                t + 1
            )));
        }
        if m < prev {
            return Err(Error::InvalidParams(format!(
                "missing fractions must be nondecreasing (visit {})",
                t + 1
            )));
        }
        prev = m;
    }
    Ok(())
}

/// Dropout with all hazards made explicit, ready to drive trial generation.
#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedDropout {
    None,
    /// Conditional per-visit censoring hazards.
    Mcar { hazards: Vec<f64> },
    Mar {
        /// Intercepts indexed by `Arm::index()` then visit.
        intercepts: [Vec<f64>; 2],
        slope: f64,
    },
}

/// Turns a dropout mechanism into explicit hazards, calibrating MAR
/// intercepts against the pool (with the effect applied to the treated arm)
/// so the marginal per-arm missingness hits the targets exactly in
/// expectation.
pub fn resolve_dropout(
    pool: &TrialDataset,
    effect: &EffectProfile,
    dropout: &DropoutMechanism,
) -> Result<ResolvedDropout> {
    let k = pool.k();
    match dropout {
        DropoutMechanism::None => Ok(ResolvedDropout::None),
        DropoutMechanism::Mcar { target_missing } => {
            validate_targets(target_missing, k)?;
            let mut hazards = Vec::with_capacity(k);
            let mut prev = 0.0;
            for (t, &m) in target_missing.iter().enumerate() {
                let h = (m - prev) / (1.0 - prev);
                if !(0.0..1.0).contains(&h) {
                    return Err(Error::CalibrationOutOfRange {
                        visit: t + 1,
                        target: m,
                        detail: format!("implied hazard {h} outside [0,1)"),
                    });
                }
                hazards.push(h);
                prev = m;
            }
            Ok(ResolvedDropout::Mcar { hazards })
        }
        DropoutMechanism::Mar(spec) => {
            validate_targets(&spec.control_targets, k)?;
            validate_targets(&spec.treated_targets, k)?;
            if let Some(intercepts) = &spec.intercepts {
                if intercepts[0].len() != k || intercepts[1].len() != k {
                    return Err(Error::InvalidParams(
                        "MAR intercepts must cover every visit per arm".into(),
                    ));
                }
                return Ok(ResolvedDropout::Mar {
                    intercepts: intercepts.clone(),
                    slope: spec.slope,
                });
            }
            let control = calibrate_arm(pool, effect, Arm::Control, &spec.control_targets, spec.slope)?;
            let treated = calibrate_arm(pool, effect, Arm::Treated, &spec.treated_targets, spec.slope)?;
            Ok(ResolvedDropout::Mar {
                intercepts: [control, treated],
                slope: spec.slope,
            })
        }
    }
}

/// Per-subject outcome value distribution at one visit under a given arm:
/// deterministic for continuous effects, a two-point mixture for binary
/// flips.
fn outcome_mixture(
    rec: &ParticipantRecord,
    effect: &EffectProfile,
    arm: Arm,
    t: usize,
) -> Vec<(f64, f64)> {
    let y = rec.outcomes[t].expect("pool is complete");
    match (effect, arm) {
        (EffectProfile::BeneficialContinuous { decrements }, Arm::Treated) => {
            vec![(1.0, y - decrements[t])]
        }
        (EffectProfile::BeneficialBinary { flip_probs }, Arm::Treated) => {
            if y == 0.0 {
                let p = flip_probs[t];
                if p == 0.0 {
                    vec![(1.0, 0.0)]
                } else if p == 1.0 {
                    vec![(1.0, 1.0)]
                } else {
                    vec![(1.0 - p, 0.0), (p, 1.0)]
                }
            } else {
                vec![(1.0, 1.0)]
            }
        }
        _ => vec![(1.0, y)],
    }
}

/// Expected marginal missing fraction at each visit for one arm, given
/// per-visit intercepts. States track (probability alive, latest outcome)
/// per subject, exactly marginalizing over binary flip randomness.
fn expected_missing(
    pool: &TrialDataset,
    effect: &EffectProfile,
    arm: Arm,
    intercepts: &[f64],
    slope: f64,
) -> Vec<f64> {
    let k = pool.k();
    let n = pool.n() as f64;
    let mut missing = vec![0.0; k];
    for rec in pool.records() {
        // (alive probability, latest outcome value)
        let mut states: Vec<(f64, f64)> = vec![(1.0, 0.0)];
        for t in 0..k {
            let mut next: Vec<(f64, f64)> = Vec::with_capacity(4);
            let mut survived = 0.0;
            for &(p, y_prev) in &states {
                let eta = if t == 0 {
                    intercepts[t]
                } else {
                    intercepts[t] + slope * y_prev
                };
                let keep = p * (1.0 - inv_logit(eta));
                if keep <= 0.0 {
                    continue;
                }
                survived += keep;
                for &(q, y) in &outcome_mixture(rec, effect, arm, t) {
                    match next.iter_mut().find(|(_, v)| *v == y) {
                        Some(slot) => slot.0 += keep * q,
                        None => next.push((keep * q, y)),
                    }
                }
            }
            missing[t] += 1.0 - survived;
            states = next;
        }
    }
    missing.iter().map(|m| m / n).collect()
}

/// Sequentially bisects each visit's intercept so the expected marginal
/// missingness hits the target.
fn calibrate_arm(
    pool: &TrialDataset,
    effect: &EffectProfile,
    arm: Arm,
    targets: &[f64],
    slope: f64,
) -> Result<Vec<f64>> {
    let k = pool.k();
    const BOUND: f64 = 35.0;
    let mut intercepts = vec![-BOUND; k];
    for t in 0..k {
        let miss_at = |c: f64, intercepts: &mut Vec<f64>| -> f64 {
            intercepts[t] = c;
            expected_missing(pool, effect, arm, intercepts, slope)[t]
        };
        let lo_val = miss_at(-BOUND, &mut intercepts);
        let hi_val = miss_at(BOUND, &mut intercepts);
        let target = targets[t];
        if target < lo_val - 1e-9 || target > hi_val + 1e-9 {
            return Err(Error::CalibrationOutOfRange {
                visit: t + 1,
                target,
                detail: format!("reachable range [{lo_val:.4}, {hi_val:.4}] for {arm:?}"),
            });
        }
        let mut lo = -BOUND;
        let mut hi = BOUND;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if miss_at(mid, &mut intercepts) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        intercepts[t] = 0.5 * (lo + hi);
    }
    Ok(intercepts)
}

const TRIAL_RESAMPLE: u64 = 0x71;

/// One simulated trial: (i) resample `n` subjects with replacement, (ii)
/// fair Bernoulli arm assignment, (iii) effect injection for the treated,
/// (iv) monotone dropout. Deterministic in (pool, inputs, seed).
pub fn generate_trial(
    pool: &TrialDataset,
    n: usize,
    effect: &EffectProfile,
    dropout: &ResolvedDropout,
    seed: u64,
) -> Result<TrialDataset> {
    effect.validate(pool.k(), pool.outcome_kind())?;
    let k = pool.k();
    let pool_n = pool.n();
    let mut rng = stream_rng(seed, &[TRIAL_RESAMPLE]);

    let indices: Vec<usize> = (0..n)
        .map(|_| rng.random_range(0..pool_n as u64) as usize)
        .collect();
    let arms: Vec<Arm> = (0..n)
        .map(|_| if rng.random_bool(0.5) { Arm::Treated } else { Arm::Control })
        .collect();

    let mut records = Vec::with_capacity(n);
    for (row, (&src_idx, &arm)) in indices.iter().zip(&arms).enumerate() {
        let src = &pool.records()[src_idx];
        let mut outcomes: Vec<f64> = (0..k).map(|t| src.outcomes[t].expect("pool is complete")).collect();
        if arm == Arm::Treated {
            match effect {
                EffectProfile::Zero => {}
                EffectProfile::BeneficialContinuous { decrements } => {
                    for t in 0..k {
                        outcomes[t] -= decrements[t];
                    }
                }
                EffectProfile::BeneficialBinary { flip_probs } => {
                    for t in 0..k {
                        if outcomes[t] == 0.0 && rng.random_bool(flip_probs[t]) {
                            outcomes[t] = 1.0;
                        }
                    }
                }
            }
        }

        let mut observed = vec![true; k];
        let mut dropped = false;
        for t in 0..k {
            if dropped {
                observed[t] = false;
                continue;
            }
            let hazard = match dropout {
                ResolvedDropout::None => 0.0,
                ResolvedDropout::Mcar { hazards } => hazards[t],
                ResolvedDropout::Mar { intercepts, slope } => {
                    let c = intercepts[arm.index()][t];
                    if t == 0 {
                        inv_logit(c)
                    } else {
                        inv_logit(c + slope * outcomes[t - 1])
                    }
                }
            };
            if hazard > 0.0 && rng.random_bool(hazard) {
                observed[t] = false;
                dropped = true;
            }
        }

        records.push(ParticipantRecord {
            subject_id: format!("s{:05}", row + 1),
            baseline: src.baseline.clone(),
            arm,
            outcomes: (0..k)
                .map(|t| if observed[t] { Some(outcomes[t]) } else { None })
                .collect(),
        });
    }

    TrialDataset::new(
        records,
        pool.outcome_kind(),
        pool.visit_labels().to_vec(),
        pool.schema().clone(),
    )
}

/// Exact expected treatment effect at the final visit under the generator
/// with no dropout, computed from the pool distribution.
pub fn true_delta_analytic(pool: &TrialDataset, effect: &EffectProfile) -> Result<f64> {
    effect.validate(pool.k(), pool.outcome_kind())?;
    let k = pool.k();
    match effect {
        EffectProfile::Zero => Ok(0.0),
        EffectProfile::BeneficialContinuous { decrements } => Ok(-decrements[k - 1]),
        EffectProfile::BeneficialBinary { flip_probs } => {
            let non_responders = pool
                .records()
                .iter()
                .filter(|r| r.outcomes[k - 1].expect("pool is complete") == 0.0)
                .count() as f64;
            Ok(flip_probs[k - 1] * non_responders / pool.n() as f64)
        }
    }
}

const ORACLE_STREAM: u64 = 0x0AC1;

/// Monte Carlo check of the same quantity: counterfactual final-visit
/// outcomes under both arms for `n_mc` resampled subjects. Returns the
/// estimate and its Monte Carlo standard error.
pub fn true_delta_oracle(
    pool: &TrialDataset,
    effect: &EffectProfile,
    n_mc: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    effect.validate(pool.k(), pool.outcome_kind())?;
    if n_mc < 2 {
        return Err(Error::InvalidInput("oracle needs n_mc >= 2".into()));
    }
    let k = pool.k();
    let mut rng = stream_rng(seed, &[ORACLE_STREAM]);
    let mut diffs = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let idx = rng.random_range(0..pool.n() as u64) as usize;
        let y0 = pool.records()[idx].outcomes[k - 1].expect("pool is complete");
        let y1 = match effect {
            EffectProfile::Zero => y0,
            EffectProfile::BeneficialContinuous { decrements } => y0 - decrements[k - 1],
            EffectProfile::BeneficialBinary { flip_probs } => {
                if y0 == 0.0 && rng.random_bool(flip_probs[k - 1]) {
                    1.0
                } else {
                    y0
                }
            }
        };
        diffs.push(y1 - y0);
    }
    let mean = diffs.iter().sum::<f64>() / n_mc as f64;
    let var = crate::stats::sample_variance(&diffs);
    Ok((mean, (var / n_mc as f64).sqrt()))
}
