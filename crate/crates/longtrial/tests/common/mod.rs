#![allow(dead_code)]

//! Shared builders for integration tests.

use longtrial::data::{
    Arm, BaselineValue, CovariateSchema, OutcomeKind, ParticipantRecord, TrialDataset,
};
use rand::Rng;

/// Complete continuous dataset with no baseline covariates: K visits of
/// correlated noise plus an arm shift at every visit.
pub fn plain_continuous(n: usize, k: usize, shift: f64, seed: u64) -> TrialDataset {
    let mut rng = longtrial::rng::stream_rng(seed, &[0xDA7A]);
    let records = (0..n)
        .map(|i| {
            let arm = if rng.random_bool(0.5) { Arm::Treated } else { Arm::Control };
            let subject_effect: f64 = rng.random_range(-1.0..1.0);
            let outcomes = (0..k)
                .map(|t| {
                    let noise: f64 = rng.random_range(-1.0..1.0);
                    Some(0.3 * t as f64 + subject_effect + noise + arm.indicator() * shift)
                })
                .collect();
            ParticipantRecord {
                subject_id: format!("s{i}"),
                baseline: vec![],
                arm,
                outcomes,
            }
        })
        .collect();
    TrialDataset::new(
        records,
        OutcomeKind::Continuous,
        (1..=k).map(|t| format!("v{t}")).collect(),
        CovariateSchema::empty(),
    )
    .unwrap()
}

/// Complete binary dataset with no covariates.
pub fn plain_binary(n: usize, k: usize, treated_rate: f64, control_rate: f64, seed: u64) -> TrialDataset {
    let mut rng = longtrial::rng::stream_rng(seed, &[0xB1]);
    let records = (0..n)
        .map(|i| {
            let arm = if i % 2 == 0 { Arm::Control } else { Arm::Treated };
            let p = if arm == Arm::Treated { treated_rate } else { control_rate };
            let outcomes = (0..k).map(|_| Some(if rng.random_bool(p) { 1.0 } else { 0.0 })).collect();
            ParticipantRecord {
                subject_id: format!("s{i}"),
                baseline: vec![],
                arm,
                outcomes,
            }
        })
        .collect();
    TrialDataset::new(
        records,
        OutcomeKind::Binary,
        (1..=k).map(|t| format!("v{t}")).collect(),
        CovariateSchema::empty(),
    )
    .unwrap()
}

/// Complete single-visit continuous dataset with one predictive covariate.
pub fn ancova_dataset(n: usize, seed: u64) -> TrialDataset {
    let mut rng = longtrial::rng::stream_rng(seed, &[0xA2C]);
    let records = (0..n)
        .map(|i| {
            let arm = if i % 2 == 0 { Arm::Control } else { Arm::Treated };
            let x: f64 = rng.random_range(-2.0..2.0);
            let noise: f64 = rng.random_range(-1.0..1.0);
            let y = 1.0 + 0.8 * x - 0.6 * arm.indicator() + noise;
            ParticipantRecord {
                subject_id: format!("s{i}"),
                baseline: vec![BaselineValue::Numeric(x)],
                arm,
                outcomes: vec![Some(y)],
            }
        })
        .collect();
    TrialDataset::new(
        records,
        OutcomeKind::Continuous,
        vec!["v1".into()],
        CovariateSchema::continuous(&["x"]),
    )
    .unwrap()
}

/// Rebuilds a dataset with outcomes transformed by `f` (continuous only).
pub fn map_outcomes(ds: &TrialDataset, f: impl Fn(f64) -> f64) -> TrialDataset {
    let records = ds
        .records()
        .iter()
        .map(|r| ParticipantRecord {
            subject_id: r.subject_id.clone(),
            baseline: r.baseline.clone(),
            arm: r.arm,
            outcomes: r.outcomes.iter().map(|o| o.map(&f)).collect(),
        })
        .collect();
    TrialDataset::new(
        records,
        ds.outcome_kind(),
        ds.visit_labels().to_vec(),
        ds.schema().clone(),
    )
    .unwrap()
}

/// Rebuilds a dataset with the arm labels swapped.
pub fn swap_arms(ds: &TrialDataset) -> TrialDataset {
    let records = ds
        .records()
        .iter()
        .map(|r| ParticipantRecord {
            subject_id: r.subject_id.clone(),
            baseline: r.baseline.clone(),
            arm: if r.arm == Arm::Treated { Arm::Control } else { Arm::Treated },
            outcomes: r.outcomes.clone(),
        })
        .collect();
    TrialDataset::new(
        records,
        ds.outcome_kind(),
        ds.visit_labels().to_vec(),
        ds.schema().clone(),
    )
    .unwrap()
}

/// Rebuilds a dataset with records in reversed order.
pub fn reverse_subjects(ds: &TrialDataset) -> TrialDataset {
    let mut records: Vec<ParticipantRecord> = ds.records().to_vec();
    records.reverse();
    TrialDataset::new(
        records,
        ds.outcome_kind(),
        ds.visit_labels().to_vec(),
        ds.schema().clone(),
    )
    .unwrap()
}
