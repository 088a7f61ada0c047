//! Integration checks of the trial generator, truth oracles, and the
//! scenario runner.

use longtrial::data::OutcomeKind;
use longtrial::estimators::{EstimatorSpec, MmrmOptions, TmleOptions};
use longtrial::exec::ExecPolicy;
use longtrial::sim::*;

fn default_source(seed: u64) -> SourcePopulation {
    synthesize_source(&SourceParams::default(), seed).unwrap()
}

#[test]
fn no_dropout_zero_effect_is_a_resample_with_fresh_arms() {
    let src = default_source(1);
    let pool = src.dataset(OutcomeKind::Continuous);
    let trial = generate_trial(pool, 200, &EffectProfile::Zero, &ResolvedDropout::None, 7).unwrap();
    assert_eq!(trial.n(), 200);
    assert!(trial.dropout_summary().overall.iter().all(|&f| f == 0.0));
    // Every generated subject's trajectory exists somewhere in the pool.
    for rec in trial.records() {
        let found = pool.records().iter().any(|p| {
            p.outcomes == rec.outcomes && p.baseline == rec.baseline
        });
        assert!(found, "subject not traceable to the pool");
    }
    // Both arms occur.
    assert!(trial.records().iter().any(|r| r.arm.index() == 0));
    assert!(trial.records().iter().any(|r| r.arm.index() == 1));
}

#[test]
fn mcar_marginal_missingness_hits_targets() {
    let src = default_source(2);
    let pool = src.dataset(OutcomeKind::Continuous);
    let targets = [0.05, 0.10, 0.15];
    let resolved = resolve_dropout(
        pool,
        &EffectProfile::Zero,
        &DropoutMechanism::Mcar {
            target_missing: targets.to_vec(),
        },
    )
    .unwrap();
    let reps = 2000;
    let n = 380;
    let mut missing = [0usize; 3];
    for r in 0..reps {
        let trial = generate_trial(pool, n, &EffectProfile::Zero, &resolved, 100 + r).unwrap();
        for rec in trial.records() {
            for (t, slot) in missing.iter_mut().enumerate() {
                if !rec.observed(t) {
                    *slot += 1;
                }
            }
        }
    }
    let total = (reps as usize * n) as f64;
    for (t, count) in missing.iter().enumerate() {
        let frac = *count as f64 / total;
        let se = (targets[t] * (1.0 - targets[t]) / total).sqrt();
        assert!(
            (frac - targets[t]).abs() < 3.0 * se,
            "visit {t}: {frac:.5} vs {} (3se = {:.5})",
            targets[t],
            3.0 * se
        );
    }
}

#[test]
fn mar_calibration_hits_per_arm_targets_with_effect() {
    let src = default_source(3);
    let pool = src.dataset(OutcomeKind::Continuous);
    let effect = EffectProfile::BeneficialContinuous {
        decrements: vec![1.0, 1.5, 2.0],
    };
    let control_targets = vec![0.10, 0.15, 0.20];
    let treated_targets = vec![0.05, 0.10, 0.15];
    let resolved = resolve_dropout(
        pool,
        &effect,
        &DropoutMechanism::Mar(MarSpec {
            control_targets: control_targets.clone(),
            treated_targets: treated_targets.clone(),
            slope: 0.5,
            intercepts: None,
        }),
    )
    .unwrap();

    let reps = 3000;
    let n = 380;
    let mut missing = [[0usize; 3]; 2];
    let mut count = [0usize; 2];
    for r in 0..reps {
        let trial = generate_trial(pool, n, &effect, &resolved, 5000 + r).unwrap();
        for rec in trial.records() {
            count[rec.arm.index()] += 1;
            for (t, slot) in missing[rec.arm.index()].iter_mut().enumerate() {
                if !rec.observed(t) {
                    *slot += 1;
                }
            }
        }
    }
    for (arm, targets) in [(0usize, &control_targets), (1, &treated_targets)] {
        for t in 0..3 {
            let frac = missing[arm][t] as f64 / count[arm] as f64;
            let se = (targets[t] * (1.0 - targets[t]) / count[arm] as f64).sqrt();
            assert!(
                (frac - targets[t]).abs() < 3.0 * se,
                "arm {arm} visit {t}: {frac:.5} vs {}",
                targets[t]
            );
        }
    }
}

#[test]
fn true_delta_continuous_is_exactly_the_final_decrement() {
    let src = default_source(4);
    let pool = src.dataset(OutcomeKind::Continuous);
    let effect = EffectProfile::BeneficialContinuous {
        decrements: vec![1.0, 1.5, 2.0],
    };
    assert_eq!(true_delta_analytic(pool, &effect).unwrap(), -2.0);
    let (mc, se) = true_delta_oracle(pool, &effect, 100_000, 11).unwrap();
    assert!((mc + 2.0).abs() <= 3.0 * se.max(1e-12), "{mc} vs -2.0");
}

#[test]
fn true_delta_zero_effect_is_zero() {
    let src = default_source(5);
    let pool = src.dataset(OutcomeKind::Binary);
    assert_eq!(true_delta_analytic(pool, &EffectProfile::Zero).unwrap(), 0.0);
    let (mc, _) = true_delta_oracle(pool, &EffectProfile::Zero, 10_000, 3).unwrap();
    assert_eq!(mc, 0.0);
}

#[test]
fn true_delta_binary_matches_flip_identity() {
    // The final-visit risk difference is flip_prob * P(non-responder in the
    // pool): an analytic identity of the flip construction, cross-checked by
    // monte carlo.
    let src = default_source(6);
    let pool = src.dataset(OutcomeKind::Binary);
    let effect = EffectProfile::BeneficialBinary {
        flip_probs: vec![0.2, 0.25, 0.3],
    };
    let k = pool.k();
    let non_resp = pool
        .records()
        .iter()
        .filter(|r| r.outcomes[k - 1].unwrap() == 0.0)
        .count() as f64
        / pool.n() as f64;
    let expected = 0.3 * non_resp;
    let analytic = true_delta_analytic(pool, &effect).unwrap();
    assert!((analytic - expected).abs() < 1e-15);
    let (mc, se) = true_delta_oracle(pool, &effect, 200_000, 12).unwrap();
    assert!((mc - expected).abs() < 3.0 * se, "{mc} vs {expected}");
}

#[test]
fn scenario_metrics_satisfy_mse_identity_and_determinism() {
    let src = default_source(7);
    let combo = ScenarioCombo {
        outcome: OutcomeKind::Continuous,
        effect: EffectProfile::Zero,
        dropout: DropoutMechanism::Mcar {
            target_missing: vec![0.05, 0.10, 0.15],
        },
    };
    let estimators = vec![
        EstimatorSpec::Unadjusted,
        EstimatorSpec::Tmle(TmleOptions::default()),
    ];
    let opts = ScenarioOptions {
        n: 120,
        replicates: 60,
        boot_b: 0,
        seed: 99,
        exec: ExecPolicy::Auto,
    };
    let metrics = run_scenario(&src, &combo, &estimators, &opts).unwrap();
    for est in &metrics.estimators {
        let identity = est.variance + est.bias * est.bias;
        assert!(
            (est.mse - identity).abs() < 1e-12,
            "{}: mse {} vs var+bias^2 {}",
            est.estimator,
            est.mse,
            identity
        );
    }
    assert_eq!(metrics.estimators[0].relative_mse, Some(1.0));

    let sequential = run_scenario(
        &src,
        &combo,
        &estimators,
        &ScenarioOptions {
            exec: ExecPolicy::Sequential,
            ..opts
        },
    )
    .unwrap();
    for (a, b) in metrics.estimators.iter().zip(&sequential.estimators) {
        assert_eq!(a.bias.to_bits(), b.bias.to_bits());
        assert_eq!(a.mse.to_bits(), b.mse.to_bits());
        assert_eq!(a.variance.to_bits(), b.variance.to_bits());
    }
}

#[test]
fn zero_effect_complete_data_arms_are_exchangeable() {
    // Two-sample Kolmogorov-Smirnov smoke test on a pooled mega-sample of
    // final-visit outcomes by arm.
    let src = default_source(8);
    let pool = src.dataset(OutcomeKind::Continuous);
    let mut treated = Vec::new();
    let mut control = Vec::new();
    for r in 0..50 {
        let trial = generate_trial(pool, 380, &EffectProfile::Zero, &ResolvedDropout::None, r).unwrap();
        for rec in trial.records() {
            let y = rec.outcomes[2].unwrap();
            if rec.arm.index() == 1 {
                treated.push(y);
            } else {
                control.push(y);
            }
        }
    }
    treated.sort_by(|a, b| a.partial_cmp(b).unwrap());
    control.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // KS statistic by merge walk.
    let (n1, n2) = (treated.len() as f64, control.len() as f64);
    let mut i = 0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    while i < treated.len() && j < control.len() {
        if treated[i] <= control[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    let lambda = d * (n1 * n2 / (n1 + n2)).sqrt();
    // Asymptotic Kolmogorov tail probability.
    let p = {
        let mut acc = 0.0;
        for k in 1..=100 {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            acc += sign * (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        }
        2.0 * acc
    };
    assert!(p > 0.001, "KS p-value {p:.5} (D = {d:.5})");
}

#[test]
fn run_scenario_zero_effect_no_dropout_is_unbiased_for_every_estimator() {
    let src = default_source(9);
    for outcome in [OutcomeKind::Continuous, OutcomeKind::Binary] {
        let combo = ScenarioCombo {
            outcome,
            effect: EffectProfile::Zero,
            dropout: DropoutMechanism::None,
        };
        let estimators = EstimatorSpec::default_set(outcome);
        let metrics = run_scenario(
            &src,
            &combo,
            &estimators,
            &ScenarioOptions {
                n: 150,
                replicates: 1000,
                boot_b: 0,
                seed: 13,
                exec: ExecPolicy::Auto,
            },
        )
        .unwrap();
        for est in &metrics.estimators {
            assert!(
                est.bias.abs() < 3.0 * est.bias_mc_se,
                "{} {}: bias {:.5} exceeds 3 x {:.5}",
                combo.label(),
                est.estimator,
                est.bias,
                est.bias_mc_se
            );
        }
    }
}
