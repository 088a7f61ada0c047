//! Acceptance suite: one test per release criterion, each printing a
//! `[PASS]`/`[FAIL]` line (visible with `--nocapture`).
//!
//! Criteria 4 and 5 share one set of Monte Carlo runs over the bundled
//! `scenarios/diabetes_k3.cfg` grid at 1000 replicates; the coverage
//! criterion is the slow nightly test at the bottom (`--ignored`).

use std::path::PathBuf;
use std::process::Command;
use std::sync::OnceLock;

use longtrial::data::{
    Arm, BaselineValue, CovariateSchema, OutcomeKind, ParticipantRecord, TrialDataset,
};
use longtrial::estimators::*;
use longtrial::exec::ExecPolicy;
use longtrial::inference::{bca_interval, bootstrap, BootstrapOptions};
use longtrial::numerics::*;
use longtrial::sim::*;
use longtrial::stats::{inv_logit, logit, norm_cdf, norm_quantile};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Bands pinned from the reference run of the bundled generator:
/// `longtrial simulate --scenario scenarios/diabetes_k3.cfg --replicates 1000`
/// (source seed 7101, run seed 20260808). They are properties of this
/// synthetic population, not external targets. Observed ranges at the pin:
/// mmrm 1.30-1.38, mmrm_star 1.77-1.89, tmle continuous 1.81-1.97,
/// glmm 1.70-2.47, tmle binary 1.72-2.32, interaction gain 1.32-1.39.
mod bands {
    /// Relative MSE vs unadjusted, by estimator, across the grid.
    pub const MMRM: (f64, f64) = (1.20, 1.55);
    pub const MMRM_STAR: (f64, f64) = (1.55, 2.15);
    pub const TMLE_CONTINUOUS: (f64, f64) = (1.55, 2.20);
    pub const GLMM: (f64, f64) = (1.45, 2.75);
    pub const TMLE_BINARY: (f64, f64) = (1.45, 2.60);
    /// Efficiency gain of the interaction model over the pooled one.
    pub const STAR_OVER_PLAIN: (f64, f64) = (1.22, 1.60);
    /// Zero-effect history-dependent dropout is the headline scenario; these
    /// are the wider expectations it must satisfy.
    pub const DEFAULT_TMLE_CONTINUOUS: (f64, f64) = (1.50, 2.80);
    pub const DEFAULT_GLMM: (f64, f64) = (1.50, 2.60);
    pub const DEFAULT_STAR_GAIN: (f64, f64) = (1.30, 1.70);
}

fn pass(criterion: &str, detail: String) {
    println!("[PASS] {criterion}: {detail}");
}

fn scenario_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/diabetes_k3.cfg")
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_longtrial"))
}

// ---------------------------------------------------------------------------
// criterion 1
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_relative_mse_arithmetic() {
    let reference = [
        (0.0126, 0.0085, 1.48),
        (0.0126, 0.0059, 2.14),
        (0.0126, 0.0058, 2.17),
    ];
    for (mse_unadj, mse_est, expected) in reference {
        let ratio: f64 = mse_unadj / mse_est;
        let rounded = (ratio * 100.0).round() / 100.0;
        assert_eq!(rounded, expected, "{mse_unadj}/{mse_est}");
    }
    pass(
        "criterion 1",
        "relative-MSE arithmetic yields 1.48 / 2.14 / 2.17 at two decimals".into(),
    );
}

// ---------------------------------------------------------------------------
// criterion 2
// ---------------------------------------------------------------------------

fn no_covariate_dataset(kind: OutcomeKind, k: usize, seed: u64) -> TrialDataset {
    let mut rng = longtrial::rng::stream_rng(seed, &[0xACC]);
    let records = (0..60)
        .map(|i| {
            let arm = if i % 2 == 0 { Arm::Control } else { Arm::Treated };
            let outcomes = (0..k)
                .map(|_| {
                    Some(match kind {
                        OutcomeKind::Continuous => {
                            rng.random_range(-1.0..1.0) + 0.4 * arm.indicator()
                        }
                        OutcomeKind::Binary => {
                            let p = 0.35 + 0.2 * arm.indicator();
                            if rng.random_bool(p) {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    })
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
        kind,
        (1..=k).map(|t| format!("v{t}")).collect(),
        CovariateSchema::empty(),
    )
    .unwrap()
}

fn covariate_dataset_k1(seed: u64) -> TrialDataset {
    let mut rng = longtrial::rng::stream_rng(seed, &[0xACD]);
    let records = (0..50)
        .map(|i| {
            let arm = if i % 2 == 0 { Arm::Control } else { Arm::Treated };
            let x: f64 = rng.random_range(-1.5..1.5);
            let y = 0.7 * x - 0.5 * arm.indicator() + rng.random_range(-1.0..1.0);
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

#[test]
fn criterion_2_oracle_equivalences() {
    // Saturated repeated-measures model on complete data = completer means.
    let ds = no_covariate_dataset(OutcomeKind::Continuous, 3, 1);
    let mmrm_delta = mmrm(&ds, &MmrmOptions::default()).unwrap().delta;
    let unadj_delta = unadjusted(&ds).unwrap().delta;
    assert!((mmrm_delta - unadj_delta).abs() < 1e-8, "mmrm vs unadjusted");

    // Interaction model collapses to the pooled model at a single visit.
    let ds1 = covariate_dataset_k1(2);
    let star = mmrm_star(&ds1, &MmrmOptions::default()).unwrap().delta;
    let plain = mmrm(&ds1, &MmrmOptions::default()).unwrap().delta;
    assert!((star - plain).abs() < 1e-8, "mmrm_star vs mmrm at K=1");

    // Sequential-regression estimator with intercept-only working models and
    // no dropout = completer means.
    let tm = tmle(&ds, &TmleOptions::default()).unwrap().delta;
    assert!((tm - unadj_delta).abs() < 1e-8, "tmle vs unadjusted");

    // Standardized marginal logistic fit on complete no-covariate binary
    // data = rate difference.
    let bds = no_covariate_dataset(OutcomeKind::Binary, 2, 3);
    let glmm_delta = glmm_standardized(&bds, &GlmmOptions::default()).unwrap().delta;
    let rate_diff = unadjusted(&bds).unwrap().delta;
    assert!((glmm_delta - rate_diff).abs() < 1e-8, "glmm vs rate difference");
    let tmb = tmle(&bds, &TmleOptions::default()).unwrap().delta;
    assert!((tmb - rate_diff).abs() < 1e-8, "tmle binary vs rate difference");

    // GLS at the identity covariance = OLS.
    let mut rng = longtrial::rng::stream_rng(9, &[4]);
    let blocks: Vec<SubjectBlock> = (0..25)
        .map(|_| {
            let x: f64 = rng.random_range(-1.0..1.0);
            SubjectBlock {
                design: DMatrix::from_row_slice(2, 2, &[1.0, x, 1.0, x + 1.0]),
                y: DVector::from_vec(vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]),
                visits: vec![0, 1],
            }
        })
        .collect();
    let gls = gls_profile_beta(&blocks, &DMatrix::identity(2, 2)).unwrap();
    let mut xtx = DMatrix::<f64>::zeros(2, 2);
    let mut xty = DVector::<f64>::zeros(2);
    for b in &blocks {
        xtx += b.design.transpose() * &b.design;
        xty += b.design.transpose() * &b.y;
    }
    let ols = xtx.cholesky().unwrap().solve(&xty);
    assert!((gls - ols).amax() < 1e-8, "gls vs ols");

    pass(
        "criterion 2",
        "five oracle equivalences hold within 1e-8".into(),
    );
}

// ---------------------------------------------------------------------------
// criterion 3
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_numerical_kernels() {
    // (a) Covariance-fit gradient vs independent central differencing of the
    // objective at 10 random points, within 1e-4 relative.
    let mut rng = longtrial::rng::stream_rng(42, &[0x3a]);
    let blocks: Vec<SubjectBlock> = (0..50)
        .map(|_| {
            let x: f64 = rng.random_range(-1.0..1.0);
            let e1: f64 = rng.random_range(-1.0..1.0);
            let e2: f64 = rng.random_range(-1.0..1.0);
            let e3: f64 = rng.random_range(-1.0..1.0);
            SubjectBlock {
                design: DMatrix::from_fn(3, 3, |t, c| match c {
                    0 => 1.0,
                    1 => t as f64,
                    _ => x,
                }),
                y: DVector::from_vec(vec![
                    0.4 * x + e1,
                    0.2 + 0.4 * x + 0.5 * e1 + 0.7 * e2,
                    0.4 + 0.4 * x + 0.3 * e1 + 0.4 * e2 + 0.8 * e3,
                ]),
                visits: vec![0, 1, 2],
            }
        })
        .collect();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let theta = DVector::from_fn(6, |_, _| rng.random_range(-0.7..0.7));
        let params = CovarianceParams::new(CovStructure::Unstructured, 3, theta).unwrap();
        let grad = objective_gradient(&blocks, &params, FitCriterion::Reml).unwrap();
        for j in 0..6 {
            let h = 1e-5 * (1.0 + params.theta[j].abs());
            let mut tp = params.theta.clone();
            let mut tm = params.theta.clone();
            tp[j] += h;
            tm[j] -= h;
            let fp = neg2_objective(
                &blocks,
                &CovarianceParams::new(CovStructure::Unstructured, 3, tp).unwrap(),
                FitCriterion::Reml,
            )
            .unwrap();
            let fm = neg2_objective(
                &blocks,
                &CovarianceParams::new(CovStructure::Unstructured, 3, tm).unwrap(),
                FitCriterion::Reml,
            )
            .unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let rel = ((grad[j] - fd) / fd.abs().max(1e-3)).abs();
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-4, "gradient check worst relative error {worst:e}");

    // (b) Intercept-only logistic fit vs a golden-section maximizer of the
    // same quasi-likelihood, within 1e-3.
    let y = DVector::from_vec(vec![1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
    let x = DMatrix::from_element(10, 1, 1.0);
    let w = DVector::from_element(10, 1.0);
    let fit = irls_logistic(&x, &y, &w).unwrap();
    let loglik = |b: f64| -> f64 {
        y.iter()
            .map(|&yi| {
                let mu = inv_logit(b).clamp(1e-12, 1.0 - 1e-12);
                yi * mu.ln() + (1.0 - yi) * (1.0 - mu).ln()
            })
            .sum()
    };
    let golden = golden_section_max(&loglik, -5.0, 5.0);
    assert!((fit.beta[0] - golden).abs() < 1e-3, "{} vs {golden}", fit.beta[0]);
    assert!((fit.beta[0] - logit(0.7)).abs() < 1e-6);

    // (c) Two-covariate fit vs an iteratively refined grid-search maximizer
    // on a 20-point dataset, within 1e-3.
    let mut rng2 = longtrial::rng::stream_rng(43, &[0x3b]);
    let x2 = DMatrix::from_fn(20, 2, |_, _| rng2.random_range(-1.5..1.5));
    let y2 = DVector::from_fn(20, |i, _| {
        let eta = 0.8 * x2[(i, 0)] - 0.5 * x2[(i, 1)];
        if rng2.random_bool(inv_logit(eta)) {
            1.0
        } else {
            0.0
        }
    });
    let w2 = DVector::from_element(20, 1.0);
    let fit2 = irls_logistic(&x2, &y2, &w2).unwrap();
    let ll2 = |b: (f64, f64)| -> f64 {
        (0..20)
            .map(|i| {
                let mu = inv_logit(b.0 * x2[(i, 0)] + b.1 * x2[(i, 1)]).clamp(1e-12, 1.0 - 1e-12);
                y2[i] * mu.ln() + (1.0 - y2[i]) * (1.0 - mu).ln()
            })
            .sum()
    };
    let mut center = (0.0, 0.0);
    let mut span = 4.0;
    for _ in 0..12 {
        let mut best = (center, ll2(center));
        for a in -20..=20 {
            for b in -20..=20 {
                let cand = (
                    center.0 + span * a as f64 / 20.0,
                    center.1 + span * b as f64 / 20.0,
                );
                let v = ll2(cand);
                if v > best.1 {
                    best = (cand, v);
                }
            }
        }
        center = best.0;
        span /= 8.0;
    }
    assert!(
        (fit2.beta[0] - center.0).abs() < 1e-3 && (fit2.beta[1] - center.1).abs() < 1e-3,
        "({}, {}) vs grid ({}, {})",
        fit2.beta[0],
        fit2.beta[1],
        center.0,
        center.1
    );

    // (d) BCa endpoints vs a step-by-step evaluation of the formula on a
    // 20-value replicate set, within 1e-10.
    let replicates: Vec<f64> = (0..20).map(|i| 0.2 + 0.07 * i as f64 + 0.013 * (i * i) as f64).collect();
    let point = 0.9;
    let jack: Vec<f64> = (0..12).map(|i| 0.8 + 0.02 * i as f64 + 0.001 * (i * i) as f64).collect();
    let interval = bca_interval(&replicates, point, &jack, 0.95).unwrap();
    let below = replicates.iter().filter(|&&v| v < point).count() as f64;
    let ties = replicates.iter().filter(|&&v| v == point).count() as f64;
    let z0 = norm_quantile((below + 0.5 * ties) / 20.0);
    let jm = jack.iter().sum::<f64>() / 12.0;
    let d2: f64 = jack.iter().map(|v| (jm - v).powi(2)).sum();
    let d3: f64 = jack.iter().map(|v| (jm - v).powi(3)).sum();
    let a = d3 / (6.0 * d2.powf(1.5));
    let adjust = |z: f64| norm_cdf(z0 + (z0 + z) / (1.0 - a * (z0 + z)));
    let mut sorted = replicates.clone();
    sorted.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let pick = |q: f64| sorted[((q * 20.0).ceil() as usize).clamp(1, 20) - 1];
    let lo = pick(adjust(norm_quantile(0.025)));
    let hi = pick(adjust(norm_quantile(0.975)));
    assert!((interval.lower - lo).abs() < 1e-10);
    assert!((interval.upper - hi).abs() < 1e-10);

    pass(
        "criterion 3",
        format!("gradient <=1e-4 (worst {worst:.2e}), logistic vs golden/grid <=1e-3, BCa vs hand formula <=1e-10"),
    );
}

fn golden_section_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    for _ in 0..200 {
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - phi * (b - a);
        d = a + phi * (b - a);
    }
    0.5 * (a + b)
}

// ---------------------------------------------------------------------------
// criteria 4 and 5 share one set of Monte Carlo runs
// ---------------------------------------------------------------------------

struct GridRuns {
    continuous: Vec<ScenarioMetrics>,
    binary: Vec<ScenarioMetrics>,
}

static GRID: OnceLock<GridRuns> = OnceLock::new();

fn grid_runs() -> &'static GridRuns {
    GRID.get_or_init(|| {
        let config = load_scenario(scenario_path()).expect("bundled scenario parses");
        let src = config.source_population().expect("source builds");
        let mut continuous = Vec::new();
        let mut binary = Vec::new();
        for combo in config.combos().expect("grid expands") {
            let estimators = EstimatorSpec::default_set(combo.outcome);
            let metrics = run_scenario(
                &src,
                &combo,
                &estimators,
                &ScenarioOptions {
                    n: config.trial.n,
                    replicates: 1000,
                    boot_b: 0,
                    seed: config.run.seed,
                    exec: ExecPolicy::Auto,
                },
            )
            .expect("scenario runs");
            match combo.outcome {
                OutcomeKind::Continuous => continuous.push(metrics),
                OutcomeKind::Binary => binary.push(metrics),
            }
        }
        GridRuns { continuous, binary }
    })
}

fn summary<'a>(m: &'a ScenarioMetrics, estimator: &str) -> &'a EstimatorSummary {
    m.estimators
        .iter()
        .find(|e| e.estimator == estimator)
        .unwrap_or_else(|| panic!("{estimator} missing from {}", m.label))
}

#[test]
fn criterion_4_simulation_bias() {
    let runs = grid_runs();
    let mut strict = 0;
    let mut magnitude_only = 0;
    for m in &runs.continuous {
        for est in ["mmrm_star", "tmle"] {
            let s = summary(m, est);
            assert!(
                s.bias.abs() < 3.0 * s.bias_mc_se,
                "{} {est}: bias {:.5} vs 3 x MC SE {:.5}",
                m.label,
                s.bias,
                3.0 * s.bias_mc_se
            );
            strict += 1;
        }
    }
    for m in &runs.binary {
        for est in ["glmm", "tmle"] {
            let s = summary(m, est);
            // The responder-flip effect takes the marginal logistic model
            // off its own functional form (p -> p + f(1-p) is not a logit
            // shift), so the standardized fit carries a small structural
            // bias under a beneficial effect. Hold it to a fixed magnitude
            // bound there, and to strict unbiasedness where its working
            // model is correctly specified.
            if est == "glmm" && m.effect == "beneficial" {
                assert!(
                    s.bias.abs() <= 0.011,
                    "{} {est}: bias {:.5} above 0.011",
                    m.label,
                    s.bias
                );
                magnitude_only += 1;
                continue;
            }
            assert!(
                s.bias.abs() < 3.0 * s.bias_mc_se,
                "{} {est}: bias {:.5} vs 3 x MC SE {:.5}",
                m.label,
                s.bias,
                3.0 * s.bias_mc_se
            );
            strict += 1;
        }
    }
    pass(
        "criterion 4",
        format!(
            "{strict} estimator-scenario biases within 3 Monte Carlo SEs at 1000 replicates ({magnitude_only} structurally biased marginal-logistic cells held to the 0.011 reference magnitude)"
        ),
    );
}

#[test]
fn criterion_5_efficiency_ordering() {
    let runs = grid_runs();
    // Every adjusted estimator beats the unadjusted one by more than 20%.
    for m in runs.continuous.iter().chain(&runs.binary) {
        for s in &m.estimators {
            if s.estimator == "unadjusted" {
                assert_eq!(s.relative_mse, Some(1.0));
                continue;
            }
            let rel = s.relative_mse.expect("relative mse present");
            assert!(rel > 1.2, "{} {}: relative MSE {rel:.3} <= 1.2", m.label, s.estimator);
        }
    }
    // The interaction model dominates the pooled model in every continuous
    // scenario, with the gain inside the pinned band.
    for m in &runs.continuous {
        let star = summary(m, "mmrm_star").relative_mse.unwrap();
        let plain = summary(m, "mmrm").relative_mse.unwrap();
        assert!(star >= plain, "{}: {star:.3} < {plain:.3}", m.label);
        let gain = star / plain;
        assert!(
            gain >= bands::STAR_OVER_PLAIN.0 && gain <= bands::STAR_OVER_PLAIN.1,
            "{}: interaction gain {gain:.3} outside {:?}",
            m.label,
            bands::STAR_OVER_PLAIN
        );
        for (est, band) in [
            ("mmrm", bands::MMRM),
            ("mmrm_star", bands::MMRM_STAR),
            ("tmle", bands::TMLE_CONTINUOUS),
        ] {
            let rel = summary(m, est).relative_mse.unwrap();
            assert!(
                rel >= band.0 && rel <= band.1,
                "{} {est}: relative MSE {rel:.3} outside pinned band {band:?}",
                m.label
            );
        }
    }
    // Headline scenario (zero effect, history-dependent dropout): the wider
    // reference expectations hold.
    let default_cont = runs
        .continuous
        .iter()
        .find(|m| m.effect == "zero" && m.dropout == "mar")
        .expect("default continuous scenario present");
    let tmle_rel = summary(default_cont, "tmle").relative_mse.unwrap();
    assert!(
        tmle_rel >= bands::DEFAULT_TMLE_CONTINUOUS.0 && tmle_rel <= bands::DEFAULT_TMLE_CONTINUOUS.1,
        "default continuous tmle {tmle_rel:.3}"
    );
    let gain = summary(default_cont, "mmrm_star").relative_mse.unwrap()
        / summary(default_cont, "mmrm").relative_mse.unwrap();
    assert!(
        gain >= bands::DEFAULT_STAR_GAIN.0 && gain <= bands::DEFAULT_STAR_GAIN.1,
        "default continuous interaction gain {gain:.3}"
    );
    let default_bin = runs
        .binary
        .iter()
        .find(|m| m.effect == "zero" && m.dropout == "mar")
        .expect("default binary scenario present");
    let glmm_rel = summary(default_bin, "glmm").relative_mse.unwrap();
    assert!(
        glmm_rel >= bands::DEFAULT_GLMM.0 && glmm_rel <= bands::DEFAULT_GLMM.1,
        "default binary glmm {glmm_rel:.3}"
    );

    // The sequential-regression estimator is never materially worse than the
    // marginal logistic one on binary outcomes.
    for m in &runs.binary {
        let tmle_mse = summary(m, "tmle").mse;
        let glmm_mse = summary(m, "glmm").mse;
        assert!(
            tmle_mse <= 1.1 * glmm_mse,
            "{}: tmle MSE {tmle_mse:.6} > 1.1 x glmm {glmm_mse:.6}",
            m.label
        );
        for (est, band) in [("glmm", bands::GLMM), ("tmle", bands::TMLE_BINARY)] {
            let rel = summary(m, est).relative_mse.unwrap();
            assert!(
                rel >= band.0 && rel <= band.1,
                "{} {est}: relative MSE {rel:.3} outside pinned band {band:?}",
                m.label
            );
        }
    }
    pass(
        "criterion 5",
        "adjusted estimators dominate (rel MSE > 1.2), interaction model >= pooled in all continuous scenarios, sequential estimator within 1.1x of the marginal logistic MSE in all binary scenarios, all inside pinned bands".into(),
    );
}

// ---------------------------------------------------------------------------
// criterion 6 (slow / nightly)
// ---------------------------------------------------------------------------

/// Full-scale interval coverage: 500 simulated trials, each bootstrapped
/// 1000 times with jackknife acceleration, for every continuous estimator.
/// Takes hours; run explicitly:
/// `cargo test -p longtrial-cli --test acceptance -- --ignored --nocapture`
#[test]
#[ignore = "nightly coverage run (hours); see README"]
fn criterion_6_bootstrap_coverage() {
    let config = load_scenario(scenario_path()).expect("bundled scenario parses");
    let src = config.source_population().expect("source builds");
    let combo = ScenarioCombo {
        outcome: OutcomeKind::Continuous,
        effect: EffectProfile::Zero,
        dropout: DropoutMechanism::Mcar {
            target_missing: vec![0.05, 0.10, 0.15],
        },
    };
    let estimators = EstimatorSpec::default_set(OutcomeKind::Continuous);
    let metrics = run_scenario(
        &src,
        &combo,
        &estimators,
        &ScenarioOptions {
            n: config.trial.n,
            replicates: 500,
            boot_b: 1000,
            seed: config.run.seed,
            exec: ExecPolicy::Auto,
        },
    )
    .expect("coverage scenario runs");
    let mut details = Vec::new();
    for s in &metrics.estimators {
        let cp = s.coverage.expect("coverage computed");
        assert!(
            (0.92..=0.98).contains(&cp),
            "{}: coverage {cp:.3} outside [0.92, 0.98]",
            s.estimator
        );
        details.push(format!("{} {:.3}", s.estimator, cp));
    }
    pass(
        "criterion 6",
        format!("95% interval coverage within [0.92, 0.98]: {}", details.join(", ")),
    );
}

// ---------------------------------------------------------------------------
// criterion 7
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_dropout_calibration() {
    let config = load_scenario(scenario_path()).expect("bundled scenario parses");
    let src = config.source_population().expect("source builds");
    let pool = src.dataset(OutcomeKind::Continuous);
    let n = config.trial.n;
    let trials = 10_000u64;

    // MCAR: overall final-visit missingness 15%.
    let mcar = resolve_dropout(
        pool,
        &EffectProfile::Zero,
        &DropoutMechanism::Mcar {
            target_missing: vec![0.05, 0.10, 0.15],
        },
    )
    .unwrap();
    let mut missing_final = 0usize;
    for r in 0..trials {
        let trial = generate_trial(pool, n, &EffectProfile::Zero, &mcar, r).unwrap();
        missing_final += trial.records().iter().filter(|rec| !rec.observed(2)).count();
    }
    let total = (trials as usize * n) as f64;
    let frac = missing_final as f64 / total;
    let se = (0.15 * 0.85 / total).sqrt();
    assert!(
        (frac - 0.15).abs() < 3.0 * se,
        "mcar final missing {frac:.5} vs 0.15 (3se {:.5})",
        3.0 * se
    );

    // MAR: 15% treated / 20% control at the final visit, with the beneficial
    // effect applied.
    let effect = EffectProfile::BeneficialContinuous {
        decrements: vec![1.0, 1.5, 2.0],
    };
    let mar = resolve_dropout(
        pool,
        &effect,
        &DropoutMechanism::Mar(MarSpec {
            control_targets: vec![0.10, 0.15, 0.20],
            treated_targets: vec![0.05, 0.10, 0.15],
            slope: 0.5,
            intercepts: None,
        }),
    )
    .unwrap();
    let mut miss = [0usize; 2];
    let mut count = [0usize; 2];
    for r in 0..trials {
        let trial = generate_trial(pool, n, &effect, &mar, 1_000_000 + r).unwrap();
        for rec in trial.records() {
            count[rec.arm.index()] += 1;
            if !rec.observed(2) {
                miss[rec.arm.index()] += 1;
            }
        }
    }
    for (arm, target) in [(0usize, 0.20), (1, 0.15)] {
        let frac = miss[arm] as f64 / count[arm] as f64;
        let se = (target * (1.0 - target) / count[arm] as f64).sqrt();
        assert!(
            (frac - target).abs() < 3.0 * se,
            "mar arm {arm}: {frac:.5} vs {target} (3se {:.5})",
            3.0 * se
        );
    }
    pass(
        "criterion 7",
        format!("marginal missingness on target over {trials} trials (mcar and per-arm mar)"),
    );
}

// ---------------------------------------------------------------------------
// criterion 8
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_determinism() {
    let dir = tempfile::tempdir().unwrap();

    // A small analysis dataset.
    let data = dir.path().join("d.csv");
    let mut rows = String::from("subject_id,arm,x,y_1,y_2\n");
    let mut rng = longtrial::rng::stream_rng(5, &[0xD0]);
    for i in 0..36 {
        let arm = i % 2;
        let x: f64 = rng.random_range(-1.0..1.0);
        let y1: f64 = x + rng.random_range(-1.0..1.0);
        let y2: f64 = x - 0.3 * arm as f64 + rng.random_range(-1.0..1.0);
        rows.push_str(&format!("s{i},{arm},{x},{y1},{y2}\n"));
    }
    std::fs::write(&data, rows).unwrap();

    let analyze = |workers: &str, out: &std::path::Path| {
        let output = bin()
            .args([
                "analyze",
                "--data",
                data.to_str().unwrap(),
                "--outcome",
                "continuous",
                "--covariates",
                "x:continuous",
                "--estimators",
                "unadjusted,mmrm,tmle",
                "--boot",
                "150",
                "--seed",
                "31",
                "--workers",
                workers,
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
        output.stdout
    };
    let j1 = dir.path().join("a1.json");
    let j2 = dir.path().join("a2.json");
    let j3 = dir.path().join("a3.json");
    let s1 = analyze("1", &j1);
    let s2 = analyze("2", &j2);
    let s3 = analyze("1", &j3);
    assert_eq!(s1, s2, "analyze stdout differs across worker counts");
    assert_eq!(s1, s3, "analyze stdout differs across reruns");
    assert_eq!(std::fs::read(&j1).unwrap(), std::fs::read(&j2).unwrap());
    assert_eq!(std::fs::read(&j1).unwrap(), std::fs::read(&j3).unwrap());

    // Simulation: bundled scenario at reduced scale across worker counts.
    let simulate = |workers: &str, out: &std::path::Path| {
        let output = bin()
            .args([
                "simulate",
                "--scenario",
                scenario_path().to_str().unwrap(),
                "--replicates",
                "20",
                "--seed",
                "77",
                "--workers",
                workers,
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
        output.stdout
    };
    let c1 = dir.path().join("m1.csv");
    let c2 = dir.path().join("m2.csv");
    let t1 = simulate("1", &c1);
    let t2 = simulate("2", &c2);
    assert_eq!(t1, t2, "simulate stdout differs across worker counts");
    assert_eq!(std::fs::read(&c1).unwrap(), std::fs::read(&c2).unwrap());

    // Report merging twice over the same inputs.
    let r1 = dir.path().join("r1.csv");
    let r2 = dir.path().join("r2.csv");
    for out in [&r1, &r2] {
        let output = bin()
            .args([
                "report",
                "--inputs",
                j1.to_str().unwrap(),
                j2.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(output.status.success());
    }
    assert_eq!(std::fs::read(&r1).unwrap(), std::fs::read(&r2).unwrap());

    // Library level: parallel and sequential execution agree bitwise.
    let src = synthesize_source(&SourceParams::default(), 99).unwrap();
    let pool = src.dataset(OutcomeKind::Continuous);
    let ds = generate_trial(pool, 200, &EffectProfile::Zero, &ResolvedDropout::None, 4).unwrap();
    let spec = EstimatorSpec::Unadjusted;
    let a = bootstrap(
        &ds,
        &spec,
        &BootstrapOptions {
            b: 400,
            seed: 7,
            exec: ExecPolicy::Auto,
            ..Default::default()
        },
    )
    .unwrap();
    let b = bootstrap(
        &ds,
        &spec,
        &BootstrapOptions {
            b: 400,
            seed: 7,
            exec: ExecPolicy::Sequential,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(a.variance.to_bits(), b.variance.to_bits());
    assert_eq!(a.interval.lower.to_bits(), b.interval.lower.to_bits());
    assert_eq!(a.interval.upper.to_bits(), b.interval.upper.to_bits());

    pass(
        "criterion 8",
        "analyze, simulate, and report byte-identical across reruns and worker counts; parallel and sequential execution agree bitwise".into(),
    );
}
