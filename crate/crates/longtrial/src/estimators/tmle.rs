//! Doubly robust sequential-regression estimator. Three working models are
//! combined: a logistic propensity model, logistic dropout-hazard models per
//! visit transition, and weighted sequential outcome regressions run
//! backwards from the final visit. Each regression is weighted by the inverse
//! of the propensity times the cumulative attendance hazard, and the final
//! pseudo-outcome is averaged over every randomized subject.

use nalgebra::{DMatrix, DVector};

use crate::data::{OutcomeKind, TrialDataset};
use crate::error::{Error, Result};
use crate::estimators::{EffectEstimate, EstimatorKind};
use crate::numerics::{irls_logistic, wls, FitDiagnostics};
use crate::stats::inv_logit;

#[derive(Debug, Clone)]
pub struct TmleOptions {
    /// Positivity floor applied to predicted propensities and hazards.
    pub trunc: f64,
    /// Fix the propensity at a known randomization ratio instead of
    /// estimating it.
    pub fixed_propensity: Option<f64>,
    /// Continuous outcomes only: run the sequential regressions on a
    /// min-max rescale of the pseudo-outcomes through a logit link instead
    /// of the identity link.
    pub bounded_continuous: bool,
}

impl Default for TmleOptions {
    fn default() -> Self {
        TmleOptions {
            trunc: 0.025,
            fixed_propensity: None,
            bounded_continuous: false,
        }
    }
}

/// Full working-model detail of a run.
#[derive(Debug, Clone)]
pub struct TmleFit {
    /// Propensity coefficients (empty when the propensity is fixed).
    pub propensity: DVector<f64>,
    /// Dropout-hazard coefficients for each visit transition.
    pub hazards: Vec<DVector<f64>>,
    /// Sequential regression coefficients per arm, ordered from the final
    /// visit backwards.
    pub sequential: [Vec<DVector<f64>>; 2],
    /// Cumulative inverse-probability weight per step (outer) and subject
    /// (inner), under the subject's own arm; `None` outside the risk set.
    pub weights: Vec<Vec<Option<f64>>>,
    /// Per-arm first-step predictions for every subject.
    pub q1: [Vec<f64>; 2],
}

pub fn tmle(ds: &TrialDataset, opts: &TmleOptions) -> Result<EffectEstimate> {
    tmle_fit(ds, opts).map(|(est, _)| est)
}

pub fn tmle_fit(ds: &TrialDataset, opts: &TmleOptions) -> Result<(EffectEstimate, TmleFit)> {
    if !(0.0..0.5).contains(&opts.trunc) && opts.trunc != 0.5 {
        return Err(Error::InvalidInput("trunc must lie in [0, 0.5]".into()));
    }
    let n = ds.n();
    let k = ds.k();
    let enc = ds.encode_design()?;
    // Center covariate and outcome-history columns so working-model
    // intercepts stay on the response scale; fits and predictions share the
    // same centering, so estimates are unchanged.
    let mut x_centered = enc.matrix.clone();
    let m = enc.n_covariate_cols();
    for j in 1..=m {
        let mean = x_centered.column(j).mean();
        for i in 0..n {
            x_centered[(i, j)] -= mean;
        }
    }
    let x = &x_centered; // n x (1 + m), intercept first
    let y_centers: Vec<f64> = (0..k)
        .map(|t| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for rec in ds.records() {
                if let Some(v) = rec.outcomes[t] {
                    sum += v;
                    count += 1;
                }
            }
            if count == 0 {
                0.0
            } else {
                sum / count as f64
            }
        })
        .collect();
    let arms: Vec<f64> = ds.records().iter().map(|r| r.arm.indicator()).collect();
    let n_treated = arms.iter().filter(|&&a| a == 1.0).count();
    if n_treated == 0 || n_treated == n {
        return Err(Error::EmptyArm {
            arm: if n_treated == 0 { 1 } else { 0 },
        });
    }
    let mut warnings: Vec<String> = Vec::new();
    let mut total_iterations = 0usize;

    // (1) Propensity of treatment given baseline.
    let (prop_treated, prop_coef): (Vec<f64>, DVector<f64>) = match opts.fixed_propensity {
        Some(p) => {
            if !(0.0 < p && p < 1.0) {
                return Err(Error::InvalidInput("fixed propensity must be in (0,1)".into()));
            }
            (vec![p; n], DVector::zeros(0))
        }
        None => {
            check_risk_set("both arms", 0, n, 1 + m)?;
            let a_resp = DVector::from_vec(arms.clone());
            let unit = DVector::from_element(n, 1.0);
            let fit = irls_logistic(x, &a_resp, &unit)?;
            if fit.separation {
                warnings.push("propensity model separated; coefficients capped".into());
            }
            total_iterations += fit.diagnostics.iterations;
            (fit.fitted.iter().copied().collect(), fit.beta)
        }
    };
    let propensity_of = |i: usize, a: f64| -> f64 {
        let p1 = prop_treated[i];
        let pa = if a == 1.0 { p1 } else { 1.0 - p1 };
        pa.max(opts.trunc)
    };

    // (2) Attendance hazards per visit transition, pooled across arms with
    // an arm covariate: step s models observing visit s+1 among subjects
    // observed through visit s, given (A, X, Y_1..Y_s).
    let mut hazard_coefs: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut cum_weights: Vec<Vec<Option<f64>>> = Vec::with_capacity(k);
    let mut cum: Vec<Option<f64>> = vec![None; n]; // cumulative hazard product
    for s in 0..k {
        let risk: Vec<usize> = (0..n)
            .filter(|&i| s == 0 || ds.records()[i].observed(s - 1))
            .collect();
        let cols = 2 + m + s;
        check_risk_set("both arms", s, risk.len(), cols)?;
        let responses: Vec<f64> = risk
            .iter()
            .map(|&i| if ds.records()[i].observed(s) { 1.0 } else { 0.0 })
            .collect();
        let all_attend = responses.iter().all(|&r| r == 1.0);
        let none_attend = responses.iter().all(|&r| r == 0.0);

        let (coef, preds): (DVector<f64>, Vec<f64>) = if all_attend || none_attend {
            // Degenerate transition: the empirical hazard is exactly 0 or 1.
            let h = if all_attend { 1.0 } else { 0.0 };
            (DVector::zeros(0), vec![h; risk.len()])
        } else {
            let design = hazard_design(ds, x, &arms, &risk, cols, &y_centers);
            let y = DVector::from_vec(responses);
            let unit = DVector::from_element(risk.len(), 1.0);
            let fit = irls_logistic(&design, &y, &unit)?;
            if fit.separation {
                warnings.push(format!("hazard model at step {s} separated; coefficients capped"));
            }
            total_iterations += fit.diagnostics.iterations;
            (fit.beta, fit.fitted.iter().copied().collect())
        };
        hazard_coefs.push(coef);

        let mut new_cum = vec![None; n];
        for (r, &i) in risk.iter().enumerate() {
            // Risk sets are nested, so the previous product exists.
            let prev = if s == 0 {
                1.0
            } else {
                cum[i].expect("risk-set member inside previous risk set")
            };
            new_cum[i] = Some(prev * preds[r].max(opts.trunc));
        }
        cum = new_cum;
        // Inverse-probability weight per subject at this step, under the
        // subject's own arm.
        cum_weights.push(
            (0..n)
                .map(|i| cum[i].map(|c| 1.0 / (propensity_of(i, arms[i]) * c)))
                .collect(),
        );
    }

    // (3) Sequential weighted regressions per arm, from the last visit back.
    let binary = ds.outcome_kind() == OutcomeKind::Binary;
    let mut seq_coefs: [Vec<DVector<f64>>; 2] = [Vec::new(), Vec::new()];
    let mut q1: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut arm_means = [0.0f64; 2];

    for arm_idx in 0..2usize {
        let a = arm_idx as f64;
        // Pseudo-outcome, defined where the final visit is observed.
        let mut q: Vec<Option<f64>> = ds
            .records()
            .iter()
            .map(|r| r.outcomes[k - 1])
            .collect();

        for j in (0..k).rev() {
            let fit_set: Vec<usize> = (0..n)
                .filter(|&i| arms[i] == a && ds.records()[i].observed(j))
                .collect();
            let cols = 1 + m + j;
            check_risk_set(arm_name(arm_idx), j, fit_set.len(), cols)?;

            let design = outcome_design(ds, x, &fit_set, cols, &y_centers);
            let resp = DVector::from_vec(
                fit_set
                    .iter()
                    .map(|&i| q[i].expect("pseudo-outcome set for fit set"))
                    .collect::<Vec<_>>(),
            );
            // Subjects in the fit set belong to arm `a`, so their stored
            // own-arm weight is exactly 1/(pi_a * prod of hazards through j).
            let w = DVector::from_vec(
                fit_set
                    .iter()
                    .map(|&i| cum_weights[j][i].expect("fit-set subject inside risk set"))
                    .collect::<Vec<_>>(),
            );

            // Prediction targets: everyone whose covariate history through
            // visit j is complete (all subjects when j = 0).
            let targets: Vec<usize> = (0..n)
                .filter(|&i| j == 0 || ds.records()[i].observed(j - 1))
                .collect();
            let target_design = outcome_design(ds, x, &targets, cols, &y_centers);

            let preds = fit_step(
                &design,
                &resp,
                &w,
                &target_design,
                binary,
                opts.bounded_continuous,
                &mut seq_coefs[arm_idx],
                &mut warnings,
                &mut total_iterations,
                arm_idx,
                j,
            )?;
            for (t, &i) in targets.iter().enumerate() {
                q[i] = Some(preds[t]);
            }
        }

        let values: Vec<f64> = (0..n)
            .map(|i| q[i].expect("first-step prediction covers all subjects"))
            .collect();
        arm_means[arm_idx] = values.iter().sum::<f64>() / n as f64;
        q1[arm_idx] = values;
    }

    let mut est = EffectEstimate::from_arm_means(EstimatorKind::Tmle, arm_means[0], arm_means[1]);
    est.n_used = n;
    est.diagnostics = FitDiagnostics {
        converged: true,
        iterations: total_iterations,
        objective: 0.0,
        gradient_norm: 0.0,
        condition: 1.0,
    };
    est.warnings = warnings;
    let fit = TmleFit {
        propensity: prop_coef,
        hazards: hazard_coefs,
        sequential: seq_coefs,
        weights: cum_weights,
        q1,
    };
    Ok((est, fit))
}

fn arm_name(arm_idx: usize) -> &'static str {
    if arm_idx == 0 {
        "control"
    } else {
        "treated"
    }
}

fn check_risk_set(arm: &str, step: usize, count: usize, cols: usize) -> Result<()> {
    let needed = 10.max(cols + 2);
    if count < needed {
        return Err(Error::InsufficientRiskSet {
            arm: arm.to_string(),
            step,
            count,
            needed,
        });
    }
    Ok(())
}

fn hazard_design(
    ds: &TrialDataset,
    x: &DMatrix<f64>,
    arms: &[f64],
    rows: &[usize],
    cols: usize,
    y_centers: &[f64],
) -> DMatrix<f64> {
    let m = x.ncols() - 1;
    DMatrix::from_fn(rows.len(), cols, |r, c| {
        let i = rows[r];
        if c == 0 {
            1.0
        } else if c == 1 {
            arms[i]
        } else if c < 2 + m {
            x[(i, c - 1)]
        } else {
            let t = c - 2 - m;
            ds.records()[i].outcomes[t].expect("risk set observed through s-1") - y_centers[t]
        }
    })
}

fn outcome_design(
    ds: &TrialDataset,
    x: &DMatrix<f64>,
    rows: &[usize],
    cols: usize,
    y_centers: &[f64],
) -> DMatrix<f64> {
    let m = x.ncols() - 1;
    DMatrix::from_fn(rows.len(), cols, |r, c| {
        let i = rows[r];
        if c == 0 {
            1.0
        } else if c < 1 + m {
            x[(i, c)]
        } else {
            let t = c - 1 - m;
            ds.records()[i].outcomes[t].expect("target observed through j-1") - y_centers[t]
        }
    })
}

#[allow(clippy::too_many_arguments)]
fn fit_step(
    design: &DMatrix<f64>,
    resp: &DVector<f64>,
    w: &DVector<f64>,
    target_design: &DMatrix<f64>,
    binary: bool,
    bounded: bool,
    coefs: &mut Vec<DVector<f64>>,
    warnings: &mut Vec<String>,
    total_iterations: &mut usize,
    arm_idx: usize,
    step: usize,
) -> Result<Vec<f64>> {
    let spread = resp.max() - resp.min();
    if spread < 1e-12 {
        // Constant response: every prediction is that constant.
        coefs.push(DVector::zeros(0));
        return Ok(vec![resp[0]; target_design.nrows()]);
    }
    if binary {
        let fit = irls_logistic(design, resp, w)?;
        if fit.separation {
            warnings.push(format!(
                "sequential model ({}, step {step}) separated; coefficients capped",
                arm_name(arm_idx)
            ));
        }
        *total_iterations += fit.diagnostics.iterations;
        let preds = (target_design * &fit.beta).map(inv_logit);
        coefs.push(fit.beta);
        Ok(preds.iter().copied().collect())
    } else if bounded {
        let lo = resp.min();
        let hi = resp.max();
        let scaled = resp.map(|v| (v - lo) / (hi - lo));
        let fit = irls_logistic(design, &scaled, w)?;
        if fit.separation {
            warnings.push(format!(
                "sequential model ({}, step {step}) separated; coefficients capped",
                arm_name(arm_idx)
            ));
        }
        *total_iterations += fit.diagnostics.iterations;
        let preds = (target_design * &fit.beta).map(|eta| lo + (hi - lo) * inv_logit(eta));
        coefs.push(fit.beta);
        Ok(preds.iter().copied().collect())
    } else {
        let fit = wls(design, resp, w)?;
        let preds = target_design * &fit.beta;
        coefs.push(fit.beta);
        Ok(preds.iter().copied().collect())
    }
}
