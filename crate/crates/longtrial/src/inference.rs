//! Nonparametric bootstrap variance and bias-corrected accelerated (BCa)
//! confidence intervals.
//!
//! Resampling is at the subject level so within-subject correlation is
//! preserved. Every replicate derives its own RNG stream from the run seed
//! and replicate index, which makes results identical across worker counts.

use crate::data::TrialDataset;
use crate::error::{Error, Result};
use crate::estimators::{EffectEstimate, Estimator};
use crate::exec::{map_indexed, ExecPolicy};
use crate::rng::stream_rng;
use crate::stats::{norm_cdf, norm_quantile, sample_variance};
use rand::Rng;

const BOOT_STREAM: u64 = 0xB007;

#[derive(Debug, Clone)]
pub struct BootstrapOptions {
    /// Number of bootstrap replicates.
    pub b: usize,
    pub seed: u64,
    /// Nominal two-sided coverage of the interval.
    pub level: f64,
    pub exec: ExecPolicy,
    /// Replicates allowed to fail before the whole call errors out.
    pub max_failure_fraction: f64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            b: 1000,
            seed: 0,
            level: 0.95,
            exec: ExecPolicy::Auto,
            max_failure_fraction: 0.10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BcaFallback {
    None,
    Percentile,
}

/// BCa interval with its bias-correction and acceleration inputs.
#[derive(Debug, Clone)]
pub struct BcaInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub z0: f64,
    pub acceleration: f64,
    pub fallback: BcaFallback,
    /// All replicates were identical; the interval collapses to a point.
    pub degenerate: bool,
}

impl BcaInterval {
    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

#[derive(Debug, Clone)]
pub struct JackknifeResult {
    /// Leave-one-subject-out estimates, in subject order (failed folds
    /// omitted).
    pub values: Vec<f64>,
    pub failed: usize,
}

#[derive(Debug)]
pub struct BootstrapResult {
    pub point: EffectEstimate,
    /// Retained replicate estimates, in replicate order.
    pub replicates: Vec<f64>,
    pub excluded: usize,
    /// Unbiased sample variance of the retained replicates.
    pub variance: f64,
    pub interval: BcaInterval,
    pub jackknife_failed: usize,
    pub seed: u64,
    pub b: usize,
}

fn retained_delta(result: Result<EffectEstimate>) -> Option<f64> {
    match result {
        Ok(est) if est.diagnostics.converged && est.delta.is_finite() => Some(est.delta),
        _ => None,
    }
}

/// Subject-level bootstrap of any estimator. Deterministic given
/// (dataset, estimator, b, seed) regardless of `exec` or worker count.
pub fn bootstrap(
    ds: &TrialDataset,
    estimator: &dyn Estimator,
    opts: &BootstrapOptions,
) -> Result<BootstrapResult> {
    if opts.b < 2 {
        return Err(Error::InvalidInput("bootstrap needs at least 2 replicates".into()));
    }
    let point = estimator.estimate(ds)?;
    let warm = estimator.for_resamples(ds);
    let refit: &dyn Estimator = warm.as_deref().unwrap_or(estimator);

    let n = ds.n();
    let outcomes: Vec<Option<f64>> = map_indexed(opts.exec, opts.b, |r| {
        let mut rng = stream_rng(opts.seed, &[BOOT_STREAM, r as u64]);
        let indices: Vec<usize> = (0..n)
            .map(|_| rng.random_range(0..n as u64) as usize)
            .collect();
        let resampled = ds.resample(&indices)?;
        refit.estimate(&resampled)
    })
    .into_iter()
    .map(retained_delta)
    .collect();

    let replicates: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let excluded = opts.b - replicates.len();
    let limit = (opts.max_failure_fraction * opts.b as f64).floor() as usize;
    if excluded > limit {
        return Err(Error::TooManyFailures {
            failed: excluded,
            total: opts.b,
            limit,
        });
    }

    let jack = jackknife(ds, refit, opts.exec)?;
    let variance = sample_variance(&replicates);
    let interval = bca_interval(&replicates, point.delta, &jack.values, opts.level)?;
    Ok(BootstrapResult {
        point,
        replicates,
        excluded,
        variance,
        interval,
        jackknife_failed: jack.failed,
        seed: opts.seed,
        b: opts.b,
    })
}

/// Leave-one-subject-out estimates, used for the BCa acceleration.
pub fn jackknife(
    ds: &TrialDataset,
    estimator: &dyn Estimator,
    exec: ExecPolicy,
) -> Result<JackknifeResult> {
    let n = ds.n();
    if n < 3 {
        return Err(Error::InvalidInput("jackknife needs at least 3 subjects".into()));
    }
    let folds: Vec<Option<f64>> = map_indexed(exec, n, |i| {
        retained_delta(ds.leave_one_out(i).and_then(|fold| estimator.estimate(&fold)))
    });
    let failed = folds.iter().filter(|f| f.is_none()).count();
    Ok(JackknifeResult {
        values: folds.into_iter().flatten().collect(),
        failed,
    })
}

/// Empirical quantile: the ceil(q * B)-th order statistic, clamped to the
/// observed range.
fn order_statistic(sorted: &[f64], q: f64) -> f64 {
    let b = sorted.len();
    let idx = (q * b as f64).ceil() as isize;
    let idx = idx.clamp(1, b as isize) as usize;
    sorted[idx - 1]
}

/// BCa interval from bootstrap replicates, the point estimate, and
/// leave-one-out jackknife values. Ties with the point estimate count half
/// toward the bias correction. Falls back to the percentile interval when
/// the bias correction is undefined or the jackknife spread is zero.
pub fn bca_interval(
    replicates: &[f64],
    point: f64,
    jackknife_values: &[f64],
    level: f64,
) -> Result<BcaInterval> {
    if replicates.is_empty() {
        return Err(Error::DegenerateReplicates {
            detail: "no retained replicates".into(),
        });
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidInput("interval level must be in (0,1)".into()));
    }
    let mut sorted = replicates.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite replicates"));
    let b_count = sorted.len() as f64;

    let first = sorted[0];
    if sorted.iter().all(|&v| v == first) {
        return Ok(BcaInterval {
            lower: first,
            upper: first,
            level,
            z0: 0.0,
            acceleration: 0.0,
            fallback: BcaFallback::None,
            degenerate: true,
        });
    }

    let alpha = (1.0 - level) / 2.0;
    let z_lo = norm_quantile(alpha);
    let z_hi = norm_quantile(1.0 - alpha);

    let below = sorted.iter().filter(|&&v| v < point).count() as f64;
    let ties = sorted.iter().filter(|&&v| v == point).count() as f64;
    let z0 = norm_quantile((below + 0.5 * ties) / b_count);

    // Acceleration from the jackknife third moment.
    let jb = jackknife_values.len() as f64;
    let (accel, accel_defined) = if jackknife_values.len() >= 2 {
        let jmean = jackknife_values.iter().sum::<f64>() / jb;
        let d2: f64 = jackknife_values.iter().map(|v| (jmean - v).powi(2)).sum();
        let d3: f64 = jackknife_values.iter().map(|v| (jmean - v).powi(3)).sum();
        if d2 > 0.0 {
            (d3 / (6.0 * d2.powf(1.5)), true)
        } else {
            (0.0, false)
        }
    } else {
        (0.0, false)
    };

    if !z0.is_finite() || !accel_defined {
        return Ok(BcaInterval {
            lower: order_statistic(&sorted, alpha),
            upper: order_statistic(&sorted, 1.0 - alpha),
            level,
            z0: if z0.is_finite() { z0 } else { f64::NAN },
            acceleration: accel,
            fallback: BcaFallback::Percentile,
            degenerate: false,
        });
    }

    let adjust = |z: f64| -> f64 {
        let num = z0 + z;
        norm_cdf(z0 + num / (1.0 - accel * num))
    };
    let q_lo = adjust(z_lo);
    let q_hi = adjust(z_hi);
    Ok(BcaInterval {
        lower: order_statistic(&sorted, q_lo),
        upper: order_statistic(&sorted, q_hi),
        level,
        z0,
        acceleration: accel,
        fallback: BcaFallback::None,
        degenerate: false,
    })
}
