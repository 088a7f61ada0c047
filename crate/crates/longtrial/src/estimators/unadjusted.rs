//! Difference of arm-specific completer means at the final visit.

use crate::data::{Arm, TrialDataset};
use crate::error::{Error, Result};
use crate::estimators::{EffectEstimate, EstimatorKind};

pub fn unadjusted(ds: &TrialDataset) -> Result<EffectEstimate> {
    let last = ds.k() - 1;
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for rec in ds.records() {
        if let Some(y) = rec.outcomes[last] {
            let a = rec.arm.index();
            sums[a] += y;
            counts[a] += 1;
        }
    }
    for arm in [Arm::Control, Arm::Treated] {
        if counts[arm.index()] == 0 {
            return Err(Error::EmptyArm {
                arm: arm.index() as u8,
            });
        }
    }
    let mu0 = sums[0] / counts[0] as f64;
    let mu1 = sums[1] / counts[1] as f64;
    let mut est = EffectEstimate::from_arm_means(EstimatorKind::Unadjusted, mu0, mu1);
    est.n_used = counts[0] + counts[1];
    Ok(est)
}
