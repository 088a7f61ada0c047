//! Synthetic source population: a pool of trial completers whose baseline
//! covariates and outcome trajectories are resampled to build simulated
//! trials. The continuous outcome is change from baseline in a glycemic
//! marker; the binary outcome is reaching the target level at each visit.
//!
//! Baselines (age, gender, body weight, baseline marker) come from
//! truncated-normal / Bernoulli marginals tied together by a Gaussian copula.
//! Change trajectories are multivariate normal with visit-increasing mean
//! magnitude, AR(1) residual correlation across visits, and configurable
//! loadings on the baseline-marker and weight latents, so baseline adjustment
//! has real signal to recover and the signal strength varies by visit.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{
    Arm, BaselineValue, CovariateKind, CovariateSchema, CovariateSpec, OutcomeKind,
    ParticipantRecord, TrialDataset,
};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::stats::{norm_cdf, norm_quantile};

const SOURCE_STREAM: u64 = 0x50;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TruncNormal {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncNormal {
    /// Quantile transform of u in (0,1) onto the truncated support.
    fn quantile(&self, u: f64) -> f64 {
        let a = norm_cdf((self.lo - self.mean) / self.sd);
        let b = norm_cdf((self.hi - self.mean) / self.sd);
        self.mean + self.sd * norm_quantile(a + u * (b - a))
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SourceParams {
    pub n: usize,
    pub visit_weeks: Vec<u32>,
    pub age: TruncNormal,
    pub weight: TruncNormal,
    /// Baseline level of the outcome marker.
    pub baseline_marker: TruncNormal,
    pub male_prob: f64,
    /// Copula correlations among baseline latents.
    pub corr_age_weight: f64,
    pub corr_gender_weight: f64,
    /// Mean change from baseline per visit.
    pub mean_change: Vec<f64>,
    /// Marginal SD of the change per visit.
    pub sd_change: Vec<f64>,
    /// Correlation between the baseline-marker latent and the final-visit
    /// change; earlier visits are scaled by `baseline_corr_profile`.
    pub baseline_corr: f64,
    pub baseline_corr_profile: Vec<f64>,
    /// Constant correlation between the weight latent and each visit change.
    pub weight_corr: f64,
    /// AR(1) correlation of the idiosyncratic trajectory noise.
    pub resid_corr_lag1: f64,
    /// Achieved marker level below this counts as a responder.
    pub responder_threshold: f64,
}

impl Default for SourceParams {
    fn default() -> Self {
        SourceParams {
            n: 380,
            visit_weeks: vec![4, 12, 26],
            age: TruncNormal {
                mean: 56.0,
                sd: 10.0,
                lo: 18.0,
                hi: 85.0,
            },
            weight: TruncNormal {
                mean: 85.0,
                sd: 18.0,
                lo: 40.0,
                hi: 160.0,
            },
            baseline_marker: TruncNormal {
                mean: 8.1,
                sd: 0.85,
                lo: 6.5,
                hi: 11.0,
            },
            male_prob: 0.55,
            corr_age_weight: -0.05,
            corr_gender_weight: 0.25,
            mean_change: vec![-0.6, -0.9, -1.1],
            sd_change: vec![0.65, 0.95, 1.25],
            baseline_corr: 0.5,
            baseline_corr_profile: vec![0.1, 0.45, 1.0],
            weight_corr: 0.45,
            resid_corr_lag1: 0.6,
            responder_threshold: 7.0,
        }
    }
}

impl SourceParams {
    pub fn k(&self) -> usize {
        self.visit_weeks.len()
    }

    fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(Error::InvalidParams("at least one visit is required".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidParams("source population needs n >= 2".into()));
        }
        if self.mean_change.len() != k
            || self.sd_change.len() != k
            || self.baseline_corr_profile.len() != k
        {
            return Err(Error::InvalidParams(
                "mean_change, sd_change and baseline_corr_profile must match the visit count"
                    .into(),
            ));
        }
        if self.sd_change.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
            return Err(Error::InvalidParams("sd_change must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.male_prob) {
            return Err(Error::InvalidParams("male_prob must be in (0,1)".into()));
        }
        if self.resid_corr_lag1.abs() >= 1.0 {
            return Err(Error::InvalidParams("resid_corr_lag1 must be in (-1,1)".into()));
        }
        for t in 0..k {
            let lambda = self.baseline_corr * self.baseline_corr_profile[t];
            let rest = 1.0 - lambda * lambda - self.weight_corr * self.weight_corr;
            if rest <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "loadings at visit {} leave non-positive residual variance",
                    t + 1
                )));
            }
        }
        Ok(())
    }

    /// Cholesky factor of the baseline latent correlation (age, gender,
    /// weight, marker). The marker latent is independent of the others so the
    /// baseline-change correlation knob stays exact.
    fn copula_chol(&self) -> Result<DMatrix<f64>> {
        let mut c = DMatrix::identity(4, 4);
        c[(0, 2)] = self.corr_age_weight;
        c[(2, 0)] = self.corr_age_weight;
        c[(1, 2)] = self.corr_gender_weight;
        c[(2, 1)] = self.corr_gender_weight;
        c.cholesky()
            .map(|ch| ch.l())
            .ok_or_else(|| Error::InvalidParams("baseline copula is not positive definite".into()))
    }

    fn resid_chol(&self) -> Result<DMatrix<f64>> {
        let k = self.k();
        let r = DMatrix::from_fn(k, k, |i, j| {
            self.resid_corr_lag1.powi((i as i32 - j as i32).abs())
        });
        r.cholesky()
            .map(|ch| ch.l())
            .ok_or_else(|| Error::InvalidParams("residual correlation is not positive definite".into()))
    }

    pub fn schema() -> CovariateSchema {
        CovariateSchema {
            covariates: vec![
                CovariateSpec {
                    name: "age".into(),
                    kind: CovariateKind::Continuous,
                },
                CovariateSpec {
                    name: "gender".into(),
                    kind: CovariateKind::Binary,
                },
                CovariateSpec {
                    name: "weight".into(),
                    kind: CovariateKind::Continuous,
                },
                CovariateSpec {
                    name: "baseline_hba1c".into(),
                    kind: CovariateKind::Continuous,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceProvenance {
    Synthetic { seed: u64 },
    File { path: String },
}

/// Resampling pool of complete trajectories, materialized as both a
/// continuous-outcome and a binary-outcome dataset over the same subjects.
#[derive(Debug, Clone)]
pub struct SourcePopulation {
    continuous: TrialDataset,
    binary: TrialDataset,
    pub provenance: SourceProvenance,
    pub visit_weeks: Vec<u32>,
}

impl SourcePopulation {
    pub fn dataset(&self, kind: OutcomeKind) -> &TrialDataset {
        match kind {
            OutcomeKind::Continuous => &self.continuous,
            OutcomeKind::Binary => &self.binary,
        }
    }

    pub fn n(&self) -> usize {
        self.continuous.n()
    }

    pub fn k(&self) -> usize {
        self.continuous.k()
    }
}

/// Generates a complete synthetic pool. Deterministic in (params, seed).
pub fn synthesize_source(params: &SourceParams, seed: u64) -> Result<SourcePopulation> {
    params.validate()?;
    let k = params.k();
    let cop_l = params.copula_chol()?;
    let res_l = params.resid_chol()?;
    let mut rng = stream_rng(seed, &[SOURCE_STREAM]);

    let mut cont_records = Vec::with_capacity(params.n);
    let mut bin_records = Vec::with_capacity(params.n);
    for idx in 0..params.n {
        // Baseline latents through the copula.
        let z = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let z = &cop_l * z;
        let age = params.age.quantile(norm_cdf(z[0]).clamp(1e-12, 1.0 - 1e-12));
        let gender = if norm_cdf(z[1]) < params.male_prob { 1.0 } else { 0.0 };
        let weight = params
            .weight
            .quantile(norm_cdf(z[2]).clamp(1e-12, 1.0 - 1e-12));
        let z_marker = z[3];
        let marker = params
            .baseline_marker
            .quantile(norm_cdf(z_marker).clamp(1e-12, 1.0 - 1e-12));

        // Trajectory: loadings on the marker and weight latents plus AR(1)
        // idiosyncratic noise, scaled to the configured marginal SDs.
        let e = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let e = &res_l * e;
        let mut changes = Vec::with_capacity(k);
        for t in 0..k {
            let lambda = params.baseline_corr * params.baseline_corr_profile[t];
            let rest = (1.0 - lambda * lambda - params.weight_corr * params.weight_corr).sqrt();
            let std_change = lambda * z_marker + params.weight_corr * z[2] + rest * e[t];
            changes.push(params.mean_change[t] + params.sd_change[t] * std_change);
        }

        let baseline = vec![
            BaselineValue::Numeric(age),
            BaselineValue::Numeric(gender),
            BaselineValue::Numeric(weight),
            BaselineValue::Numeric(marker),
        ];
        let subject_id = format!("p{:05}", idx + 1);
        cont_records.push(ParticipantRecord {
            subject_id: subject_id.clone(),
            baseline: baseline.clone(),
            arm: Arm::Control,
            outcomes: changes.iter().map(|&c| Some(c)).collect(),
        });
        bin_records.push(ParticipantRecord {
            subject_id,
            baseline,
            arm: Arm::Control,
            outcomes: changes
                .iter()
                .map(|&c| Some(if marker + c < params.responder_threshold { 1.0 } else { 0.0 }))
                .collect(),
        });
    }

    let labels: Vec<String> = params
        .visit_weeks
        .iter()
        .map(|w| format!("week_{w}"))
        .collect();
    let continuous = TrialDataset::new(
        cont_records,
        OutcomeKind::Continuous,
        labels.clone(),
        SourceParams::schema(),
    )?;
    let binary = TrialDataset::new(bin_records, OutcomeKind::Binary, labels, SourceParams::schema())?;
    Ok(SourcePopulation {
        continuous,
        binary,
        provenance: SourceProvenance::Synthetic { seed },
        visit_weeks: params.visit_weeks.clone(),
    })
}

/// Wraps an externally loaded complete dataset as a resampling pool. The
/// other outcome kind is unavailable.
pub fn source_from_dataset(ds: TrialDataset, path: String) -> Result<SourcePopulation> {
    for rec in ds.records() {
        if rec.n_observed() != ds.k() {
            return Err(Error::InvalidParams(format!(
                "source pool must be complete; subject {} has missing visits",
                rec.subject_id
            )));
        }
    }
    let weeks: Vec<u32> = (1..=ds.k() as u32).collect();
    match ds.outcome_kind() {
        OutcomeKind::Continuous => {
            // A binary view requires a threshold rule; not derivable from a
            // bare file, so both views alias the continuous pool and binary
            // scenarios must supply a binary file.
            Ok(SourcePopulation {
                binary: ds.clone(),
                continuous: ds,
                provenance: SourceProvenance::File { path },
                visit_weeks: weeks,
            })
        }
        OutcomeKind::Binary => Ok(SourcePopulation {
            continuous: ds.clone(),
            binary: ds,
            provenance: SourceProvenance::File { path },
            visit_weeks: weeks,
        }),
    }
}
