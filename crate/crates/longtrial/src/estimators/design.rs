//! Longitudinal design construction shared by the repeated-measures and
//! marginal-logistic estimators: saturated visit and visit-by-arm means plus
//! baseline terms, either pooled across visits or with per-visit coefficients.

use crate::data::TrialDataset;
use crate::error::Result;
use crate::numerics::SubjectBlock;
use nalgebra::{DMatrix, DVector, RowDVector};

/// Which baseline terms enter the longitudinal model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineTerms {
    /// One pooled coefficient vector across visits.
    Pooled,
    /// Per-visit coefficient vectors for visits 2..K only.
    PerVisitFromSecond,
    /// Per-visit interactions plus first-visit main effects.
    PerVisitWithFirst,
}

pub struct LongitudinalDesign {
    /// Encoded baseline matrix, covariate columns only (no intercept).
    covariates: DMatrix<f64>,
    pub k: usize,
    pub p: usize,
    pub baseline: BaselineTerms,
    /// Column index of the arm main effect.
    pub arm_col: usize,
}

impl LongitudinalDesign {
    pub fn new(ds: &TrialDataset, baseline: BaselineTerms) -> Result<Self> {
        let enc = ds.encode_design()?;
        let k = ds.k();
        let m = enc.n_covariate_cols();
        // Center covariate columns at their sample means: identical fits and
        // predictions, but intercept-scale coefficients stay moderate, which
        // keeps the logistic separation cap meaningful.
        let mut covariates = enc.matrix.columns(1, m).into_owned();
        for j in 0..m {
            let mean = covariates.column(j).mean();
            for i in 0..covariates.nrows() {
                covariates[(i, j)] -= mean;
            }
        }
        let arm_col = 1 + (k - 1);
        let p = match baseline {
            BaselineTerms::Pooled => 2 * k + m,
            BaselineTerms::PerVisitFromSecond => 2 * k + (k - 1) * m,
            BaselineTerms::PerVisitWithFirst => 2 * k + k * m,
        };
        Ok(LongitudinalDesign {
            covariates,
            k,
            p,
            baseline,
            arm_col,
        })
    }

    /// The design row for subject `i` at 0-based visit `t` under arm
    /// indicator `a`.
    pub fn row(&self, i: usize, t: usize, a: f64) -> RowDVector<f64> {
        let k = self.k;
        let m = self.covariates.ncols();
        let mut row = RowDVector::zeros(self.p);
        row[0] = 1.0;
        if t >= 1 {
            row[t] = 1.0; // visit indicator for visits 2..K
        }
        row[self.arm_col] = a;
        if t >= 1 {
            row[self.arm_col + t] = a;
        }
        let mut col = 2 * k;
        match self.baseline {
            BaselineTerms::Pooled => {
                for j in 0..m {
                    row[col + j] = self.covariates[(i, j)];
                }
            }
            BaselineTerms::PerVisitFromSecond => {
                if t >= 1 {
                    col += (t - 1) * m;
                    for j in 0..m {
                        row[col + j] = self.covariates[(i, j)];
                    }
                }
            }
            BaselineTerms::PerVisitWithFirst => {
                col += t * m;
                for j in 0..m {
                    row[col + j] = self.covariates[(i, j)];
                }
            }
        }
        row
    }

    /// Observed-row blocks for every subject with at least one outcome.
    /// Returns the blocks and the indices of the contributing subjects.
    pub fn blocks(&self, ds: &TrialDataset) -> (Vec<SubjectBlock>, Vec<usize>) {
        let mut blocks = Vec::with_capacity(ds.n());
        let mut subjects = Vec::with_capacity(ds.n());
        for (i, rec) in ds.records().iter().enumerate() {
            let visits: Vec<usize> = (0..self.k).filter(|&t| rec.observed(t)).collect();
            if visits.is_empty() {
                continue;
            }
            let mut design = DMatrix::zeros(visits.len(), self.p);
            let mut y = DVector::zeros(visits.len());
            for (r, &t) in visits.iter().enumerate() {
                design.row_mut(r).copy_from(&self.row(i, t, rec.arm.indicator()));
                y[r] = rec.outcomes[t].expect("visit filtered as observed");
            }
            blocks.push(SubjectBlock { design, y, visits });
            subjects.push(i);
        }
        (blocks, subjects)
    }

    /// Mean over all N subjects of the linear predictor at the final visit
    /// under each arm. The difference equals the arm contrast coefficients.
    pub fn marginal_linear_predictions(
        &self,
        ds: &TrialDataset,
        beta: &DVector<f64>,
    ) -> (Vec<f64>, Vec<f64>) {
        let t_last = self.k - 1;
        let mut eta0 = Vec::with_capacity(ds.n());
        let mut eta1 = Vec::with_capacity(ds.n());
        for i in 0..ds.n() {
            eta0.push(self.row(i, t_last, 0.0).transpose().dot(beta));
            eta1.push(self.row(i, t_last, 1.0).transpose().dot(beta));
        }
        (eta0, eta1)
    }
}
