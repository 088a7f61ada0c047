//! Generalized least squares over per-subject blocks with arbitrary
//! missingness patterns. Each subject contributes its observed rows and the
//! matching principal submatrix of the residual covariance.
//!
//! Subjects sharing a visit pattern are batched: their augmented rows [X | y]
//! are stored per visit as pattern-wide matrices, so one covariance solve and
//! a handful of matrix products replace per-subject work. The covariance
//! optimizer evaluates the same workspace hundreds of times per fit.

use crate::error::{Error, Result};
use crate::numerics::glm::solve_spd;
use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;

/// Observed design rows and responses for one subject. `visits` are the
/// 0-based visit indices the rows correspond to, in increasing order.
#[derive(Debug, Clone)]
pub struct SubjectBlock {
    pub design: DMatrix<f64>,
    pub y: DVector<f64>,
    pub visits: Vec<usize>,
}

impl SubjectBlock {
    pub fn n_obs(&self) -> usize {
        self.visits.len()
    }
}

/// Sufficient statistics of the whitened stacked system plus the covariance
/// log-determinant, accumulated across subjects.
pub(crate) struct GlsParts {
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub logdet_sum: f64,
}

struct PatternGroup {
    visits: Vec<usize>,
    count: usize,
    /// One (count x (p+1)) matrix per observed visit; row i holds subject
    /// i's [design row, y] at that visit.
    rows: Vec<DMatrix<f64>>,
}

/// Pattern-batched layout of a set of subject blocks, reusable across many
/// covariance evaluations.
pub struct GlsWorkspace {
    groups: Vec<PatternGroup>,
    p: usize,
    k: usize,
}

impl GlsWorkspace {
    pub fn new(blocks: &[SubjectBlock], k: usize) -> Result<Self> {
        let p = blocks
            .iter()
            .find(|b| b.n_obs() > 0)
            .map(|b| b.design.ncols())
            .ok_or_else(|| Error::InvalidInput("gls: no observed rows".into()))?;
        let mut index: HashMap<&[usize], usize> = HashMap::new();
        let mut members: Vec<(Vec<usize>, Vec<&SubjectBlock>)> = Vec::new();
        for block in blocks {
            if block.n_obs() == 0 {
                continue;
            }
            if block.design.ncols() != p {
                return Err(Error::InvalidInput("gls: inconsistent design widths".into()));
            }
            if block.visits.iter().any(|&v| v >= k) {
                return Err(Error::InvalidInput("gls: visit index outside covariance".into()));
            }
            match index.get(block.visits.as_slice()) {
                Some(&g) => members[g].1.push(block),
                None => {
                    members.push((block.visits.clone(), vec![block]));
                    // Keys borrow from the block that introduced the pattern,
                    // which outlives this map.
                    index.insert(block.visits.as_slice(), members.len() - 1);
                }
            }
        }
        let groups = members
            .into_iter()
            .map(|(visits, blocks)| {
                let m = visits.len();
                let count = blocks.len();
                let rows = (0..m)
                    .map(|r| {
                        DMatrix::from_fn(count, p + 1, |i, c| {
                            if c < p {
                                blocks[i].design[(r, c)]
                            } else {
                                blocks[i].y[r]
                            }
                        })
                    })
                    .collect();
                PatternGroup { visits, count, rows }
            })
            .collect();
        Ok(GlsWorkspace { groups, p, k })
    }

    pub(crate) fn accumulate(&self, sigma: &DMatrix<f64>) -> Result<GlsParts> {
        if sigma.nrows() != self.k || sigma.ncols() != self.k {
            return Err(Error::InvalidInput("gls: covariance dimension mismatch".into()));
        }
        let p = self.p;
        let mut gram = DMatrix::<f64>::zeros(p + 1, p + 1);
        let mut logdet_sum = 0.0;
        for group in &self.groups {
            let m = group.visits.len();
            let sub = DMatrix::from_fn(m, m, |i, j| sigma[(group.visits[i], group.visits[j])]);
            let chol = sub.cholesky().ok_or(Error::SingularSystem)?;
            let l = chol.l_dirty();
            let logdet = 2.0 * (0..m).map(|i| l[(i, i)].ln()).sum::<f64>();
            logdet_sum += group.count as f64 * logdet;
            let w = chol.inverse();

            // gram += sum_i B_i' W B_i, batched per visit pair:
            // sum_i B_i' W B_i = sum_{s,t} W[s,t] * rows[s]' rows[t].
            for s in 0..m {
                // ws = sum_t W[s,t] * rows[t]
                let mut ws = &group.rows[0] * w[(s, 0)];
                for t in 1..m {
                    ws += &group.rows[t] * w[(s, t)];
                }
                gram.gemm_tr(1.0, &group.rows[s], &ws, 1.0);
            }
        }
        let xtx = gram.view((0, 0), (p, p)).into_owned();
        let xty = gram.view((0, p), (p, 1)).column(0).into_owned();
        let yty = gram[(p, p)];
        Ok(GlsParts {
            xtx,
            xty,
            yty,
            logdet_sum,
        })
    }
}

/// Accumulates X' Sigma^-1 X, X' Sigma^-1 y, y' Sigma^-1 y and
/// sum_i log|Sigma_i| across subjects.
pub(crate) fn gls_accumulate(blocks: &[SubjectBlock], sigma: &DMatrix<f64>) -> Result<GlsParts> {
    GlsWorkspace::new(blocks, sigma.nrows())?.accumulate(sigma)
}

/// Profiled fixed effects: beta = (sum_i X_i' S_i^-1 X_i)^-1 sum_i X_i' S_i^-1 y_i.
pub fn gls_profile_beta(blocks: &[SubjectBlock], sigma: &DMatrix<f64>) -> Result<DVector<f64>> {
    let parts = gls_accumulate(blocks, sigma)?;
    solve_spd(&parts.xtx, &parts.xty)
}

/// Pivoted-QR rank check (relative tolerance 1e-10) of the stacked design.
pub fn check_design_rank(blocks: &[SubjectBlock], p: usize) -> Result<()> {
    let total: usize = blocks.iter().map(|b| b.n_obs()).sum();
    if total < p {
        return Err(Error::RankDeficientDesign {
            detail: format!("{total} observed rows cannot identify {p} columns"),
        });
    }
    let mut stacked = DMatrix::zeros(total, p);
    let mut row = 0;
    for b in blocks {
        stacked
            .view_mut((row, 0), (b.n_obs(), p))
            .copy_from(&b.design);
        row += b.n_obs();
    }
    let qr = stacked.col_piv_qr();
    let r = qr.r();
    let max_diag = (0..p).map(|i| r[(i, i)].abs()).fold(0.0_f64, f64::max);
    let rank = (0..p)
        .filter(|&i| r[(i, i)].abs() > 1e-10 * max_diag)
        .count();
    if rank < p {
        return Err(Error::RankDeficientDesign {
            detail: format!("longitudinal design has rank {rank} < {p} columns"),
        });
    }
    Ok(())
}
