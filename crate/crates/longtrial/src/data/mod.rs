//! Trial data representation and validation.
//!
//! A dataset holds one record per participant: baseline covariates, a binary
//! arm assignment, and K post-baseline outcomes of which a trailing block may
//! be missing (monotone dropout). Construction validates every structural
//! assumption the estimators rely on, so downstream code can take them for
//! granted.

mod csv_io;

pub use csv_io::{load_csv, save_csv, CsvLayout, LoadOptions, LoadedDataset};

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Outcome scale of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Continuous,
    Binary,
}

impl OutcomeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OutcomeKind::Continuous => "continuous",
            OutcomeKind::Binary => "binary",
        }
    }
}

impl std::str::FromStr for OutcomeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(OutcomeKind::Continuous),
            "binary" => Ok(OutcomeKind::Binary),
            other => Err(Error::InvalidInput(format!(
                "unknown outcome kind `{other}` (expected continuous|binary)"
            ))),
        }
    }
}

/// Treatment arm indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub fn indicator(&self) -> f64 {
        match self {
            Arm::Control => 0.0,
            Arm::Treated => 1.0,
        }
    }

    pub fn index(&self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }

    pub fn from_index(i: usize) -> Arm {
        if i == 0 {
            Arm::Control
        } else {
            Arm::Treated
        }
    }
}

/// Kind of a baseline covariate. Ordinal covariates enter the design as
/// numeric scores; categorical ones are one-hot encoded against the first
/// schema level.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Continuous,
    Binary,
    Ordinal,
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub kind: CovariateKind,
}

/// Ordered covariate declarations for a dataset.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct CovariateSchema {
    pub covariates: Vec<CovariateSpec>,
}

impl CovariateSchema {
    pub fn empty() -> Self {
        Self { covariates: vec![] }
    }

    pub fn continuous(names: &[&str]) -> Self {
        Self {
            covariates: names
                .iter()
                .map(|n| CovariateSpec {
                    name: n.to_string(),
                    kind: CovariateKind::Continuous,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.covariates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariates.is_empty()
    }

    /// Parses a compact spec such as
    /// `age:continuous,gender:binary,site:categorical(a|b|c)`.
    /// Categorical levels may be omitted, in which case they are discovered
    /// from the data in lexicographic order at load time.
    pub fn parse_spec(spec: &str) -> Result<Self> {
        let mut covariates = Vec::new();
        for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
            let (name, kind) = part.split_once(':').ok_or_else(|| {
                Error::InvalidInput(format!("covariate spec `{part}` is missing `:kind`"))
            })?;
            let kind = kind.trim();
            let kind = if kind == "continuous" {
                CovariateKind::Continuous
            } else if kind == "binary" {
                CovariateKind::Binary
            } else if kind == "ordinal" {
                CovariateKind::Ordinal
            } else if kind == "categorical" {
                CovariateKind::Categorical { levels: vec![] }
            } else if let Some(levels) = kind
                .strip_prefix("categorical(")
                .and_then(|s| s.strip_suffix(')'))
            {
                CovariateKind::Categorical {
                    levels: levels.split('|').map(str::to_string).collect(),
                }
            } else {
                return Err(Error::InvalidInput(format!(
                    "unknown covariate kind `{kind}` for `{name}`"
                )));
            };
            covariates.push(CovariateSpec {
                name: name.trim().to_string(),
                kind,
            });
        }
        Ok(Self { covariates })
    }
}

/// A baseline covariate value; categorical values are stored as the index of
/// their level in the schema.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineValue {
    Numeric(f64),
    Level(usize),
}

impl BaselineValue {
    pub fn numeric(&self) -> Option<f64> {
        match self {
            BaselineValue::Numeric(v) => Some(*v),
            BaselineValue::Level(_) => None,
        }
    }
}

/// One participant: identifier, baseline vector, arm, and K optional
/// outcomes. A `None` outcome means the visit was missed; monotone dropout
/// makes everything after the first `None` missing as well.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantRecord {
    pub subject_id: String,
    pub baseline: Vec<BaselineValue>,
    pub arm: Arm,
    pub outcomes: Vec<Option<f64>>,
}

impl ParticipantRecord {
    /// Whether the outcome at 0-based visit `t` is observed.
    pub fn observed(&self, t: usize) -> bool {
        self.outcomes.get(t).is_some_and(|o| o.is_some())
    }

    /// Number of leading observed visits.
    pub fn n_observed(&self) -> usize {
        self.outcomes.iter().take_while(|o| o.is_some()).count()
    }

    /// Checks that no observed visit follows a missing one. Returns the
    /// offending 1-based visit on violation.
    fn monotone_violation(&self) -> Option<usize> {
        let mut seen_missing = false;
        for (t, o) in self.outcomes.iter().enumerate() {
            match (seen_missing, o.is_some()) {
                (true, true) => return Some(t + 1),
                (false, false) => seen_missing = true,
                _ => {}
            }
        }
        None
    }
}

/// Validated longitudinal trial dataset. Immutable after construction; safe
/// to share across worker threads.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    records: Vec<ParticipantRecord>,
    outcome_kind: OutcomeKind,
    visit_labels: Vec<String>,
    schema: CovariateSchema,
}

impl TrialDataset {
    pub fn new(
        records: Vec<ParticipantRecord>,
        outcome_kind: OutcomeKind,
        visit_labels: Vec<String>,
        schema: CovariateSchema,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidInput("dataset has no records".into()));
        }
        let k = visit_labels.len();
        let m = schema.len();
        for rec in &records {
            if rec.outcomes.len() != k {
                return Err(Error::InvalidInput(format!(
                    "subject {}: expected {k} outcomes, found {}",
                    rec.subject_id,
                    rec.outcomes.len()
                )));
            }
            if rec.baseline.len() != m {
                return Err(Error::InvalidInput(format!(
                    "subject {}: expected {m} baseline covariates, found {}",
                    rec.subject_id,
                    rec.baseline.len()
                )));
            }
            if let Some(visit) = rec.monotone_violation() {
                return Err(Error::NonMonotoneMissingness {
                    subject: rec.subject_id.clone(),
                    visit,
                });
            }
            if outcome_kind == OutcomeKind::Binary {
                for (t, o) in rec.outcomes.iter().enumerate() {
                    if let Some(v) = o {
                        if *v != 0.0 && *v != 1.0 {
                            return Err(Error::InvalidInput(format!(
                                "subject {}: binary outcome at visit {} is {v}, expected 0 or 1",
                                rec.subject_id,
                                t + 1
                            )));
                        }
                    }
                }
            }
        }
        let ds = Self {
            records,
            outcome_kind,
            visit_labels,
            schema,
        };
        // Design-matrix regularity is part of the dataset contract.
        ds.encode_design()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn k(&self) -> usize {
        self.visit_labels.len()
    }

    pub fn m(&self) -> usize {
        self.schema.len()
    }

    pub fn records(&self) -> &[ParticipantRecord] {
        &self.records
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    pub fn visit_labels(&self) -> &[String] {
        &self.visit_labels
    }

    pub fn schema(&self) -> &CovariateSchema {
        &self.schema
    }

    /// Dataset made of `indices` into this one (with repetition allowed);
    /// used for bootstrap resampling. Resampled ids keep their originals.
    pub fn resample(&self, indices: &[usize]) -> Result<TrialDataset> {
        let records = indices
            .iter()
            .map(|&i| self.records[i].clone())
            .collect::<Vec<_>>();
        TrialDataset::new(
            records,
            self.outcome_kind,
            self.visit_labels.clone(),
            self.schema.clone(),
        )
    }

    /// Dataset without record `i`.
    pub fn leave_one_out(&self, i: usize) -> Result<TrialDataset> {
        let mut records = Vec::with_capacity(self.n() - 1);
        records.extend(self.records.iter().take(i).cloned());
        records.extend(self.records.iter().skip(i + 1).cloned());
        TrialDataset::new(
            records,
            self.outcome_kind,
            self.visit_labels.clone(),
            self.schema.clone(),
        )
    }

    /// Per-visit fractions of missing outcomes, overall and by arm.
    pub fn dropout_summary(&self) -> DropoutSummary {
        let k = self.k();
        let mut counts = [[0usize; 2]; 2].map(|_| vec![0usize; k]);
        let mut totals = [0usize; 2];
        let mut overall_missing = vec![0usize; k];
        for rec in &self.records {
            let a = rec.arm.index();
            totals[a] += 1;
            for t in 0..k {
                if !rec.observed(t) {
                    counts[a][t] += 1;
                    overall_missing[t] += 1;
                }
            }
        }
        let frac = |miss: &[usize], total: usize| -> Vec<f64> {
            miss.iter()
                .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                .collect()
        };
        DropoutSummary {
            by_arm: [frac(&counts[0], totals[0]), frac(&counts[1], totals[1])],
            overall: frac(&overall_missing, self.n()),
            n_by_arm: totals,
        }
    }

    /// Encodes baseline covariates into a numeric design: intercept column
    /// first, then one column per continuous/binary/ordinal covariate and
    /// reference-coded indicators for categorical ones.
    pub fn encode_design(&self) -> Result<EncodedDesign> {
        let n = self.n();
        let mut names = vec!["(intercept)".to_string()];
        let mut reference_levels: Vec<Option<String>> = vec![None];
        let mut columns: Vec<Vec<f64>> = vec![vec![1.0; n]];

        for (j, spec) in self.schema.covariates.iter().enumerate() {
            match &spec.kind {
                CovariateKind::Continuous | CovariateKind::Ordinal | CovariateKind::Binary => {
                    let mut col = Vec::with_capacity(n);
                    for rec in &self.records {
                        let v = rec.baseline[j].numeric().ok_or_else(|| {
                            Error::InvalidInput(format!(
                                "subject {}: covariate `{}` is not numeric",
                                rec.subject_id, spec.name
                            ))
                        })?;
                        if spec.kind == CovariateKind::Binary && v != 0.0 && v != 1.0 {
                            return Err(Error::InvalidInput(format!(
                                "subject {}: binary covariate `{}` is {v}, expected 0 or 1",
                                rec.subject_id, spec.name
                            )));
                        }
                        col.push(v);
                    }
                    names.push(spec.name.clone());
                    reference_levels.push(None);
                    columns.push(col);
                }
                CovariateKind::Categorical { levels } => {
                    if levels.len() < 2 {
                        return Err(Error::InvalidInput(format!(
                            "categorical covariate `{}` needs at least 2 levels",
                            spec.name
                        )));
                    }
                    // First schema level is the dropped reference cell.
                    for (li, level) in levels.iter().enumerate().skip(1) {
                        let mut col = Vec::with_capacity(n);
                        for rec in &self.records {
                            let idx = match rec.baseline[j] {
                                BaselineValue::Level(idx) => idx,
                                BaselineValue::Numeric(_) => {
                                    return Err(Error::InvalidInput(format!(
                                        "subject {}: covariate `{}` is numeric but declared categorical",
                                        rec.subject_id, spec.name
                                    )))
                                }
                            };
                            col.push(if idx == li { 1.0 } else { 0.0 });
                        }
                        names.push(format!("{}[{}]", spec.name, level));
                        reference_levels.push(Some(levels[0].clone()));
                        columns.push(col);
                    }
                }
            }
        }

        let p = columns.len();
        let matrix = DMatrix::from_fn(n, p, |i, j| columns[j][i]);
        for (j, col) in columns.iter().enumerate() {
            if col.iter().all(|&v| v == 0.0) {
                return Err(Error::RankDeficientDesign {
                    detail: format!("column `{}` is identically zero", names[j]),
                });
            }
        }
        check_full_rank(&matrix, &names)?;
        Ok(EncodedDesign {
            matrix,
            names,
            reference_levels,
        })
    }
}

/// Rank check via pivoted QR with a relative tolerance of 1e-10.
pub(crate) fn check_full_rank(matrix: &DMatrix<f64>, names: &[String]) -> Result<()> {
    if matrix.nrows() < matrix.ncols() {
        return Err(Error::RankDeficientDesign {
            detail: format!(
                "{} rows cannot identify {} columns",
                matrix.nrows(),
                matrix.ncols()
            ),
        });
    }
    let qr = matrix.clone().col_piv_qr();
    let r = qr.r();
    let max_diag = (0..matrix.ncols())
        .map(|i| r[(i, i)].abs())
        .fold(0.0_f64, f64::max);
    let tol = 1e-10 * max_diag;
    let rank = (0..matrix.ncols())
        .filter(|&i| r[(i, i)].abs() > tol)
        .count();
    if rank < matrix.ncols() {
        return Err(Error::RankDeficientDesign {
            detail: format!(
                "rank {rank} < {} columns ({})",
                matrix.ncols(),
                names.join(", ")
            ),
        });
    }
    Ok(())
}

/// Per-visit missing fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutSummary {
    /// Indexed by `Arm::index()`.
    pub by_arm: [Vec<f64>; 2],
    pub overall: Vec<f64>,
    pub n_by_arm: [usize; 2],
}

/// Numeric baseline design shared by all estimators.
#[derive(Debug, Clone)]
pub struct EncodedDesign {
    /// N x (1 + expanded covariate count), intercept first.
    pub matrix: DMatrix<f64>,
    pub names: Vec<String>,
    pub reference_levels: Vec<Option<String>>,
}

impl EncodedDesign {
    /// Number of columns excluding the intercept.
    pub fn n_covariate_cols(&self) -> usize {
        self.matrix.ncols() - 1
    }
}
