//! CSV ingest and export.
//!
//! Wide layout: `subject_id,arm,<cov...>,y_1..y_K`, one row per subject.
//! Long layout: `subject_id,arm,visit,outcome,<cov...>`, one row per
//! subject-visit. Empty outcome cells (or absent long rows) mean missing.
//! UTF-8, comma separated, `.` decimal point.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use crate::data::{
    Arm, BaselineValue, CovariateKind, CovariateSchema, OutcomeKind, ParticipantRecord,
    TrialDataset,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvLayout {
    Wide,
    Long,
}

impl std::str::FromStr for CsvLayout {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wide" => Ok(CsvLayout::Wide),
            "long" => Ok(CsvLayout::Long),
            other => Err(Error::InvalidInput(format!(
                "unknown layout `{other}` (expected wide|long)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub layout: CsvLayout,
    pub outcome_kind: OutcomeKind,
    /// When set, the first missing visit censors everything after it instead
    /// of rejecting the file; the number of discarded values is reported.
    pub coerce_monotone: bool,
}

#[derive(Debug)]
pub struct LoadedDataset {
    pub dataset: TrialDataset,
    /// Observed values discarded by `coerce_monotone`.
    pub coerced_values: usize,
}

struct RawSubject {
    subject_id: String,
    arm: Arm,
    covariates: Vec<String>,
    outcomes: Vec<Option<f64>>,
    line: usize,
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::MalformedFile {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_arm(path: &Path, line: usize, s: &str) -> Result<Arm> {
    match s.trim() {
        "0" => Ok(Arm::Control),
        "1" => Ok(Arm::Treated),
        other => Err(malformed(path, line, format!("arm must be 0 or 1, got `{other}`"))),
    }
}

fn parse_outcome(path: &Path, line: usize, s: &str, col: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| malformed(path, line, format!("cannot parse `{s}` in column {col}")))
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CovariateSchema, opts: &LoadOptions) -> Result<LoadedDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| malformed(path, 1, e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| malformed(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();

    let (raw, k) = match opts.layout {
        CsvLayout::Wide => read_wide(path, &mut reader, &headers, schema)?,
        CsvLayout::Long => read_long(path, &mut reader, &headers, schema)?,
    };
    finish(path, raw, k, schema, opts)
}

fn read_wide(
    path: &Path,
    reader: &mut csv::Reader<std::fs::File>,
    headers: &[String],
    schema: &CovariateSchema,
) -> Result<(Vec<RawSubject>, usize)> {
    if headers.first().map(String::as_str) != Some("subject_id")
        || headers.get(1).map(String::as_str) != Some("arm")
    {
        return Err(malformed(path, 1, "wide header must start with subject_id,arm"));
    }
    let m = schema.len();
    for (j, spec) in schema.covariates.iter().enumerate() {
        if headers.get(2 + j).map(String::as_str) != Some(spec.name.as_str()) {
            return Err(malformed(
                path,
                1,
                format!("expected covariate column `{}` at position {}", spec.name, 3 + j),
            ));
        }
    }
    let outcome_cols = &headers[2 + m..];
    let k = outcome_cols.len();
    if k == 0 {
        return Err(malformed(path, 1, "no outcome columns y_1.. found"));
    }
    for (t, col) in outcome_cols.iter().enumerate() {
        let expected = format!("y_{}", t + 1);
        if col != &expected {
            return Err(malformed(
                path,
                1,
                format!("expected outcome column `{expected}`, found `{col}`"),
            ));
        }
    }

    let mut raw = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| malformed(path, line, e.to_string()))?;
        if row.len() != 2 + m + k {
            return Err(malformed(
                path,
                line,
                format!("expected {} fields, found {}", 2 + m + k, row.len()),
            ));
        }
        let subject_id = row[0].to_string();
        if !seen.insert(subject_id.clone()) {
            return Err(malformed(path, line, format!("duplicate subject `{subject_id}`")));
        }
        let arm = parse_arm(path, line, &row[1])?;
        let covariates = (0..m).map(|j| row[2 + j].to_string()).collect();
        let outcomes = (0..k)
            .map(|t| parse_outcome(path, line, &row[2 + m + t], &format!("y_{}", t + 1)))
            .collect::<Result<Vec<_>>>()?;
        raw.push(RawSubject {
            subject_id,
            arm,
            covariates,
            outcomes,
            line,
        });
    }
    Ok((raw, k))
}

fn read_long(
    path: &Path,
    reader: &mut csv::Reader<std::fs::File>,
    headers: &[String],
    schema: &CovariateSchema,
) -> Result<(Vec<RawSubject>, usize)> {
    let expected: Vec<String> = ["subject_id", "arm", "visit", "outcome"]
        .iter()
        .map(|s| s.to_string())
        .chain(schema.covariates.iter().map(|c| c.name.clone()))
        .collect();
    if headers != expected.as_slice() {
        return Err(malformed(
            path,
            1,
            format!("long header must be `{}`", expected.join(",")),
        ));
    }
    let m = schema.len();

    struct LongAcc {
        arm: Arm,
        covariates: Vec<String>,
        outcomes: Vec<(usize, Option<f64>)>,
        line: usize,
    }
    let mut order: Vec<String> = Vec::new();
    let mut acc: std::collections::BTreeMap<String, LongAcc> = Default::default();
    let mut k = 0usize;

    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| malformed(path, line, e.to_string()))?;
        if row.len() != 4 + m {
            return Err(malformed(
                path,
                line,
                format!("expected {} fields, found {}", 4 + m, row.len()),
            ));
        }
        let subject_id = row[0].to_string();
        let arm = parse_arm(path, line, &row[1])?;
        let visit: usize = row[2]
            .parse()
            .map_err(|_| malformed(path, line, format!("visit must be a positive integer, got `{}`", &row[2])))?;
        if visit == 0 {
            return Err(malformed(path, line, "visit numbering starts at 1"));
        }
        k = k.max(visit);
        let outcome = parse_outcome(path, line, &row[3], "outcome")?;
        let covariates: Vec<String> = (0..m).map(|j| row[4 + j].to_string()).collect();

        match acc.get_mut(&subject_id) {
            None => {
                order.push(subject_id.clone());
                acc.insert(
                    subject_id,
                    LongAcc {
                        arm,
                        covariates,
                        outcomes: vec![(visit, outcome)],
                        line,
                    },
                );
            }
            Some(entry) => {
                if entry.arm != arm {
                    return Err(Error::MixedArmSubject { subject: subject_id });
                }
                if entry.covariates != covariates {
                    return Err(malformed(
                        path,
                        line,
                        format!("subject `{subject_id}` has inconsistent covariate values"),
                    ));
                }
                if entry.outcomes.iter().any(|(v, _)| *v == visit) {
                    return Err(malformed(
                        path,
                        line,
                        format!("subject `{subject_id}` has two rows for visit {visit}"),
                    ));
                }
                entry.outcomes.push((visit, outcome));
            }
        }
    }
    if k == 0 {
        return Err(malformed(path, 1, "file contains no data rows"));
    }

    let raw = order
        .into_iter()
        .map(|id| {
            let entry = acc.remove(&id).expect("subject recorded in order list");
            let mut outcomes = vec![None; k];
            for (visit, value) in entry.outcomes {
                outcomes[visit - 1] = value;
            }
            RawSubject {
                subject_id: id,
                arm: entry.arm,
                covariates: entry.covariates,
                outcomes,
                line: entry.line,
            }
        })
        .collect();
    Ok((raw, k))
}

fn finish(
    path: &Path,
    mut raw: Vec<RawSubject>,
    k: usize,
    schema: &CovariateSchema,
    opts: &LoadOptions,
) -> Result<LoadedDataset> {
    // Resolve categorical levels: discover any empty level lists from the
    // data, sorted lexicographically for a deterministic reference cell.
    let mut resolved = schema.clone();
    for (j, spec) in resolved.covariates.iter_mut().enumerate() {
        if let CovariateKind::Categorical { levels } = &mut spec.kind {
            if levels.is_empty() {
                let found: BTreeSet<String> =
                    raw.iter().map(|r| r.covariates[j].clone()).collect();
                *levels = found.into_iter().collect();
            }
        }
    }

    let mut coerced = 0usize;
    if opts.coerce_monotone {
        for subject in &mut raw {
            if let Some(first_gap) = subject.outcomes.iter().position(|o| o.is_none()) {
                for o in subject.outcomes.iter_mut().skip(first_gap) {
                    if o.take().is_some() {
                        coerced += 1;
                    }
                }
            }
        }
    }

    let mut records = Vec::with_capacity(raw.len());
    for subject in raw {
        let mut baseline = Vec::with_capacity(resolved.len());
        for (j, spec) in resolved.covariates.iter().enumerate() {
            let cell = subject.covariates[j].trim();
            if cell.is_empty() {
                return Err(Error::MissingBaseline {
                    subject: subject.subject_id.clone(),
                    covariate: spec.name.clone(),
                });
            }
            let value = match &spec.kind {
                CovariateKind::Categorical { levels } => {
                    let idx = levels.iter().position(|l| l == cell).ok_or_else(|| {
                        malformed(
                            path,
                            subject.line,
                            format!(
                                "unknown level `{cell}` for covariate `{}` (levels: {})",
                                spec.name,
                                levels.join("|")
                            ),
                        )
                    })?;
                    BaselineValue::Level(idx)
                }
                _ => BaselineValue::Numeric(cell.parse::<f64>().map_err(|_| {
                    malformed(
                        path,
                        subject.line,
                        format!("cannot parse `{cell}` for covariate `{}`", spec.name),
                    )
                })?),
            };
            baseline.push(value);
        }
        records.push(ParticipantRecord {
            subject_id: subject.subject_id,
            baseline,
            arm: subject.arm,
            outcomes: subject.outcomes,
        });
    }

    let visit_labels = (1..=k).map(|t| format!("y_{t}")).collect();
    let dataset = TrialDataset::new(records, opts.outcome_kind, visit_labels, resolved)?;
    Ok(LoadedDataset {
        dataset,
        coerced_values: coerced,
    })
}

/// Writes `ds` in the requested layout. Floats are written in Rust's
/// shortest-round-trip form, so save -> load -> save is byte stable.
pub fn save_csv(ds: &TrialDataset, path: impl AsRef<Path>, layout: CsvLayout) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    let fmt_baseline = |rec: &ParticipantRecord, j: usize| -> String {
        match (&ds.schema().covariates[j].kind, rec.baseline[j]) {
            (CovariateKind::Categorical { levels }, BaselineValue::Level(idx)) => {
                levels[idx].clone()
            }
            (_, BaselineValue::Numeric(v)) => format!("{v}"),
            (_, BaselineValue::Level(idx)) => format!("{idx}"),
        }
    };
    match layout {
        CsvLayout::Wide => {
            let mut header = vec!["subject_id".to_string(), "arm".to_string()];
            header.extend(ds.schema().covariates.iter().map(|c| c.name.clone()));
            header.extend((1..=ds.k()).map(|t| format!("y_{t}")));
            writeln!(out, "{}", header.join(","))?;
            for rec in ds.records() {
                let mut fields = vec![rec.subject_id.clone(), format!("{}", rec.arm.index())];
                for j in 0..ds.m() {
                    fields.push(fmt_baseline(rec, j));
                }
                for o in &rec.outcomes {
                    fields.push(o.map(|v| format!("{v}")).unwrap_or_default());
                }
                writeln!(out, "{}", fields.join(","))?;
            }
        }
        CsvLayout::Long => {
            let mut header = vec![
                "subject_id".to_string(),
                "arm".to_string(),
                "visit".to_string(),
                "outcome".to_string(),
            ];
            header.extend(ds.schema().covariates.iter().map(|c| c.name.clone()));
            writeln!(out, "{}", header.join(","))?;
            for rec in ds.records() {
                for (t, o) in rec.outcomes.iter().enumerate() {
                    let mut fields = vec![
                        rec.subject_id.clone(),
                        format!("{}", rec.arm.index()),
                        format!("{}", t + 1),
                        o.map(|v| format!("{v}")).unwrap_or_default(),
                    ];
                    for j in 0..ds.m() {
                        fields.push(fmt_baseline(rec, j));
                    }
                    writeln!(out, "{}", fields.join(","))?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}
