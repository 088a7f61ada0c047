//! Command-line front end: analyze a trial dataset with bootstrap inference,
//! run a Monte Carlo scenario study, or merge analysis reports into a
//! variance-ratio comparison table.
//!
//! Exit codes: 0 success, 1 input/configuration error, 2 numerical failure.

mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use longtrial::data::{load_csv, CovariateSchema, CsvLayout, LoadOptions, OutcomeKind};
use longtrial::error::Error;
use longtrial::estimators::{
    Estimator, EstimatorKind, EstimatorSpec, GlmmOptions, MmrmOptions, TmleOptions,
};
use longtrial::exec::{with_workers, ExecPolicy};
use longtrial::inference::{bootstrap, BcaFallback, BootstrapOptions, BootstrapResult};
use longtrial::numerics::CovStructure;
use longtrial::sim::{load_scenario, run_scenario, ScenarioMetrics, ScenarioOptions};

use report::*;

#[derive(Parser)]
#[command(name = "longtrial", version, about = "Treatment-effect estimation for longitudinal trials with dropout")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the treatment effect on a dataset with bootstrap intervals.
    Analyze(AnalyzeArgs),
    /// Run a Monte Carlo scenario study from a configuration file.
    Simulate(SimulateArgs),
    /// Merge analysis reports into a variance-ratio comparison CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// CSV dataset path.
    #[arg(long)]
    data: PathBuf,
    /// CSV layout.
    #[arg(long, default_value = "wide")]
    layout: String,
    /// Outcome kind: continuous or binary.
    #[arg(long)]
    outcome: String,
    /// Covariate schema, e.g. `age:continuous,site:categorical(a|b)`.
    #[arg(long, default_value = "")]
    covariates: String,
    /// Comma-separated estimators, or `all` for every compatible one.
    #[arg(long, default_value = "all")]
    estimators: String,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = 10_000)]
    boot: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Nominal interval coverage.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Covariance structure for the repeated-measures estimators.
    #[arg(long, default_value = "unstructured")]
    structure: String,
    /// Working-correlation ladder for the marginal logistic estimator.
    #[arg(long, default_value = "unstructured,ar1,compound_symmetry,independence")]
    ladder: String,
    /// Positivity floor for propensity and hazard predictions.
    #[arg(long, default_value_t = 0.025)]
    trunc: f64,
    /// Censor everything after the first missing visit instead of rejecting
    /// non-monotone files.
    #[arg(long)]
    coerce_monotone: bool,
    /// Worker threads (0 = library default).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// File format for --out: json or csv.
    #[arg(long, default_value = "json")]
    format: String,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario configuration file.
    #[arg(long)]
    scenario: PathBuf,
    /// Override the configured replicate count (0 = validate and exit).
    #[arg(long)]
    replicates: Option<usize>,
    /// Override the configured per-trial bootstrap size.
    #[arg(long)]
    boot: Option<usize>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict to these estimators (comma separated).
    #[arg(long)]
    estimators: Option<String>,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Write long-form metrics CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Analysis report JSON files.
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Report(args) => cmd_report(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_class(&e))
        }
    }
}

/// 1 for input/configuration problems, 2 for numerical failures.
fn error_class(e: &Error) -> u8 {
    match e {
        Error::MalformedFile { .. }
        | Error::NonMonotoneMissingness { .. }
        | Error::MixedArmSubject { .. }
        | Error::MissingBaseline { .. }
        | Error::RankDeficientDesign { .. }
        | Error::InvalidParams(_)
        | Error::Config(_)
        | Error::SchemaMismatch(_)
        | Error::IncompatibleOutcome { .. }
        | Error::InvalidInput(_)
        | Error::CalibrationOutOfRange { .. }
        | Error::Io(_) => 1,
        Error::SingularSystem
        | Error::EmptyArm { .. }
        | Error::SeparationDetected { .. }
        | Error::AllStructuresFailed { .. }
        | Error::InsufficientRiskSet { .. }
        | Error::TooManyFailures { .. }
        | Error::DegenerateReplicates { .. } => 2,
    }
}

fn parse_estimators(
    spec: &str,
    outcome: OutcomeKind,
    structure: CovStructure,
    ladder: &[CovStructure],
    trunc: f64,
) -> Result<(Vec<EstimatorSpec>, Vec<String>), Error> {
    let mmrm_opts = MmrmOptions {
        structure,
        ..Default::default()
    };
    let glmm_opts = GlmmOptions {
        ladder: ladder.to_vec(),
        ..Default::default()
    };
    let tmle_opts = TmleOptions {
        trunc,
        ..Default::default()
    };
    let configure = |kind: EstimatorKind| -> EstimatorSpec {
        match kind {
            EstimatorKind::Unadjusted => EstimatorSpec::Unadjusted,
            EstimatorKind::Mmrm => EstimatorSpec::Mmrm(mmrm_opts.clone()),
            EstimatorKind::MmrmStar => EstimatorSpec::MmrmStar(mmrm_opts.clone()),
            EstimatorKind::GlmmStandardized => EstimatorSpec::Glmm(glmm_opts.clone()),
            EstimatorKind::Tmle => EstimatorSpec::Tmle(tmle_opts.clone()),
        }
    };

    let mut notes = Vec::new();
    let mut specs = Vec::new();
    if spec == "all" {
        for kind in [
            EstimatorKind::Unadjusted,
            EstimatorKind::Mmrm,
            EstimatorKind::MmrmStar,
            EstimatorKind::GlmmStandardized,
            EstimatorKind::Tmle,
        ] {
            if kind.supports(outcome) {
                specs.push(configure(kind));
            } else {
                notes.push(format!(
                    "{} skipped: not applicable to {} outcomes",
                    kind.label(),
                    outcome.as_str()
                ));
            }
        }
    } else {
        for name in spec.split(',').filter(|s| !s.trim().is_empty()) {
            let parsed = EstimatorSpec::from_name(name.trim())?;
            if !parsed.kind().supports(outcome) {
                return Err(Error::IncompatibleOutcome {
                    estimator: parsed.kind().label().to_string(),
                    outcome: outcome.as_str().to_string(),
                });
            }
            specs.push(configure(parsed.kind()));
        }
        if specs.is_empty() {
            return Err(Error::InvalidInput("no estimators requested".into()));
        }
    }
    Ok((specs, notes))
}

fn parse_ladder(s: &str) -> Result<Vec<CovStructure>, Error> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse())
        .collect()
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<ExitCode, Error> {
    let layout: CsvLayout = args.layout.parse()?;
    let outcome: OutcomeKind = args.outcome.parse()?;
    if !(0.0 < args.level && args.level < 1.0) {
        return Err(Error::InvalidInput("--level must be in (0,1)".into()));
    }
    let schema = CovariateSchema::parse_spec(&args.covariates)?;
    let loaded = load_csv(
        &args.data,
        &schema,
        &LoadOptions {
            layout,
            outcome_kind: outcome,
            coerce_monotone: args.coerce_monotone,
        },
    )?;
    let ds = loaded.dataset;
    let structure: CovStructure = args.structure.parse()?;
    let ladder = parse_ladder(&args.ladder)?;
    let (specs, notes) = parse_estimators(&args.estimators, outcome, structure, &ladder, args.trunc)?;

    let started = std::time::Instant::now();
    let results: Vec<(String, Result<BootstrapResult, Error>)> = with_workers(args.workers, || {
        specs
            .iter()
            .map(|spec| {
                let r = bootstrap(
                    &ds,
                    spec,
                    &BootstrapOptions {
                        b: args.boot,
                        seed: args.seed,
                        level: args.level,
                        exec: ExecPolicy::Auto,
                        ..Default::default()
                    },
                );
                (spec.label(), r)
            })
            .collect()
    });
    eprintln!(
        "analyze: {} estimators x {} bootstrap replicates in {:.1?}",
        specs.len(),
        args.boot,
        started.elapsed()
    );

    let summary = ds.dropout_summary();
    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    for (label, result) in results {
        match result {
            Ok(res) => estimates.push((label, res)),
            Err(e) => failures.push(FailureRecord {
                estimator: label,
                error: e.to_string(),
            }),
        }
    }
    let unadj_variance = estimates
        .iter()
        .find(|(label, _)| label == "unadjusted")
        .map(|(_, r)| r.variance);

    let study = args
        .data
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "study".into());
    let report = AnalysisReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tool: "longtrial".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        study,
        seed: args.seed,
        bootstrap: BootstrapMeta {
            replicates: args.boot,
            level: args.level,
        },
        dataset: DatasetSummary {
            path: args.data.display().to_string(),
            n: ds.n(),
            visits: ds.k(),
            outcome: outcome.as_str().into(),
            n_by_arm: summary.n_by_arm,
            missing_overall: summary.overall.clone(),
            missing_by_arm: summary.by_arm.clone(),
            coerced_values: loaded.coerced_values,
        },
        estimates: estimates
            .iter()
            .map(|(label, r)| EstimateRecord {
                estimator: label.clone(),
                delta: r.point.delta,
                arm_means: [r.point.arm_means.0, r.point.arm_means.1],
                variance: r.variance,
                interval: IntervalRecord {
                    lower: r.interval.lower,
                    upper: r.interval.upper,
                    level: r.interval.level,
                    z0: r.interval.z0.is_finite().then_some(r.interval.z0),
                    acceleration: r.interval.acceleration,
                    fallback: match r.interval.fallback {
                        BcaFallback::None => "none".into(),
                        BcaFallback::Percentile => "percentile".into(),
                    },
                    degenerate: r.interval.degenerate,
                },
                variance_ratio: unadj_variance.and_then(|vu| {
                    if label == "unadjusted" {
                        Some(1.0)
                    } else if r.variance > 0.0 {
                        Some(vu / r.variance)
                    } else {
                        None
                    }
                }),
                structure: r.point.covariance_structure.map(|s| s.as_str().to_string()),
                converged: r.point.diagnostics.converged,
                n_used: r.point.n_used,
                excluded_replicates: r.excluded,
                jackknife_failed: r.jackknife_failed,
                warnings: r.point.warnings.clone(),
            })
            .collect(),
        failures,
        notes,
    };

    print_analysis_table(&report);
    if let Some(path) = &args.out {
        match args.format.as_str() {
            "json" => std::fs::write(path, render_json(&report)?)?,
            "csv" => std::fs::write(path, render_analysis_csv(&report))?,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown format `{other}` (expected json|csv)"
                )))
            }
        }
    }
    Ok(if report.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn render_json(report: &AnalysisReport) -> Result<String, Error> {
    serde_json::to_string_pretty(report)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::InvalidInput(format!("report serialization failed: {e}")))
}

fn print_analysis_table(report: &AnalysisReport) {
    println!(
        "study {} | N = {}, visits = {}, outcome = {}",
        report.study, report.dataset.n, report.dataset.visits, report.dataset.outcome
    );
    println!(
        "bootstrap: {} replicates, level {:.2}, seed {}",
        report.bootstrap.replicates, report.bootstrap.level, report.seed
    );
    let fmt_missing = |m: &[f64]| {
        m.iter()
            .map(|f| format!("{:.1}%", 100.0 * f))
            .collect::<Vec<_>>()
            .join("/")
    };
    println!(
        "missing by visit: overall {} | control {} | treated {}",
        fmt_missing(&report.dataset.missing_overall),
        fmt_missing(&report.dataset.missing_by_arm[0]),
        fmt_missing(&report.dataset.missing_by_arm[1])
    );
    if report.dataset.coerced_values > 0 {
        println!(
            "note: {} observed values discarded to restore monotone dropout",
            report.dataset.coerced_values
        );
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    println!();
    println!(
        "{:<12} {:>10} {:>10} {:>22} {:>9} {:>12}",
        "estimator", "delta", "variance", "interval", "v-ratio", "structure"
    );
    for e in &report.estimates {
        let ratio = e
            .variance_ratio
            .map(|r| format!("{r:.2}"))
            .unwrap_or_else(|| "-".into());
        let mut label = e.estimator.clone();
        if !e.converged {
            label.push('*');
        }
        println!(
            "{:<12} {:>10.4} {:>10.6} [{:>9.4}, {:>9.4}] {:>9} {:>12}",
            label,
            e.delta,
            e.variance,
            e.interval.lower,
            e.interval.upper,
            ratio,
            e.structure.as_deref().unwrap_or("-")
        );
    }
    for f in &report.failures {
        println!("FAILED {:<12} {}", f.estimator, f.error);
    }
    if report.estimates.iter().any(|e| !e.converged) {
        println!("* covariance fit did not converge");
    }
}

fn render_analysis_csv(report: &AnalysisReport) -> String {
    let mut out = String::new();
    out.push_str(
        "study,estimator,delta,arm_mean_control,arm_mean_treated,variance,ci_lower,ci_upper,level,z0,acceleration,fallback,variance_ratio,structure,converged,n_used,excluded_replicates\n",
    );
    for e in &report.estimates {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            report.study,
            e.estimator,
            e.delta,
            e.arm_means[0],
            e.arm_means[1],
            e.variance,
            e.interval.lower,
            e.interval.upper,
            e.interval.level,
            e.interval.z0.map(|z| z.to_string()).unwrap_or_default(),
            e.interval.acceleration,
            e.interval.fallback,
            e.variance_ratio.map(|r| r.to_string()).unwrap_or_default(),
            e.structure.as_deref().unwrap_or(""),
            e.converged,
            e.n_used,
            e.excluded_replicates,
        ));
    }
    out
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, Error> {
    let config = load_scenario(&args.scenario)?;
    let replicates = args.replicates.unwrap_or(config.run.replicates);
    let boot = args.boot.unwrap_or(config.run.boot);
    let seed = args.seed.unwrap_or(config.run.seed);
    let combos = config.combos()?;

    if replicates == 0 {
        println!(
            "configuration OK: scenario `{}`, {} combinations, trial n = {}",
            config.name,
            combos.len(),
            config.trial.n
        );
        for combo in &combos {
            println!("  {}", combo.label());
        }
        return Ok(ExitCode::SUCCESS);
    }

    let src = config.source_population()?;
    let mut all_metrics: Vec<ScenarioMetrics> = Vec::new();
    for combo in &combos {
        let estimators = match &args.estimators {
            Some(list) => {
                let mut specs = Vec::new();
                for name in list.split(',').filter(|s| !s.trim().is_empty()) {
                    let spec = EstimatorSpec::from_name(name.trim())?;
                    if spec.kind().supports(combo.outcome) {
                        specs.push(spec);
                    }
                }
                if specs.is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "none of the requested estimators applies to {} outcomes",
                        combo.outcome.as_str()
                    )));
                }
                specs
            }
            None => EstimatorSpec::default_set(combo.outcome),
        };
        let started = std::time::Instant::now();
        let metrics = with_workers(args.workers, || {
            run_scenario(
                &src,
                combo,
                &estimators,
                &ScenarioOptions {
                    n: config.trial.n,
                    replicates,
                    boot_b: boot,
                    seed,
                    exec: ExecPolicy::Auto,
                },
            )
        })?;
        eprintln!(
            "{}: {} replicates in {:.1?}",
            combo.label(),
            replicates,
            started.elapsed()
        );
        print_metrics_block(&metrics, boot);
        all_metrics.push(metrics);
    }

    if let Some(path) = &args.out {
        std::fs::write(path, render_metrics_csv(&all_metrics))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn print_metrics_block(metrics: &ScenarioMetrics, boot: usize) {
    println!(
        "== {} | true delta {:.4} | {} replicates{} ==",
        metrics.label,
        metrics.true_delta,
        metrics.replicates,
        if boot > 0 {
            format!(", coverage from {boot} bootstrap replicates")
        } else {
            String::new()
        }
    );
    if let Some(intercepts) = &metrics.mar_intercepts {
        let fmt = |v: &[f64]| {
            v.iter()
                .map(|c| format!("{c:.4}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        println!(
            "   calibrated dropout intercepts: control [{}] treated [{}]",
            fmt(&intercepts[0]),
            fmt(&intercepts[1])
        );
    }
    println!(
        "{:<12} {:>9} {:>9} {:>9} {:>7} {:>6} {:>9}",
        "estimator", "bias", "var", "mse", "rmse", "cp", "failures"
    );
    for e in &metrics.estimators {
        println!(
            "{:<12} {:>9.4} {:>9.4} {:>9.4} {:>7} {:>6} {:>9}",
            e.estimator,
            e.bias,
            e.variance,
            e.mse,
            e.relative_mse
                .map(|r| format!("{r:.2}"))
                .unwrap_or_else(|| "-".into()),
            e.coverage
                .map(|c| format!("{c:.2}"))
                .unwrap_or_else(|| "-".into()),
            e.failures,
        );
    }
    println!();
}

fn render_metrics_csv(all: &[ScenarioMetrics]) -> String {
    let mut out = String::new();
    out.push_str("outcome,effect,dropout,true_delta,replicates,estimator,bias,bias_mc_se,variance,variance_mc_se,mse,mse_mc_se,relative_mse,relative_mse_mc_se,coverage,coverage_mc_se,retained,failures\n");
    for m in all {
        for e in &m.estimators {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                m.outcome,
                m.effect,
                m.dropout,
                m.true_delta,
                m.replicates,
                e.estimator,
                e.bias,
                e.bias_mc_se,
                e.variance,
                e.variance_mc_se,
                e.mse,
                e.mse_mc_se,
                opt(e.relative_mse),
                opt(e.relative_mse_mc_se),
                opt(e.coverage),
                opt(e.coverage_mc_se),
                e.retained,
                e.failures,
            ));
        }
    }
    out
}

fn cmd_report(args: ReportArgs) -> Result<ExitCode, Error> {
    let mut reports = Vec::new();
    for path in &args.inputs {
        let text = std::fs::read_to_string(path)?;
        let report: AnalysisReport = serde_json::from_str(&text)
            .map_err(|e| Error::SchemaMismatch(format!("{}: {e}", path.display())))?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::SchemaMismatch(format!(
                "{}: schema version {} (expected {})",
                path.display(),
                report.schema_version,
                REPORT_SCHEMA_VERSION
            )));
        }
        reports.push(report);
    }
    reports.sort_by(|a, b| a.study.cmp(&b.study));

    let mut out = String::new();
    out.push_str("study,estimator,variance,variance_ratio,adjusted_dominant\n");
    for r in &reports {
        let adjusted: Vec<&EstimateRecord> = r
            .estimates
            .iter()
            .filter(|e| e.estimator != "unadjusted")
            .collect();
        let dominant = !adjusted.is_empty()
            && adjusted
                .iter()
                .all(|e| e.variance_ratio.is_some_and(|v| v > 1.0));
        for e in &r.estimates {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.study,
                e.estimator,
                e.variance,
                e.variance_ratio.map(|v| v.to_string()).unwrap_or_default(),
                dominant,
            ));
        }
    }
    match &args.out {
        Some(path) => std::fs::write(path, out)?,
        None => {
            std::io::stdout().write_all(out.as_bytes())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
