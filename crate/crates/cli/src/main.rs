use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use popest_core::dataio::{self, apply_model_conditions, pad_empty_domain};
use popest_core::diagnostics::diagnostics_report;
use popest_core::mle::{self, FitOptions};
use popest_core::simulation::{self, run_simulation};
use popest_core::uncertainty::{parametric_bootstrap_with, BootstrapConfig};
use popest_core::{ColumnSchema, CountFamily, CovariateTerm, Dataset, DesignSpec, Error, ModelSpec, RecordKey, SimDesign, Variant};

#[derive(Parser)]
#[command(name = "popest", version, about = "Irregular-population estimation from aggregated counts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model and write the fit report as JSON.
    Fit(FitArgs),
    /// Fit a grid of families and alpha covariate sets; CSV sorted by BIC.
    Compare(CompareArgs),
    /// Fit, then run the parametric bootstrap for interval estimates of xi.
    Boot(BootArgs),
    /// Residuals, worst-fitted strata and the linearised check.
    Diagnose(DiagnoseArgs),
    /// Monte-Carlo comparison of likelihood variants on synthetic strata.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV.
    #[arg(long)]
    data: PathBuf,
    /// Column mapping, e.g. `period=q,country=c,domain=sex+age,m=m,n=n,N=N`.
    #[arg(long)]
    schema: Option<String>,
    /// Set m = 1 for `<period>:<country>[:<level>...]`; repeatable.
    #[arg(long)]
    pad: Vec<String>,
    /// Write the conditioning audit here instead of stderr.
    #[arg(long)]
    audit: Option<PathBuf>,
    /// Period to fit; required when the data has several.
    #[arg(long)]
    period: Option<String>,
}

#[derive(Args)]
struct ModelArgs {
    /// po, ztpo, zotpo, nb2, ztnb2 or zotnb2.
    #[arg(long, default_value = "ztnb2")]
    dist: String,
    /// Comma-separated alpha terms: intercept, country:<label>, <variable>:<level>.
    #[arg(long, default_value = "intercept")]
    alpha_cov: String,
    #[arg(long, default_value = "intercept")]
    beta_cov: String,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    allow_nonconverged: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated family tokens.
    #[arg(long, default_value = "po,ztpo,nb2,ztnb2")]
    dists: String,
    /// Semicolon-separated alpha covariate sets.
    #[arg(long, default_value = "intercept")]
    alpha_covs: String,
    #[arg(long, default_value = "intercept")]
    beta_cov: String,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BootArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(short = 'B', long = "replicates", default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    b: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.95, value_parser = parse_level)]
    quantile_level: f64,
    /// CSV of (xi_star, xi_hat_star) per replicate.
    #[arg(long)]
    draws: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long)]
    residuals_csv: Option<PathBuf>,
    #[arg(long)]
    allow_nonconverged: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 0.7)]
    alpha: f64,
    #[arg(long, default_value_t = 0.8)]
    beta: f64,
    #[arg(long)]
    phi: f64,
    #[arg(short = 'B', long = "replicates", default_value_t = 500)]
    b: usize,
    #[arg(long, default_value_t = 80)]
    strata: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Comma-separated subset of zhang-approx, exact-gamma, nb2-closed, zt-nb2.
    #[arg(long)]
    variants: Option<String>,
    /// Fit with zero counts retained (the zt-nb2 arm still uses m >= 1 only).
    #[arg(long)]
    keep_zeros: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_level(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("level must lie in (0, 1), got {v}"))
    }
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn model(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::MissingColumn(_)
            | Error::Schema(_)
            | Error::Parse { .. }
            | Error::DuplicateKey { .. }
            | Error::InvalidPadding(_)
            | Error::Domain(_)
            | Error::Spec(_)
            | Error::Io(_)
            | Error::Csv(_) => 2,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::usage(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn emit(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialise");
    s.push('\n');
    s.into_bytes()
}

fn load(args: &DataArgs) -> CliResult<Dataset> {
    let schema = match &args.schema {
        Some(s) => ColumnSchema::parse(s)?,
        None => ColumnSchema::default(),
    };
    let mut data = dataio::parse_csv(&args.data, &schema)?;
    for key in &args.pad {
        data = pad_empty_domain(&data, &RecordKey::parse(key)?)?;
    }
    let periods = data.periods();
    match &args.period {
        Some(p) => {
            if !periods.contains(p) {
                return Err(Failure::usage(format!("period `{p}` not in data (have {})", periods.join(", "))));
            }
            data = data.filter_period(p);
        }
        None if periods.len() > 1 => {
            return Err(Failure::usage(format!(
                "data has {} periods ({}); choose one with --period",
                periods.len(),
                periods.join(", ")
            )))
        }
        None => {}
    }
    let (clean, audit) = apply_model_conditions(&data);
    match &args.audit {
        Some(p) => fs::write(p, json(&audit))?,
        None if !audit.is_empty() => eprint!("{}", String::from_utf8_lossy(&json(&audit))),
        None => {}
    }
    if clean.is_empty() {
        return Err(Failure::usage("no records satisfy the model conditions"));
    }
    Ok(clean)
}

fn family(token: &str) -> CliResult<CountFamily> {
    CountFamily::from_token(token.trim()).ok_or_else(|| {
        let known: Vec<&str> = CountFamily::ALL.iter().map(|f| f.token()).collect();
        Failure::usage(format!("unknown distribution `{token}` (expected one of {})", known.join(", ")))
    })
}

fn model_spec(args: &ModelArgs) -> CliResult<ModelSpec> {
    let design = DesignSpec::new(CovariateTerm::parse_list(&args.alpha_cov)?, CovariateTerm::parse_list(&args.beta_cov)?)?;
    Ok(ModelSpec::new(family(&args.dist)?, design))
}

fn fit_model(data: &Dataset, spec: &ModelSpec, allow_nonconverged: bool) -> CliResult<mle::FittedModel> {
    let fit = mle::fit(data, spec, &FitOptions::default())?;
    if let Some(note) = &fit.init_note {
        eprintln!("warning: {note}");
    }
    if !fit.converged() && !allow_nonconverged {
        return Err(Failure::model(format!(
            "fit did not converge ({:?} after {} iterations); pass --allow-nonconverged to report it anyway",
            fit.convergence.status, fit.convergence.iterations
        )));
    }
    Ok(fit)
}

fn cmd_fit(args: FitArgs) -> CliResult<()> {
    let data = load(&args.data)?;
    let fit = fit_model(&data, &model_spec(&args.model)?, args.allow_nonconverged)?;
    emit(args.output.as_deref(), &json(&fit))
}

#[derive(Serialize)]
struct CompareRow {
    dist: String,
    alpha_covariates: String,
    beta_covariates: String,
    k: usize,
    loglik: Option<f64>,
    aic: Option<f64>,
    bic: Option<f64>,
    xi_hat: Option<f64>,
    converged: bool,
    status: String,
    message: String,
}

fn cmd_compare(args: CompareArgs) -> CliResult<()> {
    let data = load(&args.data)?;
    let families = args
        .dists
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(family)
        .collect::<CliResult<Vec<_>>>()?;
    let beta = CovariateTerm::parse_list(&args.beta_cov)?;
    let mut cells = Vec::new();
    for set in args.alpha_covs.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let design = DesignSpec::new(CovariateTerm::parse_list(set)?, beta.clone())?;
        for &f in &families {
            cells.push(ModelSpec::new(f, design.clone()));
        }
    }
    if cells.is_empty() {
        return Err(Failure::usage("empty model grid"));
    }
    let terms = |t: &[CovariateTerm]| t.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
    let mut rows: Vec<CompareRow> = cells
        .par_iter()
        .map(|spec| {
            let mut row = CompareRow {
                dist: spec.family.token().into(),
                alpha_covariates: terms(&spec.design.alpha),
                beta_covariates: terms(&spec.design.beta),
                k: spec.n_params(),
                loglik: None,
                aic: None,
                bic: None,
                xi_hat: None,
                converged: false,
                status: "failed".into(),
                message: String::new(),
            };
            match mle::fit(&data, spec, &FitOptions::default()) {
                Ok(fit) => {
                    row.loglik = Some(fit.loglik);
                    row.aic = Some(fit.aic);
                    row.bic = Some(fit.bic);
                    row.xi_hat = Some(fit.xi_hat);
                    row.converged = fit.converged();
                    if row.converged {
                        row.status = "ok".into();
                    } else {
                        row.status = "nonconverged".into();
                        row.message = format!("{:?}", fit.convergence.status);
                    }
                }
                Err(e) => row.message = e.to_string(),
            }
            row
        })
        .collect();
    // failed cells last, ties keep grid order
    rows.sort_by(|a, b| match (a.bic, b.bic) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        w.serialize(row).map_err(|e| Failure::model(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::model(e.to_string()))?;
    emit(args.output.as_deref(), &bytes)
}

fn cmd_boot(args: BootArgs) -> CliResult<()> {
    let data = load(&args.data)?;
    let fit = fit_model(&data, &model_spec(&args.model)?, false)?;
    let mut config = BootstrapConfig::new(args.b as usize, args.seed);
    config.level = args.quantile_level;
    let mut result = parametric_bootstrap_with(&data, &fit, &config)?;
    if result.unreliable {
        eprintln!("warning: {} of {} bootstrap refits failed", result.failures, result.b);
    }
    if let Some(path) = &args.draws {
        let mut buf = Vec::new();
        result.write_draws_csv(&mut buf)?;
        fs::write(path, buf)?;
        result.draws_path = Some(path.display().to_string());
    }
    emit(args.output.as_deref(), &json(&result))
}

fn cmd_diagnose(args: DiagnoseArgs) -> CliResult<()> {
    let data = load(&args.data)?;
    let fit = fit_model(&data, &model_spec(&args.model)?, args.allow_nonconverged)?;
    let report = diagnostics_report(&data, &fit, args.top_k)?;
    if let Some(path) = &args.residuals_csv {
        let mut buf = Vec::new();
        report.write_residuals_csv(&mut buf)?;
        fs::write(path, buf)?;
    }
    emit(args.output.as_deref(), &json(&report))
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let variants = match &args.variants {
        None => Variant::ALL.to_vec(),
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| Variant::from_token(t).ok_or_else(|| Failure::usage(format!("unknown variant `{t}`"))))
            .collect::<CliResult<Vec<_>>>()?,
    };
    if variants.is_empty() {
        return Err(Failure::usage("no variants selected"));
    }
    let design = SimDesign {
        alpha_true: args.alpha,
        beta_true: args.beta,
        phi_true: args.phi,
        replicates: args.b,
        seed: args.seed,
        population: simulation::synthetic_population(args.strata, args.seed),
        variants,
        keep_zeros: args.keep_zeros,
    };
    let report = run_simulation(&design)?;
    for v in &report.flagged {
        eprintln!("warning: variant {v} failed on more than 20% of replicates");
    }
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    emit(args.output.as_deref(), &buf)
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("POPEST_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::usage(format!("POPEST_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::model(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = configure_threads().and_then(|()| match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Boot(a) => cmd_boot(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Simulate(a) => cmd_simulate(a),
    });
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
