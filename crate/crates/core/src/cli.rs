//! The `rkhs-ratio` command line.
//!
//! Exit codes: 0 success, 1 I/O, 2 validation (including bad flags),
//! 3 numerical failure. Errors are also printed to stderr as one line of
//! JSON `{"error": <kind>, "message": <text>}`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::capacity::{capacity_profile, default_points_per_axis, default_probe_grid};
use crate::error::{Error, Result};
use crate::estimator::{fit, RatioModel};
use crate::experiment::{
    run_rate_study, run_study, ExperimentReport, NormalPair, RateConfig, SimConfig,
};
use crate::io;
use crate::kernel::{assemble_gram, assemble_p_gram, KernelFamily, KernelSpec, MeasureTag};
use crate::regularization::{check_scheme_constants, RegScheme, SchemeKind};
use crate::selection::{quasi_optimality, LambdaGrid};

#[derive(Debug, Parser)]
#[command(
    name = "rkhs-ratio",
    version,
    about = "Density-ratio estimation by spectral regularization in an RKHS"
)]
pub struct Cli {
    /// Worker threads; results do not depend on this. [default: available cores]
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a ratio model from two sample files and write it as JSON
    Fit(FitArgs),
    /// Evaluate a fitted model at the points of a CSV file
    Evaluate(EvaluateArgs),
    /// Run the Gaussian simulation study (the defaults reproduce the reference study)
    Simulate(SimulateArgs),
    /// Run an empirical convergence-rate sweep at the a-priori lambda
    Rates(RatesArgs),
    /// Effective dimension, sup-Christoffel estimate and lambda_* over a lambda grid
    Capacity(CapacityArgs),
    /// Numerically verify the filter constants and qualification of iterated Lavrentiev schemes
    CheckSchemes(CheckSchemesArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KernelChoice {
    GaussianPlusOne,
    Gaussian,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeChoice {
    IteratedLavrentiev,
    SpectralCutoff,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    /// Kernel family [default: gaussian-plus-one, k(x,y) = 1 + exp(-|x-y|^2/2)]
    #[arg(long, value_enum)]
    pub kernel: Option<KernelChoice>,
    /// Gaussian bandwidth h in exp(-|x-y|^2/(2h^2)) [default: 1]
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Additive constant of gaussian-plus-one [default: 1]
    #[arg(long)]
    pub offset: Option<f64>,
}

impl KernelArgs {
    fn apply(&self, base: KernelSpec) -> Result<KernelSpec> {
        let family = match self.kernel {
            Some(KernelChoice::GaussianPlusOne) => KernelFamily::GaussianPlusOne,
            Some(KernelChoice::Gaussian) => KernelFamily::Gaussian,
            None => base.family,
        };
        let offset = match (self.offset, &family) {
            (Some(o), _) => o,
            (None, KernelFamily::Gaussian) => 0.0,
            (None, _) => base.offset,
        };
        KernelSpec::new(family, self.bandwidth.unwrap_or(base.bandwidth), offset)
    }
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Largest grid value lambda_0 [study default: 0.9]
    #[arg(long = "lambda0")]
    pub lambda_0: Option<f64>,
    /// Grid ratio rho in (0,1) [study default: (1/9)^(1/9)]
    #[arg(long)]
    pub rho: Option<f64>,
    /// Number of grid values after lambda_0 [study default: 9]
    #[arg(long)]
    pub w: Option<usize>,
}

impl GridArgs {
    fn apply(&self, base: &LambdaGrid) -> Result<LambdaGrid> {
        if self.lambda_0.is_none() && self.rho.is_none() && self.w.is_none() {
            return Ok(base.clone());
        }
        let rho = self
            .rho
            .or(base.rho)
            .unwrap_or_else(|| LambdaGrid::default().rho.unwrap());
        LambdaGrid::geometric(
            self.lambda_0.unwrap_or(base.lambda_0),
            rho,
            self.w.unwrap_or(base.w),
        )
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// p-sample (CSV, or JSON sample container)
    #[arg(long)]
    pub xp: PathBuf,
    /// q-sample (CSV, or JSON sample container)
    #[arg(long)]
    pub xq: PathBuf,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Regularization parameter; chosen by quasi-optimality over the grid when omitted
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Number of Lavrentiev iterations [default: 1]
    #[arg(long, default_value_t = 1)]
    pub k: u32,
    /// Filter family [default: iterated-lavrentiev]
    #[arg(long, value_enum, default_value_t = SchemeChoice::IteratedLavrentiev)]
    pub scheme: SchemeChoice,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Output model JSON
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model JSON written by `fit`
    #[arg(long)]
    pub model: PathBuf,
    /// Points to evaluate (CSV)
    #[arg(long)]
    pub points: PathBuf,
    /// Output CSV (columns x0.., beta); stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON file with study settings; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Size of the p-sample [study default: 100]
    #[arg(long)]
    pub n: Option<usize>,
    /// Size of the q-sample [study default: 100]
    #[arg(long)]
    pub m: Option<usize>,
    /// Mean of p [study default: 2]
    #[arg(long)]
    pub mu_p: Option<f64>,
    /// Variance of p [study default: 5]
    #[arg(long)]
    pub var_p: Option<f64>,
    /// Means of q, comma separated [study default: 2,3,4]
    #[arg(long, value_delimiter = ',')]
    pub mu_q: Option<Vec<f64>>,
    /// Variance of q [study default: 0.5]
    #[arg(long)]
    pub var_q: Option<f64>,
    /// Iteration counts, comma separated [study default: 1,2,3,5,10]
    #[arg(long, value_delimiter = ',')]
    pub k_list: Option<Vec<u32>>,
    /// Replications per cell [study default: 20]
    #[arg(long)]
    pub replications: Option<usize>,
    /// Master seed [default: 2023]
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Output directory for report.json, replications.csv and box_stats.csv
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    /// JSON file with rate-study settings; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sample sizes (m = n), comma separated [default: 50,100,200,400]
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    /// Source-condition exponent of beta [default: 1]
    #[arg(long)]
    pub eta: Option<f64>,
    /// Source-condition exponent of the kernel sections [default: 0.5]
    #[arg(long)]
    pub varsigma: Option<f64>,
    /// Lavrentiev iterations [default: 10]
    #[arg(long)]
    pub k: Option<u32>,
    /// Replications per sample size [default: 20]
    #[arg(long)]
    pub replications: Option<usize>,
    /// Master seed [default: 2023]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Mean of q; p = N(2,5), q = N(mu_q, 0.5) [default: 2]
    #[arg(long)]
    pub mu_q: Option<f64>,
    /// Pointwise-error probe [default: mu_q]
    #[arg(long)]
    pub probe: Option<f64>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Output file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CapacityArgs {
    /// p-sample (CSV, or JSON sample container)
    #[arg(long)]
    pub xp: PathBuf,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Explicit lambda values, comma separated; replaces the geometric grid
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Probe points per axis for the sup-Christoffel estimate [default: ~1000 points total]
    #[arg(long)]
    pub probes_per_axis: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckSchemesArgs {
    /// Iteration counts to check [default: 1,2,3,5,10]
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,5,10")]
    pub k_list: Vec<u32>,
    /// Lambda values to check [default: the study grid]
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Upper end of the spectrum interval [default: kappa_0^2 = offset + 1 = 2]
    #[arg(long, default_value_t = 2.0)]
    pub t_max: f64,
    /// Grid points on (0, t_max]
    #[arg(long, default_value_t = 2000)]
    pub grid_size: usize,
    /// Optional JSON report
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => 1,
        Error::Numerical { .. } => 3,
        _ => 2,
    }
}

fn report_error(e: &Error) -> i32 {
    let line = ErrorLine {
        error: e.kind(),
        message: e.to_string(),
    };
    eprintln!(
        "{}",
        serde_json::to_string(&line).unwrap_or_else(|_| e.to_string())
    );
    exit_code(e)
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return report_error(&Error::param("--threads", "must be at least 1"));
        }
        builder = builder.num_threads(t);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => return report_error(&Error::Input(format!("thread pool: {e}"))),
    };
    match pool.install(|| dispatch(&cli.command)) {
        Ok(()) => 0,
        Err(e) => report_error(&e),
    }
}

fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Fit(a) => cmd_fit(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Rates(a) => cmd_rates(a),
        Command::Capacity(a) => cmd_capacity(a),
        Command::CheckSchemes(a) => cmd_check_schemes(a),
    }
}

fn positive(flag: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::param(flag, format!("must be positive, got {v}")))
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

pub fn cmd_fit(a: &FitArgs) -> Result<()> {
    let kernel = a.kernel.apply(KernelSpec::default())?;
    if let Some(l) = a.lambda {
        positive("--lambda", l)?;
    }
    if a.k == 0 {
        return Err(Error::param("--k", "must be at least 1"));
    }
    let xp = io::load_samples(&a.xp, MeasureTag::P)?;
    let xq = io::load_samples(&a.xq, MeasureTag::Q)?;
    let gram = assemble_gram(&kernel, &xp, &xq)?;

    let model: RatioModel = match (a.scheme, a.lambda) {
        (SchemeChoice::IteratedLavrentiev, Some(l)) => fit(
            &gram,
            &xp,
            &xq,
            &kernel,
            &RegScheme::iterated_lavrentiev(a.k, l)?,
        )?,
        (SchemeChoice::IteratedLavrentiev, None) => {
            let grid = a.grid.apply(&LambdaGrid::default())?;
            let trace = quasi_optimality(&gram, &xp, &xq, &kernel, a.k, &grid, true)?;
            trace.chosen_model().cloned().expect("models retained")
        }
        (SchemeChoice::SpectralCutoff, Some(l)) => {
            fit(&gram, &xp, &xq, &kernel, &RegScheme::spectral_cutoff(l)?)?
        }
        (SchemeChoice::SpectralCutoff, None) => {
            return Err(Error::param(
                "--lambda",
                "required for the spectral-cutoff scheme",
            ))
        }
    };
    write_file(&a.out, model.to_json()?.as_bytes())?;
    println!(
        "{}",
        serde_json::json!({
            "out": a.out.display().to_string(),
            "n": model.n(),
            "m": model.m(),
            "scheme": model.scheme,
        })
    );
    Ok(())
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let model = RatioModel::from_json(&fs::read_to_string(&a.model)?)?;
    let pts = io::load_samples_csv(&a.points, MeasureTag::P)?;
    let values = model.evaluate_batch(&pts.points)?;
    let mut buf = Vec::new();
    {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut buf);
        let mut header: Vec<String> = (0..pts.dim()).map(|i| format!("x{i}")).collect();
        header.push("beta".into());
        wtr.write_record(&header)?;
        for (p, v) in pts.points.iter().zip(&values) {
            let row: Vec<String> = p
                .iter()
                .chain(std::iter::once(v))
                .map(f64::to_string)
                .collect();
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
    }
    match &a.out {
        Some(path) => write_file(path, &buf),
        None => {
            std::io::stdout().write_all(&buf)?;
            Ok(())
        }
    }
}

/// Study settings from an optional config file, overridden by flags.
pub fn simulate_config(a: &SimulateArgs) -> Result<SimConfig> {
    let mut c: SimConfig = match &a.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => SimConfig::default(),
    };
    if let Some(v) = a.n {
        c.n = v;
    }
    if let Some(v) = a.m {
        c.m = v;
    }
    if let Some(v) = a.mu_p {
        c.mu_p = v;
    }
    if let Some(v) = a.var_p {
        c.var_p = v;
    }
    if let Some(v) = &a.mu_q {
        c.mu_q_list = v.clone();
    }
    if let Some(v) = a.var_q {
        c.var_q = v;
    }
    if let Some(v) = &a.k_list {
        c.k_list = v.clone();
    }
    if let Some(v) = a.replications {
        c.replications = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    c.grid = a.grid.apply(&c.grid)?;
    c.kernel = a.kernel.apply(c.kernel.clone())?;
    c.validate()?;
    Ok(c)
}

/// Write `report.json`, `replications.csv` and `box_stats.csv` into `dir`.
pub fn write_study_outputs(dir: &Path, report: &ExperimentReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_file(
        &dir.join("report.json"),
        serde_json::to_string_pretty(report)?.as_bytes(),
    )?;
    let mut reps = Vec::new();
    io::write_replications_csv(&mut reps, report)?;
    write_file(&dir.join("replications.csv"), &reps)?;
    let mut stats = Vec::new();
    io::write_box_stats_csv(&mut stats, report)?;
    write_file(&dir.join("box_stats.csv"), &stats)?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let config = simulate_config(a)?;
    let report = run_study(&config)?;
    write_study_outputs(&a.out_dir, &report)?;

    println!(
        "{:>6} {:>4} {:>14} {:>14} {:>10}",
        "mu_q", "k", "median_msd", "k1_median", "<= k=1"
    );
    for row in report.median_comparison() {
        let flag = match row.not_worse {
            Some(true) => "yes",
            Some(false) => "NO",
            None => "-",
        };
        println!(
            "{:>6} {:>4} {:>14} {:>14} {:>10}",
            row.mu_q,
            row.k,
            fmt_opt(row.median_msd),
            fmt_opt(row.baseline_median),
            flag
        );
    }
    if !report.complete() {
        eprintln!("warning: some replications failed; see report.json");
    }
    Ok(())
}

pub fn cmd_rates(a: &RatesArgs) -> Result<()> {
    let mut c: RateConfig = match &a.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => RateConfig::default(),
    };
    if let Some(v) = &a.n_list {
        c.n_list = v.clone();
    }
    if let Some(v) = a.eta {
        c.eta = v;
    }
    if let Some(v) = a.varsigma {
        c.varsigma = v;
    }
    if let Some(v) = a.k {
        c.k = v;
    }
    if let Some(v) = a.replications {
        c.replications = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.mu_q {
        c.pair = NormalPair { mu_q: v, ..c.pair };
    }
    if a.probe.is_some() {
        c.probe = a.probe;
    }
    c.kernel = a.kernel.apply(c.kernel.clone())?;
    let record = run_rate_study(&c)?;

    let bytes = match a.format {
        Format::Json => serde_json::to_string_pretty(&record)?.into_bytes(),
        Format::Csv => {
            let mut buf = Vec::new();
            {
                let mut wtr = csv::WriterBuilder::new()
                    .terminator(csv::Terminator::Any(b'\n'))
                    .from_writer(&mut buf);
                wtr.write_record(["n", "lambda", "median_pointwise_error", "median_rn_error"])?;
                for p in &record.points {
                    wtr.write_record([
                        p.n.to_string(),
                        p.lambda.to_string(),
                        p.median_pointwise_error.to_string(),
                        p.median_rn_error.to_string(),
                    ])?;
                }
                wtr.flush()?;
            }
            buf
        }
    };
    write_file(&a.out, &bytes)?;
    println!(
        "{}",
        serde_json::json!({
            "pointwise_slope": record.pointwise_slope,
            "rn_slope": record.rn_slope,
            "note": record.note,
        })
    );
    Ok(())
}

pub fn cmd_capacity(a: &CapacityArgs) -> Result<()> {
    let kernel = a.kernel.apply(KernelSpec::default())?;
    let xp = io::load_samples(&a.xp, MeasureTag::P)?;
    let lambdas = match &a.lambdas {
        Some(ls) => {
            for &l in ls {
                positive("--lambdas", l)?;
            }
            ls.clone()
        }
        None => a.grid.apply(&LambdaGrid::default())?.all(),
    };
    if lambdas.is_empty() {
        return Err(Error::param("--lambdas", "must not be empty"));
    }
    let gram = assemble_p_gram(&kernel, &xp)?;
    let per_axis = a
        .probes_per_axis
        .unwrap_or_else(|| default_points_per_axis(xp.dim()));
    let probes = default_probe_grid(&xp, per_axis);
    let profile = capacity_profile(&gram, &kernel, &xp, &lambdas, &probes)?;

    let bytes = match a.format {
        Format::Csv => {
            let mut buf = Vec::new();
            io::write_capacity_csv(&mut buf, &profile)?;
            buf
        }
        Format::Json => serde_json::to_string_pretty(&profile)?.into_bytes(),
    };
    write_file(&a.out, &bytes)?;
    if profile.lambda_star.is_none() {
        eprintln!("warning: lambda_star is not bracketed by (1e-8, kappa_0^2) for this sample");
    }
    println!(
        "{}",
        serde_json::json!({ "lambda_star": profile.lambda_star, "rows": profile.lambdas.len() })
    );
    Ok(())
}

#[derive(Serialize)]
struct CheckRow {
    k: u32,
    lambda: f64,
    residual_ratio: f64,
    sqrt_filter_ratio: f64,
    filter_ratio: f64,
    qualification_ratio: Option<f64>,
    holds: bool,
}

pub fn cmd_check_schemes(a: &CheckSchemesArgs) -> Result<()> {
    positive("--t-max", a.t_max)?;
    let lambdas = a
        .lambdas
        .clone()
        .unwrap_or_else(|| LambdaGrid::default().all());
    let mut rows = Vec::new();
    for &k in &a.k_list {
        for &l in &lambdas {
            let scheme =
                RegScheme::new(SchemeKind::IteratedLavrentiev(k), positive("--lambdas", l)?)
                    .map_err(|_| Error::param("--k-list", "every k must be at least 1"))?;
            let r = check_scheme_constants(&scheme, a.t_max, a.grid_size)?;
            rows.push(CheckRow {
                k,
                lambda: l,
                residual_ratio: r.residual_bound.worst_ratio,
                sqrt_filter_ratio: r.sqrt_filter_bound.worst_ratio,
                filter_ratio: r.filter_bound.worst_ratio,
                qualification_ratio: r.qualification_bound.as_ref().map(|q| q.worst_ratio),
                holds: r.all_hold(),
            });
        }
    }
    println!(
        "{:>4} {:>10} {:>10} {:>10} {:>10} {:>10}  ok",
        "k", "lambda", "|r|", "sqrt(t)g", "g", "t^s r"
    );
    for r in &rows {
        println!(
            "{:>4} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>10}  {}",
            r.k,
            r.lambda,
            r.residual_ratio,
            r.sqrt_filter_ratio,
            r.filter_ratio,
            fmt_opt(r.qualification_ratio),
            if r.holds { "yes" } else { "NO" }
        );
    }
    if let Some(out) = &a.out {
        write_file(out, serde_json::to_string_pretty(&rows)?.as_bytes())?;
    }
    if rows.iter().all(|r| r.holds) {
        Ok(())
    } else {
        Err(Error::numerical(
            f64::NAN,
            "filter bounds violated; see table",
        ))
    }
}
