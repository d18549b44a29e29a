//! `randpert` command-line front end.
//!
//! Exit codes: 0 success, 1 I/O / parse / argument error, 2 infeasible
//! sampling budget, 3 failed acceptance rule or violated invariant.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use randpert::bounds::{tropp_radius, BoundReport, SparsifyPredictors};
use randpert::completion::{estimate, observe, CompletionPredictors, NoiseKind, DEFAULT_FAILURE_BUDGET};
use randpert::io;
use randpert::matcore::{make_low_rank, singular_values, spectral_norm};
use randpert::mcverify::{self, TrialConfig};
use randpert::sparsify::{feasible_m_max, sparsify_bernoulli, sparsify_replacement, ClampPolicy, SparsifySidecar};
use randpert::{Error, Matrix, Result, TOOL_VERSION};

#[derive(Parser, Debug)]
#[command(name = "randpert", version, about = "Randomized sparsification, low-rank completion and perturbation-bound checks")]
struct Cli {
    /// Master seed; drawn at random (and recorded in the outputs) if absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte-Carlo runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Format of the summary written to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Cap keep-probabilities at 1 instead of refusing an infeasible budget.
    #[arg(long, global = true)]
    clamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Bernoulli,
    Replacement,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sparsify a matrix (.mtx or CSV) with budget m.
    Sparsify {
        /// Input matrix (.mtx or CSV).
        input: PathBuf,
        /// Expected number of kept entries (sample count for `replacement`).
        #[arg(long)]
        m: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Bernoulli)]
        method: MethodArg,
        /// Output matrix; a JSON sidecar is written next to it.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Low-rank completion from an observation manifest.
    Complete {
        /// Observation manifest written by `observe`.
        observation: PathBuf,
        /// Truncation rank of the estimator.
        #[arg(long)]
        j: usize,
        /// Output matrix Ã.
        #[arg(long, short)]
        out: PathBuf,
        /// True matrix; enables the per-column error file.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Failure probability of the reported bounds.
        #[arg(long, default_value_t = DEFAULT_FAILURE_BUDGET)]
        eps: f64,
    },
    /// Evaluate the sparsification (--m) or completion (--p) predictors.
    Bounds {
        input: PathBuf,
        /// Sparsification budget.
        #[arg(long, required_unless_present = "p", conflicts_with = "p")]
        m: Option<f64>,
        /// Observation probability.
        #[arg(long)]
        p: Option<f64>,
        /// Noise level (completion side).
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        /// Failure probability of the reported bounds.
        #[arg(long, default_value_t = DEFAULT_FAILURE_BUDGET)]
        eps: f64,
        /// Tail level of the norm bound (default: ln(1/eps)).
        #[arg(long)]
        s: Option<f64>,
        /// Also write the report to this JSON file.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run a Monte-Carlo experiment from a JSON config.
    Verify {
        config: PathBuf,
        /// Where `<stem>.report.json` and `<stem>.report.csv` go.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Generate a test matrix.
    Gen {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        /// Singular values of a Haar-random low-rank matrix, comma separated.
        #[arg(long, value_delimiter = ',', required_unless_present = "ones", conflicts_with = "ones")]
        spectrum: Vec<f64>,
        /// All-ones matrix instead.
        #[arg(long)]
        ones: bool,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Draw a masked, noisy observation of a matrix for `complete`.
    Observe {
        input: PathBuf,
        #[arg(long)]
        p: f64,
        /// gaussian, boundedUniform or none.
        #[arg(long, default_value = "none")]
        noise: NoiseKind,
        /// Noise scale: standard deviation, or half-width for boundedUniform.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, default_value = "obs")]
        stem: String,
    },
}

/// Everything that determines a one-shot run, hashed into its outputs.
#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct RunParams<'a> {
    command: &'a str,
    input: String,
    seed: u64,
    values: Vec<(&'a str, String)>,
}

impl RunParams<'_> {
    fn digest(&self) -> Result<String> {
        io::digest(self)
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Sidecar {
    #[serde(flatten)]
    base: SparsifySidecar,
    config_digest: String,
}

enum Failure {
    Error(Error),
    Acceptance,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible { .. } => 2,
        Error::InvariantViolation(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Acceptance) => ExitCode::from(3),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    if let Some(t) = cli.threads {
        mcverify::configure_threads(t)?;
    }
    let seed = cli.seed.unwrap_or_else(rand::random);
    let policy = if cli.clamp { ClampPolicy::Clamp } else { ClampPolicy::Strict };
    match cli.command {
        Command::Sparsify { input, m, method, out } => cmd_sparsify(&input, m, method, seed, policy, &out, cli.format)?,
        Command::Complete {
            observation,
            j,
            out,
            truth,
            eps,
        } => cmd_complete(&observation, j, &out, truth.as_deref(), eps, cli.format)?,
        Command::Bounds {
            input,
            m,
            p,
            sigma,
            eps,
            s,
            out,
        } => cmd_bounds(&input, m, p, sigma, eps, s, out.as_deref(), cli.format)?,
        Command::Verify { config, out_dir } => {
            return cmd_verify(&config, &out_dir, cli.seed, cli.clamp, cli.format);
        }
        Command::Gen {
            rows,
            cols,
            spectrum,
            ones,
            out,
        } => cmd_gen(rows, cols, &spectrum, ones, seed, &out)?,
        Command::Observe {
            input,
            p,
            noise,
            sigma,
            out_dir,
            stem,
        } => {
            let a = io::read_matrix(&input)?;
            let obs = observe(&a, p, noise, sigma, seed)?;
            fs::create_dir_all(&out_dir).map_err(Error::from)?;
            let manifest = io::write_observation(&out_dir, &stem, &obs)?;
            println!("{}", manifest.display());
        }
    }
    Ok(())
}

/// Prints `(key, value)` pairs as a JSON object or as `key,value` lines.
fn print_summary(format: Format, rows: &[(&str, serde_json::Value)]) -> Result<()> {
    match format {
        Format::Json => {
            let obj: serde_json::Map<String, serde_json::Value> =
                rows.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
            println!("{}", serde_json::to_string_pretty(&obj)?);
        }
        Format::Csv => {
            println!("key,value");
            for (k, v) in rows {
                match v {
                    serde_json::Value::String(s) => println!("{k},{s}"),
                    other => println!("{k},{other}"),
                }
            }
        }
    }
    Ok(())
}

fn num(x: f64) -> serde_json::Value {
    serde_json::Number::from_f64(x).map_or_else(|| serde_json::Value::String(x.to_string()), serde_json::Value::Number)
}

fn tall(a: &Matrix) -> Matrix {
    if a.rows() < a.cols() {
        a.transpose()
    } else {
        a.clone()
    }
}

fn cmd_sparsify(
    input: &Path,
    m: f64,
    method: MethodArg,
    seed: u64,
    policy: ClampPolicy,
    out: &Path,
    format: Format,
) -> Result<()> {
    let a = io::read_matrix(input)?;
    let outcome = match method {
        MethodArg::Bernoulli => sparsify_bernoulli(&a, m, seed, policy)?,
        MethodArg::Replacement => {
            if !(m >= 1.0 && m.fract() == 0.0) {
                return Err(Error::InvalidArgument(format!("replacement sampling needs a positive integer m, got {m}")));
            }
            sparsify_replacement(&a, m as usize, seed)?
        }
    };
    let params = RunParams {
        command: "sparsify",
        input: input.display().to_string(),
        seed,
        values: vec![
            ("m", m.to_string()),
            ("method", format!("{:?}", outcome.method).to_lowercase()),
            ("clamp", (policy == ClampPolicy::Clamp).to_string()),
        ],
    };
    let digest = params.digest()?;
    let meta = [
        ("toolVersion", TOOL_VERSION.to_string()),
        ("configDigest", digest.clone()),
        ("seed", seed.to_string()),
        ("m", m.to_string()),
    ];
    io::write_matrix(out, &outcome.result, &meta)?;
    let sidecar_path = out.with_extension("json");
    io::write_json(
        &sidecar_path,
        &Sidecar {
            base: outcome.sidecar(),
            config_digest: digest,
        },
    )?;

    let norm_e = spectral_norm(&outcome.error)?;
    let t = tall(&a);
    let eps1 = tropp_radius(&t, m)? / singular_values(&t)?[0];
    let m_max = feasible_m_max(&a)?;
    if outcome.clamped > 0 {
        eprintln!(
            "warning: {} keep-probabilities capped at 1 (m = {m} exceeds the feasible {m_max:.6})",
            outcome.clamped
        );
    }
    print_summary(
        format,
        &[
            ("output", out.display().to_string().into()),
            ("seed", seed.into()),
            ("nnz", outcome.nnz.into()),
            ("normE", num(norm_e)),
            ("eps1", num(eps1)),
            ("mMax", num(m_max)),
            ("feasible", (m <= m_max * (1.0 + 1e-12)).into()),
            ("clampWarnings", outcome.clamped.into()),
        ],
    )
}

fn cmd_complete(obs_path: &Path, j: usize, out: &Path, truth: Option<&Path>, eps: f64, format: Format) -> Result<()> {
    let obs = io::read_observation(obs_path)?;
    let est = estimate(&obs, j)?;
    let params = RunParams {
        command: "complete",
        input: obs_path.display().to_string(),
        seed: obs.seed(),
        values: vec![("j", j.to_string()), ("eps", eps.to_string())],
    };
    let digest = params.digest()?;
    let meta = [
        ("toolVersion", TOOL_VERSION.to_string()),
        ("configDigest", digest.clone()),
        ("seed", obs.seed().to_string()),
        ("j", j.to_string()),
    ];
    io::write_matrix(out, &est, &meta)?;

    let mut summary: Vec<(&str, serde_json::Value)> = vec![
        ("output", out.display().to_string().into()),
        ("seed", obs.seed().into()),
        ("j", j.into()),
    ];
    let mut report: BoundReport;
    match truth {
        Some(tp) => {
            let a = io::read_matrix(tp)?;
            if a.dims() != est.dims() {
                return Err(Error::DimensionMismatch(format!(
                    "truth is {}x{}, observation {}x{}",
                    a.rows(),
                    a.cols(),
                    est.rows(),
                    est.cols()
                )));
            }
            let diff = a.sub(&est)?;
            let mut text = format!(
                "# toolVersion: {TOOL_VERSION}\n# configDigest: {digest}\n# seed: {}\ncolumn,error\n",
                obs.seed()
            );
            for k in 0..a.cols() {
                text.push_str(&format!("{},{:e}\n", k + 1, diff.column_norm(k)));
            }
            let col_path = out.with_extension("columns.csv");
            fs::write(&col_path, text)?;
            let pred = CompletionPredictors::compute(&a, *obs.p(), obs.sigma(), eps)?;
            summary.push(("errSpectral", num(spectral_norm(&diff)?)));
            summary.push(("errFrob", num(diff.frobenius())));
            summary.push(("columnErrors", col_path.display().to_string().into()));
            summary.push(("bestTruncation", pred.best_j.into()));
            report = pred.to_report();
        }
        None => {
            let pred = CompletionPredictors::compute(&est, *obs.p(), obs.sigma(), eps)?;
            summary.push(("bestTruncation", pred.best_j.into()));
            report = pred.to_report();
            report
                .notes
                .push("no truth given: predictors evaluated on the estimate as a plug-in".into());
        }
    }
    report.notes.push(format!("configDigest: {digest}"));
    report.notes.push(format!("seed: {}", obs.seed()));
    let pred_path = out.with_extension("predictors.json");
    fs::write(&pred_path, report.to_json()? + "\n")?;
    summary.push(("predictors", pred_path.display().to_string().into()));
    print_summary(format, &summary)
}

#[allow(clippy::too_many_arguments)]
fn cmd_bounds(
    input: &Path,
    m: Option<f64>,
    p: Option<f64>,
    sigma: f64,
    eps: f64,
    s: Option<f64>,
    out: Option<&Path>,
    format: Format,
) -> Result<()> {
    let a = tall(&io::read_matrix(input)?);
    let report = match (m, p) {
        (Some(m), _) => SparsifyPredictors::compute(&a, m, s.unwrap_or(-eps.ln()))?.to_report(),
        (None, Some(p)) => CompletionPredictors::compute(&a, p, sigma, eps)?.to_report(),
        (None, None) => return Err(Error::InvalidArgument("one of --m or --p is required".into())),
    };
    let text = match format {
        Format::Json => report.to_json()? + "\n",
        Format::Csv => report.to_csv()?,
    };
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_verify(
    config: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    clamp: bool,
    format: Format,
) -> std::result::Result<(), Failure> {
    let text = fs::read_to_string(config).map_err(Error::from)?;
    let mut cfg = TrialConfig::from_json(&text, &config.display().to_string())?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if clamp {
        cfg.clamp = ClampPolicy::Clamp;
    }
    let report = mcverify::run(&cfg)?;
    fs::create_dir_all(out_dir).map_err(Error::from)?;
    let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    let json_path = out_dir.join(format!("{stem}.report.json"));
    let csv_path = out_dir.join(format!("{stem}.report.csv"));
    fs::write(&json_path, report.to_json()? + "\n").map_err(Error::from)?;
    fs::write(&csv_path, report.to_csv()?).map_err(Error::from)?;

    let mut rows: Vec<(&str, serde_json::Value)> = vec![
        ("report", json_path.display().to_string().into()),
        ("csv", csv_path.display().to_string().into()),
        ("masterSeed", cfg.master_seed.into()),
        ("configDigest", report.config_digest.clone().into()),
        ("passed", report.passed.into()),
    ];
    let lines: Vec<String> = report
        .checks
        .iter()
        .map(|c| format!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
        .collect();
    rows.push(("checks", lines.into()));
    print_summary(format, &rows)?;
    if report.passed {
        Ok(())
    } else {
        for c in report.failed_checks() {
            eprintln!("FAIL {}: {}", c.name, c.detail);
        }
        Err(Failure::Acceptance)
    }
}

fn cmd_gen(rows: usize, cols: usize, spectrum: &[f64], ones: bool, seed: u64, out: &Path) -> Result<()> {
    let (a, what) = if ones {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("matrix must be at least 1x1".into()));
        }
        (Matrix::from_fn(rows, cols, |_, _| 1.0), "ones".to_string())
    } else {
        let a: Matrix = make_low_rank(rows, cols, spectrum, seed)?;
        let list: Vec<String> = spectrum.iter().map(|s| s.to_string()).collect();
        (a, format!("lowRank[{}]", list.join(",")))
    };
    let params = RunParams {
        command: "gen",
        input: what.clone(),
        seed,
        values: vec![("rows", rows.to_string()), ("cols", cols.to_string())],
    };
    let meta = [
        ("toolVersion", TOOL_VERSION.to_string()),
        ("configDigest", params.digest()?),
        ("seed", seed.to_string()),
        ("matrix", what),
    ];
    io::write_matrix(out, &a, &meta)?;
    println!("{}", out.display());
    Ok(())
}
