//! `relaydof` command-line front end: noise-off verification, DoF sweeps
//! and the cut-set linear program.

mod config;
mod svg;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;
use rayon::prelude::*;
use relaydof::converse::{lemma1_sum_bound, lp_bound};
use relaydof::dof::{estimate_dof, trial_seed, DofConfig, DofError, MAX_REDRAWS};
use relaydof::round::SchemeError;
use relaydof::scheme::{verify_realization, VerifyRecord};
use serde::Serialize;

use config::{ConfigError, Experiment, FileConfig, RunArgs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFY_FAILED: u8 = 1;
pub const EXIT_INVALID_ESTIMATE: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_RUNTIME: u8 = 4;

/// Salt separating symbol seeds from channel seeds.
const SYMBOL_SALT: u64 = 0x5359_4d42_4f4c_5321;

#[derive(Parser, Debug)]
#[command(name = "relaydof", version, about = "Multi-way relaying DoF simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Noise-off algebraic checks over random channel realizations.
    Verify(RunArgs),
    /// Monte Carlo sum-rate sweep and DoF slope estimate.
    Sweep(RunArgs),
    /// Cut-set linear program and the summed per-user bound.
    Lp(LpArgs),
}

#[derive(Args, Debug)]
struct LpArgs {
    /// Number of users.
    #[arg(long)]
    k: Option<usize>,
    /// JSON file providing `k`.
    #[arg(long)]
    config: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(v) = std::env::var("RELAYDOF_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: cannot size the thread pool: {e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            }
            _ => {
                eprintln!("error: RELAYDOF_THREADS must be a positive integer, got '{v}'");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }
    let args: Vec<String> = std::env::args().collect();
    let stdout = std::io::stdout();
    ExitCode::from(run(&args, &mut stdout.lock()))
}

/// Parses `args` and runs the command, writing reports to `out`. Returns
/// the process exit status.
fn run(args: &[String], out: &mut dyn Write) -> u8 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Verify(a) => Experiment::resolve(a).map_err(Failure::from).and_then(|e| cmd_verify(&e, out)),
        Command::Sweep(a) => Experiment::resolve(a).map_err(Failure::from).and_then(|e| cmd_sweep(&e, out)),
        Command::Lp(a) => cmd_lp(a, out),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

#[derive(Serialize)]
struct FailureNote {
    trial: usize,
    invariant: String,
}

#[derive(Serialize)]
struct VerifyReport {
    scheme: String,
    users: usize,
    trials: usize,
    seed: u64,
    genie_relay: bool,
    passed: bool,
    first_failure: Option<FailureNote>,
    redraws: u64,
    aborted: usize,
    max_recovery_error: f64,
    max_residual_interference: f64,
    max_model_mismatch: f64,
    max_rank_deficit: usize,
    max_relay_power_ratio: f64,
    max_construction: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    null_dim_histogram: Option<BTreeMap<String, usize>>,
}

enum TrialOutcome {
    Checked { record: VerifyRecord, redraws: u64 },
    Aborted,
}

fn verify_trial(exp: &Experiment, trial: u64) -> Result<TrialOutcome, SchemeError> {
    for attempt in 0..=MAX_REDRAWS {
        let seed = trial_seed(exp.seed, trial, attempt);
        let ch = exp.scheme.draw(seed, exp.h_min, exp.h_max)?;
        match verify_realization(&exp.scheme, &ch, seed ^ SYMBOL_SALT, exp.genie_relay) {
            Ok(record) => return Ok(TrialOutcome::Checked { record, redraws: attempt }),
            Err(e) if e.is_degenerate_draw() => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(TrialOutcome::Aborted)
}

fn summarize(exp: &Experiment, outcomes: &[TrialOutcome]) -> VerifyReport {
    let mut report = VerifyReport {
        scheme: exp.scheme.id().to_string(),
        users: exp.scheme.topology().users,
        trials: exp.trials,
        seed: exp.seed,
        genie_relay: exp.genie_relay,
        passed: true,
        first_failure: None,
        redraws: 0,
        aborted: 0,
        max_recovery_error: 0.0,
        max_residual_interference: 0.0,
        max_model_mismatch: 0.0,
        max_rank_deficit: 0,
        max_relay_power_ratio: 0.0,
        max_construction: BTreeMap::new(),
        null_dim_histogram: None,
    };
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for (t, o) in outcomes.iter().enumerate() {
        let (record, redraws) = match o {
            TrialOutcome::Checked { record, redraws } => (record, *redraws),
            TrialOutcome::Aborted => {
                report.aborted += 1;
                if report.first_failure.is_none() {
                    report.first_failure = Some(FailureNote {
                        trial: t,
                        invariant: format!("degenerate channel after {MAX_REDRAWS} redraws"),
                    });
                }
                continue;
            }
        };
        report.redraws += redraws;
        report.max_recovery_error = report.max_recovery_error.max(record.recovery_error);
        report.max_residual_interference = report.max_residual_interference.max(record.residual_interference);
        report.max_model_mismatch = report.max_model_mismatch.max(record.model_mismatch);
        report.max_rank_deficit = report.max_rank_deficit.max(record.rank_deficit);
        report.max_relay_power_ratio = report.max_relay_power_ratio.max(record.relay_power_ratio);
        for (k, v) in &record.construction {
            let e = report.max_construction.entry(k.to_string()).or_insert(0.0);
            *e = e.max(*v);
        }
        if let Some(d) = record.null_dim {
            *hist.entry(d).or_insert(0) += 1;
        }
        if let (None, Some(inv)) = (&report.first_failure, record.first_failure()) {
            report.first_failure = Some(FailureNote { trial: t, invariant: inv });
        }
    }
    if !hist.is_empty() {
        report.null_dim_histogram = Some(hist.into_iter().map(|(k, v)| (k.to_string(), v)).collect());
    }
    report.passed = report.first_failure.is_none();
    report
}

fn cmd_verify(exp: &Experiment, out: &mut dyn Write) -> Result<u8, Failure> {
    let outcomes: Vec<TrialOutcome> = (0..exp.trials as u64)
        .into_par_iter()
        .map(|t| verify_trial(exp, t))
        .collect::<Result<_, _>>()
        .context("verification aborted")?;

    let report = summarize(exp, &outcomes);
    let json = serde_json::to_string_pretty(&report).context("serializing the report")? + "\n";
    out.write_all(json.as_bytes())?;
    if let Some(dir) = &exp.out {
        write_file(dir, "verify.json", &json)?;
    }
    if let Some(f) = &report.first_failure {
        eprintln!("verification failed in trial {}: {}", f.trial, f.invariant);
        return Ok(EXIT_VERIFY_FAILED);
    }
    Ok(EXIT_OK)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_sweep(exp: &Experiment, out: &mut dyn Write) -> Result<u8, Failure> {
    let cfg = DofConfig {
        scheme: exp.scheme,
        snr_grid_db: exp.snr_grid_db.clone(),
        trials: exp.trials,
        seed: exp.seed,
        h_min: exp.h_min,
        h_max: exp.h_max,
        genie_relay: exp.genie_relay,
    };
    let est = match estimate_dof(&cfg) {
        Ok(e) => e,
        Err(e @ (DofError::BadGrid | DofError::NoTrials)) => return Err(Failure::Config(e.to_string())),
        Err(DofError::Scheme(SchemeError::InvalidConfig(m))) => return Err(Failure::Config(m)),
        Err(e) => return Err(Failure::Runtime(e.into())),
    };
    let dir = exp.out.clone().unwrap_or_else(|| PathBuf::from(config::DEFAULT_OUT));
    write_file(&dir, "sweep.csv", &est.to_csv())?;
    write_file(&dir, "sweep.svg", &svg::render(&est))?;
    write_file(&dir, "dof.json", &est.to_json())?;
    info!("wrote sweep.csv, sweep.svg and dof.json to {}", dir.display());
    writeln!(
        out,
        "{}: slope {:.4} ± {:.4} (nominal {:.4}) over {} trials, {} aborted; results in {}",
        est.scheme,
        est.slope,
        est.slope_half_width,
        est.nominal_dof,
        est.trials,
        est.aborted,
        dir.display()
    )?;
    if !est.valid {
        eprintln!(
            "estimate invalid: {} of {} trials aborted after {MAX_REDRAWS} redraws",
            est.aborted, est.trials
        );
        return Ok(EXIT_INVALID_ESTIMATE);
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct LpReport {
    k: usize,
    value: f64,
    lambda: [f64; 6],
    t: [f64; 2],
    binding: Vec<String>,
    sum_bound: f64,
    per_cut: Vec<f64>,
}

fn cmd_lp(args: &LpArgs, out: &mut dyn Write) -> Result<u8, Failure> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let k = args
        .k
        .or(file.k)
        .ok_or_else(|| Failure::Config("no user count given (use --k)".into()))?;
    if k < 2 {
        return Err(Failure::Config(format!("the bound needs K >= 2 users, got {k}")));
    }
    let lp = lp_bound(k);
    let lemma = lemma1_sum_bound(k);
    let report = LpReport {
        k,
        value: lp.value,
        lambda: lp.lambda,
        t: lp.t,
        binding: lp.binding,
        sum_bound: lemma.sum_bound,
        per_cut: lemma.per_cut,
    };
    let json = serde_json::to_string_pretty(&report).context("serializing the report")?;
    writeln!(out, "{json}")?;
    Ok(EXIT_OK)
}
