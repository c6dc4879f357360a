//! `opscale`: support tests, operator scaling, filter normal forms, square
//! lifts and block certificates from JSON files.

mod batch;
mod commands;
mod files;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Result};
use clap::{Args, Parser, Subcommand};
use opscale_core::scaling::DEFAULT_MAX_ITER;
use opscale_core::{ScalingOptions, Tolerances};
use serde_json::{json, Map, Value};

use commands::{Context, Outcome, Task, EXIT_VALIDATION};

const SEED_ENV: &str = "OPSCALE_SEED";

#[derive(Debug, Parser)]
#[command(name = "opscale", version, about = "Operator scaling of positive maps")]
struct Cli {
    /// Seed for sampled checks; OPSCALE_SEED takes precedence when set.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Convergence tolerance on the scaling residuals.
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,
    /// Relative threshold for numerical rank.
    #[arg(long, global = true, default_value_t = 1e-9)]
    rank_rel: f64,
    /// Smallest eigenvalue accepted as positive definite.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pd_min: f64,
    /// Run the subcommand on every .json file in this directory.
    #[arg(long, global = true, value_name = "DIR")]
    batch: Option<PathBuf>,
    /// Where batch reports go (default: <DIR>/reports).
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Worker threads for batch mode.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ScalingArgs {
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Log-determinant growth that counts as divergence (default 50·k·m).
    #[arg(long)]
    divergence: Option<f64>,
}

impl ScalingArgs {
    fn options(&self) -> ScalingOptions {
        ScalingOptions { max_iter: self.max_iter, divergence_logdet: self.divergence }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Support and total support of a nonnegative matrix.
    Support {
        path: Option<PathBuf>,
        #[arg(long)]
        total: bool,
        /// Cross-check against the brute-force oracle (k·m ≤ 16).
        #[arg(long)]
        oracle: bool,
        /// Entries at or below this value count as zero.
        #[arg(long)]
        zero_eps: Option<f64>,
    },
    /// Scale a positive map towards a doubly stochastic one.
    Scale {
        path: Option<PathBuf>,
        #[command(flatten)]
        scaling: ScalingArgs,
        /// Write the per-iteration history here.
        #[arg(long, value_name = "FILE")]
        history: Option<PathBuf>,
    },
    /// Filter normal form of a bipartite state.
    Fnf {
        path: Option<PathBuf>,
        #[command(flatten)]
        scaling: ScalingArgs,
        /// Prefix for the output files (default: the input path minus .json).
        #[arg(long, value_name = "PREFIX")]
        out: Option<PathBuf>,
    },
    /// Square lift of a map from M_k to M_m onto M_km.
    Tilde {
        path: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Scale both the map and its lift and compare verdicts.
        #[arg(long)]
        check: bool,
        #[command(flatten)]
        scaling: ScalingArgs,
    },
    /// Check a block certificate against a map.
    Certificate {
        map: PathBuf,
        cert: PathBuf,
        /// Tolerance for the invariance and direct-sum checks.
        #[arg(long, default_value_t = 1e-8)]
        cert_tol: f64,
    },
    /// Run the built-in fixture suite.
    Selftest,
}

fn resolve_seed(flag: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s.trim().parse().map_err(|_| anyhow!("{SEED_ENV}={s:?} is not an unsigned integer")),
        Err(std::env::VarError::NotPresent) => Ok(flag),
        Err(e) => bail!("{SEED_ENV}: {e}"),
    }
}

fn header(ctx: &Context, command: &str, inputs: &[&Path]) -> Map<String, Value> {
    let mut h = Map::new();
    h.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    h.insert("seed".into(), json!(ctx.seed));
    h.insert("tolerances".into(), serde_json::to_value(ctx.tol).expect("plain data"));
    h.insert("command".into(), json!(command));
    let names: Vec<String> = inputs.iter().map(|p| p.display().to_string()).collect();
    h.insert("input".into(), if names.len() == 1 { json!(names[0]) } else { json!(names) });
    h
}

/// Writes the outcome's side files and prefixes its report with the header.
fn finish(ctx: &Context, command: &str, inputs: &[&Path], outcome: Outcome) -> (u8, Value) {
    let mut report = header(ctx, command, inputs);
    let mut code = outcome.code;
    let mut write_errors = Vec::new();
    for (path, value) in &outcome.files {
        let mut value = value.clone();
        if let Value::Object(body) = &mut value {
            if path.to_string_lossy().ends_with(".report.json") {
                let mut full = header(ctx, command, inputs);
                full.extend(std::mem::take(body));
                *body = full;
            }
        }
        if let Err(e) = files::write_json_atomic(path, &value) {
            write_errors.push(format!("{e:#}"));
        }
    }
    report.insert("exit_code".into(), json!(code));
    report.extend(outcome.report);
    if !write_errors.is_empty() {
        code = EXIT_VALIDATION;
        report.insert("exit_code".into(), json!(code));
        report.insert("error".into(), json!(write_errors.join("; ")));
    }
    (code, Value::Object(report))
}

fn task_from(command: &Command) -> Option<(Task, Option<&Path>)> {
    Some(match command {
        Command::Support { path, total, oracle, zero_eps } => {
            (Task::Support { total: *total, oracle: *oracle, zero_eps: *zero_eps }, path.as_deref())
        }
        Command::Scale { path, scaling, history } => {
            (Task::Scale { opts: scaling.options(), history: history.clone() }, path.as_deref())
        }
        Command::Fnf { path, scaling, out } => {
            (Task::Fnf { opts: scaling.options(), out: out.clone() }, path.as_deref())
        }
        Command::Tilde { path, out, check, scaling } => {
            (Task::Tilde { opts: scaling.options(), out: out.clone(), check: *check }, path.as_deref())
        }
        Command::Certificate { .. } | Command::Selftest => return None,
    })
}

/// Prints a report; a closed stdout is not an error.
fn print(value: &Value) {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn execute(cli: &Cli) -> Result<u8> {
    let tol = Tolerances { rank_rel: cli.rank_rel, pd_min: cli.pd_min, conv_eps: cli.tol };
    tol.validate()?;
    let ctx = Context { seed: resolve_seed(cli.seed)?, tol };

    if let Some(dir) = &cli.batch {
        let (task, path) = task_from(&cli.command).ok_or_else(|| anyhow!("--batch works with support, scale, fnf and tilde"))?;
        if path.is_some() {
            bail!("give either an input path or --batch, not both");
        }
        let out_dir = cli.out_dir.clone().unwrap_or_else(|| dir.join("reports"));
        let jobs = cli.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        let name = task.name();
        let done = batch::run(&ctx, &task, dir, &out_dir, jobs, |input, outcome| finish(&ctx, name, &[input], outcome))?;
        print(&done.summary);
        return Ok(done.code);
    }

    let (name, inputs, outcome): (&str, Vec<&Path>, Outcome) = match &cli.command {
        Command::Certificate { map, cert, cert_tol } => {
            let outcome = commands::certificate(&ctx, map, cert, *cert_tol).unwrap_or_else(|e| Outcome::validation_error(&e));
            ("certificate", vec![map.as_path(), cert.as_path()], outcome)
        }
        Command::Selftest => ("selftest", Vec::new(), commands::selftest(&ctx)),
        other => {
            let (task, path) = task_from(other).expect("single-input subcommand");
            let path = path.ok_or_else(|| anyhow!("missing input path (or use --batch DIR)"))?;
            (task.name(), vec![path], commands::run_task(&ctx, &task, path))
        }
    };
    let (code, report) = finish(&ctx, name, &inputs, outcome);
    print(&report);
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            print(&json!({ "error": format!("{e:#}"), "exit_code": EXIT_VALIDATION }));
            eprintln!("opscale: {e:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}
