//! Batch experiment runner: every verifier and generator in the library is
//! reachable from here with reproducible seeds and machine-readable reports.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 a search budget ran
//! out, 3 usage error. Reports are JSON with one non-deterministic field
//! (`timestamp`) kept at the top level so the rest re-runs byte-identically.

mod artifacts;
mod verify;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "ksplit",
    version,
    about = "finite splitting and indiscernibility checks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a named verification campaign.
    Verify(VerifyCmd),
    /// Build a structure file from one of the generators.
    Generate(artifacts::GenerateCmd),
    /// Extract an end-homogeneous subsequence from a structure file.
    Extract(artifacts::ExtractCmd),
}

#[derive(Args)]
struct VerifyCmd {
    #[command(subcommand)]
    target: verify::Target,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct Common {
    /// Campaign name echoed in the report (defaults to the target name).
    #[arg(long, global = true)]
    name: Option<String>,
    /// Report or structure output path; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for every random draw in the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Step cap shared by each search the campaign runs.
    #[arg(long, global = true, default_value_t = 200_000_000)]
    budget: u64,
    /// Run independent stages concurrently (report assembly stays ordered).
    #[arg(long, global = true)]
    parallel: bool,
}

/// Everything below `timestamp` must be a pure function of the arguments.
#[derive(Serialize)]
struct Report {
    timestamp: u64,
    name: String,
    target: String,
    seed: u64,
    params: Value,
    pass: bool,
    body: Value,
}

fn now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn emit(out: &Option<PathBuf>, text: &str) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text),
        None => std::io::stdout().write_all(text.as_bytes()),
    }
}

fn finish(common: &Common, target: &str, params: Value, pass: bool, body: Value) -> ExitCode {
    let report = Report {
        timestamp: now(),
        name: common.name.clone().unwrap_or_else(|| target.to_string()),
        target: target.to_string(),
        seed: common.seed,
        params,
        pass,
        body,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    if let Err(e) = emit(&common.out, &text) {
        eprintln!("ksplit: cannot write report: {e}");
        return ExitCode::from(3);
    }
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn fail_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<ksplit_core::Error>() {
        Some(ksplit_core::Error::BudgetExceeded { .. }) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.cmd {
        Cmd::Verify(v) => {
            let target = v.target.name();
            let params = v.target.params_echo();
            match verify::run(&v.target, &v.common) {
                Ok((pass, body)) => return finish(&v.common, target, params, pass, body),
                Err(e) => Err(e),
            }
        }
        Cmd::Generate(g) => artifacts::generate(&g).map(|_| ()),
        Cmd::Extract(x) => match artifacts::extract(&x) {
            Ok((pass, body)) => {
                let params =
                    json!({"file": x.file, "k": x.width(), "base": x.base, "sort": x.sort});
                return finish(&x.common, "extract", params, pass, body);
            }
            Err(e) => Err(e),
        },
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ksplit: {e}");
            ExitCode::from(fail_code(&e))
        }
    }
}
