//! `frame-forge run <config>`, `frame-forge selftest`, `frame-forge schema`.
//!
//! Exit codes: 0 success, 1 input error, 2 certification refusal.

mod config;
mod run;
mod selftest;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::ExperimentConfig;

/// Thread count for the parallel sweep cells; the only environment variable read.
const THREADS_VAR: &str = "FRAME_FORGE_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("input error: {0}")]
    Input(String),
    #[error("{0}")]
    Refusal(String),
}

impl RunError {
    fn exit_code(&self) -> u8 {
        match self {
            RunError::Input(_) => 1,
            RunError::Refusal(_) => 2,
        }
    }
}

impl From<frame_forge::Error> for RunError {
    fn from(e: frame_forge::Error) -> Self {
        use frame_forge::Error::*;
        match e {
            SingularFiber { .. } | RankDeficient { .. } => RunError::Refusal(format!("certification refused: {e}")),
            EnvelopeViolation { .. } => RunError::Input(format!("declared envelope does not bound the atoms: {e}")),
            NotACovering { .. } => RunError::Input(format!("covering check failed: {e}")),
            _ => RunError::Input(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "frame-forge", version, about = "Desk-scale frame surgery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output.dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in invariant checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the JSON schema of experiment configs.
    Schema,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Run { config, out } => run_config(&config, out),
        Command::Selftest { seed } => selftest(seed),
        Command::Schema => {
            let schema = schemars::schema_for!(ExperimentConfig);
            let text = serde_json::to_string_pretty(&schema).expect("schema serializes");
            // A closed pipe (e.g. piping into `head`) is not an error.
            let _ = writeln!(std::io::stdout(), "{text}");
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("frame-forge: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn configure_threads() -> Result<(), RunError> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| RunError::Input(format!("{THREADS_VAR} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| RunError::Input(format!("{THREADS_VAR}: {e}")))
}

fn selftest(seed: u64) -> Result<(), RunError> {
    let report = selftest::run(seed);
    for row in &report.rows {
        println!("{:<24} {:>12} <= {:<8} {}", row[0], row[1], row[2], if row[3] == "true" { "ok" } else { "FAIL" });
    }
    let failed = report.rows.iter().filter(|r| r[3] != "true").count();
    if failed > 0 {
        return Err(RunError::Input(format!("{failed} invariant checks failed")));
    }
    Ok(())
}

fn run_config(path: &Path, out: Option<PathBuf>) -> Result<(), RunError> {
    let config = ExperimentConfig::load(path)?;
    let dir = out
        .or_else(|| config.output().dir.clone())
        .unwrap_or_else(|| PathBuf::from("frame-forge-out"));
    let report = run::execute(&config)?;
    let kind = config.kind();
    std::fs::create_dir_all(&dir).map_err(|e| RunError::Input(format!("cannot create {}: {e}", dir.display())))?;
    let csv_path = dir.join(format!("{kind}.csv"));
    write_csv(&csv_path, &report)?;
    let manifest = json!({
        "tool": "frame-forge",
        "library_version": frame_forge::VERSION,
        "cli_version": env!("CARGO_PKG_VERSION"),
        "kind": kind,
        "config": config,
        "columns": report.header,
        "csv": csv_path.file_name().map(|n| n.to_string_lossy().into_owned()),
        "fitted": report.fitted,
        "refusal": report.refusal,
    });
    let manifest_path = dir.join(format!("{kind}.manifest.json"));
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&manifest_path, text)
        .map_err(|e| RunError::Input(format!("cannot write {}: {e}", manifest_path.display())))?;
    println!("wrote {} and {}", csv_path.display(), manifest_path.display());
    if kind == "selftest" && report.rows.iter().any(|r| r[3] != "true") {
        return Err(RunError::Input("invariant checks failed".into()));
    }
    match report.refusal {
        Some(reason) => Err(RunError::Refusal(reason)),
        None => Ok(()),
    }
}

fn write_csv(path: &Path, report: &run::Report) -> Result<(), RunError> {
    let io = |e: csv::Error| RunError::Input(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(&report.header).map_err(io)?;
    for row in &report.rows {
        w.write_record(row).map_err(io)?;
    }
    w.flush().map_err(|e| RunError::Input(format!("cannot write {}: {e}", path.display())))
}
