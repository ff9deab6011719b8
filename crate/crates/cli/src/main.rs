mod args;
mod commands;
mod provenance;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::json;
use wsi_triage::{Error, ErrorCategory};

use args::{Cli, Command, ReplayArgs};
use provenance::{artifact, digest, read_json, write_json, RunRecord, RUN_FILE};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_INVARIANT: u8 = 4;
const EXIT_NUMERIC: u8 = 5;

enum Failure {
    Usage(String),
    Core(Error),
    /// Replay finished but some artifacts differ.
    Mismatch(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error[usage]: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Core(e)) => {
            let cat = e.category();
            eprintln!("error[{}]: {e}", cat.as_str());
            ExitCode::from(match cat {
                ErrorCategory::Io => EXIT_IO,
                ErrorCategory::Invariant => EXIT_INVARIANT,
                ErrorCategory::Numeric => EXIT_NUMERIC,
            })
        }
        Err(Failure::Mismatch(paths)) => {
            eprintln!("error[invariant]: replay differs in {}", paths.join(", "));
            ExitCode::from(EXIT_INVARIANT)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.threads == 0 {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot start {} threads: {e}", cli.threads)))?;
    let argv: Vec<String> = std::env::args().collect();
    let start = Instant::now();
    let mut command = cli.command;
    let (artifacts, config) = match &command {
        Command::Replay(r) => (replay(r, &cli.out_dir)?, command.clone()),
        _ => {
            commands::canonicalize_inputs(&mut command)?;
            (commands::execute(&command, cli.seed, cli.threads, &cli.out_dir)?, command)
        }
    };
    let record = RunRecord {
        tool: "wsi-triage".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: config.name().into(),
        argv,
        seed: cli.seed,
        threads: cli.threads,
        config,
        artifacts,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    write_json(&cli.out_dir.join(RUN_FILE), &record)?;
    Ok(())
}

/// Re-executes a recorded run into `out` and checks every deterministic
/// artifact against its recorded digest.
fn replay(r: &ReplayArgs, out: &Path) -> Result<Vec<provenance::Artifact>, Failure> {
    let recorded: RunRecord = read_json(&r.run)?;
    if matches!(recorded.config, Command::Replay(_)) {
        return Err(Failure::Usage("cannot replay a replay record".into()));
    }
    let original_dir = r.run.parent().unwrap_or(Path::new("."));
    if same_dir(original_dir, out) {
        return Err(Failure::Usage("replay needs an output directory other than the recorded one".into()));
    }
    let fresh = commands::execute(&recorded.config, recorded.seed, recorded.threads, out)?;
    let mut checks = Vec::new();
    let mut mismatched = Vec::new();
    for a in recorded.artifacts.iter().filter(|a| a.deterministic) {
        let now = digest(&out.join(&a.path)).ok();
        let same = now.as_deref() == Some(a.sha256.as_str());
        if !same {
            mismatched.push(a.path.display().to_string());
        }
        checks.push(json!({ "path": a.path, "recorded": a.sha256, "replayed": now, "identical": same }));
    }
    let skipped: Vec<_> = recorded.artifacts.iter().filter(|a| !a.deterministic).map(|a| &a.path).collect();
    write_json(&out.join("replay.json"), &json!({ "checked": checks, "skipped_nondeterministic": skipped }))?;
    if !mismatched.is_empty() {
        return Err(Failure::Mismatch(mismatched));
    }
    println!("replay identical: {} artifacts checked, {} skipped", checks.len(), skipped.len());
    let mut arts = fresh;
    arts.push(artifact(out, "replay.json", true)?);
    Ok(arts)
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (std::fs::canonicalize(a), std::fs::canonicalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}
