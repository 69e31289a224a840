//! `ergograph`: analyses of finite-state Markov chains from the command
//! line. Loads a chain-spec JSON, dispatches to the core library, and
//! emits a self-describing JSON report (plus CSV for curve data).
//!
//! Exit codes: 0 success, 1 input/usage error, 2 negative verdict.

mod commands;
mod vectors;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use commands::{CmdError, CmdOutput};
use ergograph_core::specfile::ChainSpecFile;

const SCHEMA_VERSION: &str = "1";

#[derive(Parser)]
#[command(name = "ergograph", version, about = "Spectral gaps, drift certificates, and CLT diagnostics for Markov chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Chain spec JSON file.
    #[arg(long)]
    input: PathBuf,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Suppress the human-readable summary.
    #[arg(long)]
    quiet: bool,
    /// Master RNG seed (overridden by ERGOGRAPH_SEED).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write curve data as CSV to this path (commands with curves only).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a chain spec.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Irreducibility, period, reversibility, stationary distribution.
    Structure {
        #[command(flatten)]
        common: Common,
    },
    /// Full eigenvalue spectrum and the pole-structure check.
    Spectrum {
        #[command(flatten)]
        common: Common,
    },
    /// Spectral gap by the chosen method.
    Gap {
        #[command(flatten)]
        common: Common,
        /// eigen | contraction | gelfand
        #[arg(long, default_value = "eigen")]
        method: String,
        /// Weight for the gelfand method: rule name, @file, or inline JSON.
        #[arg(long = "V", default_value = "one")]
        v: String,
        /// Deepest matrix power for the gelfand trace.
        #[arg(long, default_value_t = 16384)]
        n_max: u64,
    },
    /// Verify or compute a drift certificate.
    Drift {
        #[command(flatten)]
        common: Common,
        #[arg(long = "V", default_value = "one")]
        v: String,
        /// Comma-separated state indices of the candidate set C.
        #[arg(long = "C")]
        c: String,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
    },
    /// Minorization certificate for a candidate small set.
    Smallset {
        #[command(flatten)]
        common: Common,
        #[arg(long = "C")]
        c: String,
        #[arg(long, default_value_t = 64)]
        m_max: usize,
    },
    /// Drift / gap equivalence report for a weight.
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long = "V", default_value = "one")]
        v: String,
    },
    /// Constructive Lyapunov synthesis for an observable.
    Synthesize {
        #[command(flatten)]
        common: Common,
        /// zero | identity | indicator-last | @file | inline JSON
        #[arg(long = "h", default_value = "zero")]
        h: String,
    },
    /// Sample a trajectory.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        start: usize,
        #[arg(long, default_value_t = 1000)]
        length: usize,
    },
    /// Exact autocorrelations with the Cauchy-Schwarz envelope.
    Autocorr {
        #[command(flatten)]
        common: Common,
        #[arg(long = "h", default_value = "indicator-last")]
        h: String,
        #[arg(long, default_value_t = 100)]
        n_max: usize,
    },
    /// Partial-sum CLT diagnostics (exact + Monte Carlo).
    Clt {
        #[command(flatten)]
        common: Common,
        #[arg(long = "h", default_value = "indicator-last")]
        h: String,
        #[arg(long, default_value = "64,128,256,512")]
        n_grid: String,
        #[arg(long, default_value_t = 2000)]
        replicates: usize,
    },
    /// Gap / drift / variance curves across truncation sizes of a family.
    TruncationStudy {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "10,20,40,80,160")]
        n_grid: String,
        /// Weight rule applied at every size: one | pow2 | linear | geometric:<b>
        #[arg(long = "V", default_value = "geometric:1.5")]
        v: String,
        /// Observable rule: zero | identity | indicator-last
        #[arg(long = "h", default_value = "identity")]
        h: String,
    },
    /// Every check in the suite on one chain, tabulated.
    ReportAll {
        #[command(flatten)]
        common: Common,
        #[arg(long = "V", default_value = "one")]
        v: String,
        #[arg(long = "h", default_value = "indicator-last")]
        h: String,
        /// Start distribution for the TV-bound row.
        #[arg(long = "mu", default_value = "delta:0")]
        mu: String,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Validate { common }
            | Command::Structure { common }
            | Command::Spectrum { common }
            | Command::Gap { common, .. }
            | Command::Drift { common, .. }
            | Command::Smallset { common, .. }
            | Command::Certify { common, .. }
            | Command::Synthesize { common, .. }
            | Command::Simulate { common, .. }
            | Command::Autocorr { common, .. }
            | Command::Clt { common, .. }
            | Command::TruncationStudy { common, .. }
            | Command::ReportAll { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Structure { .. } => "structure",
            Command::Spectrum { .. } => "spectrum",
            Command::Gap { .. } => "gap",
            Command::Drift { .. } => "drift",
            Command::Smallset { .. } => "smallset",
            Command::Certify { .. } => "certify",
            Command::Synthesize { .. } => "synthesize",
            Command::Simulate { .. } => "simulate",
            Command::Autocorr { .. } => "autocorr",
            Command::Clt { .. } => "clt",
            Command::TruncationStudy { .. } => "truncation-study",
            Command::ReportAll { .. } => "report-all",
        }
    }
}

#[derive(Serialize)]
struct Report {
    schema_version: &'static str,
    tool_version: &'static str,
    command: &'static str,
    input_digest: String,
    results: serde_json::Value,
    warnings: Vec<String>,
    /// Wall-clock time; excluded from byte-identity comparisons.
    timing_ms: f64,
}

fn error_line(kind: &str, message: &str) {
    // Single machine-parseable line on the diagnostic stream.
    let line = serde_json::json!({"error": {"kind": kind, "message": message}});
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            // clap would exit 2; usage problems are exit 1 here.
            error_line("usage", &e.to_string());
            return ExitCode::from(1);
        }
    };
    match run(&cli.command) {
        Ok(code) => code,
        Err(CmdError::Input(m)) => {
            error_line("input", &m);
            ExitCode::from(1)
        }
        Err(CmdError::Verdict(m)) => {
            error_line("verdict", &m);
            ExitCode::from(2)
        }
    }
}

fn effective_seed(common: &Common) -> Result<u64, CmdError> {
    match std::env::var("ERGOGRAPH_SEED") {
        Ok(s) => s
            .parse()
            .map_err(|_| CmdError::Input(format!("ERGOGRAPH_SEED is not an integer: {s:?}"))),
        Err(_) => Ok(common.seed),
    }
}

fn run(command: &Command) -> Result<ExitCode, CmdError> {
    let common = command.common();
    let started = Instant::now();
    let bytes = std::fs::read(&common.input).map_err(|e| {
        CmdError::Input(format!("cannot read {}: {e}", common.input.display()))
    })?;
    let input_digest = format!("{:x}", Sha256::digest(&bytes));
    let text = String::from_utf8(bytes)
        .map_err(|_| CmdError::Input("input file is not UTF-8".into()))?;
    let spec = ChainSpecFile::parse(&text)?;
    let base_dir = common
        .input
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let seed = effective_seed(common)?;

    let output = match command {
        Command::Validate { .. } => commands::validate(&spec.build()?),
        Command::Structure { .. } => commands::structure(&spec.build()?),
        Command::Spectrum { .. } => commands::spectrum(&spec.build()?)?,
        Command::Gap { method, v, n_max, .. } => {
            commands::gap(&spec.build()?, method, v, *n_max, &base_dir)?
        }
        Command::Drift { v, c, delta, b, .. } => {
            commands::drift(&spec.build()?, v, c, *delta, *b, &base_dir)?
        }
        Command::Smallset { c, m_max, .. } => commands::smallset(&spec.build()?, c, *m_max)?,
        Command::Certify { v, .. } => commands::certify(&spec.build()?, v, &base_dir)?,
        Command::Synthesize { h, .. } => commands::synthesize(&spec.build()?, h, &base_dir)?,
        Command::Simulate { start, length, .. } => {
            commands::simulate(&spec.build()?, *start, *length, seed)?
        }
        Command::Autocorr { h, n_max, .. } => {
            commands::autocorr(&spec.build()?, h, *n_max, &base_dir)?
        }
        Command::Clt { h, n_grid, replicates, .. } => {
            commands::clt(&spec.build()?, h, n_grid, *replicates, seed, &base_dir)?
        }
        Command::TruncationStudy { n_grid, v, h, .. } => {
            commands::truncation_study(&spec, n_grid, v, h, None)?
        }
        Command::ReportAll { v, h, mu, .. } => {
            commands::report_all(&spec.build()?, v, h, mu, seed, &base_dir)?
        }
    };

    emit(command.name(), common, input_digest, &output, started)?;
    Ok(if output.verdict_failed {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn emit(
    name: &'static str,
    common: &Common,
    input_digest: String,
    output: &CmdOutput,
    started: Instant,
) -> Result<(), CmdError> {
    let report = Report {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        command: name,
        input_digest,
        results: output.results.clone(),
        warnings: output.warnings.clone(),
        timing_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");

    if let (Some(path), Some(csv)) = (&common.csv, &output.csv) {
        std::fs::write(path, csv)
            .map_err(|e| CmdError::Input(format!("cannot write {}: {e}", path.display())))?;
    }

    match &common.output {
        Some(path) => {
            std::fs::write(path, format!("{json}\n"))
                .map_err(|e| CmdError::Input(format!("cannot write {}: {e}", path.display())))?;
            if !common.quiet {
                println!("{}", output.summary);
                for w in &output.warnings {
                    println!("warning: {w}");
                }
            }
        }
        None => {
            // Standard output carries the report itself; the summary moves
            // to the diagnostic stream so stdout stays machine-readable.
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{json}").map_err(|e| CmdError::Input(e.to_string()))?;
            if !common.quiet {
                eprintln!("{}", output.summary);
            }
        }
    }
    Ok(())
}
