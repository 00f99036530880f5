//! Argument parsing and the exit-code contract: 0 success, 1 config
//! error, 2 not hyperbolic, 3 expanding, 4 check failure.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use toral_core::linear::{classify, IntMatrix2, LinearError};

use crate::config::{Check, LabConfig};
use crate::merge::{merge_reports, write_merged};
use crate::verify::{output_dir, run_verify, Overrides, VerifyError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NOT_HYPERBOLIC: i32 = 2;
pub const EXIT_EXPANDING: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "toral-lab", version, about = "Verification suites for DA endomorphisms of the 2-torus")]
pub struct Cli {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (0: one per core).
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the spectral data of a 2×2 integer matrix as JSON.
    Spectrum {
        /// Row-major entries `a,b,c,d`.
        #[arg(long, value_parser = parse_matrix, allow_hyphen_values = true)]
        matrix: IntMatrix2,
    },
    /// Run a verification suite from a JSON config.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Restrict to the named checks (repeatable).
        #[arg(long = "check", value_parser = parse_check)]
        checks: Vec<Check>,
    },
    /// Merge report.json files (or their directories) into one table.
    Merge { reports: Vec<PathBuf> },
}

fn parse_matrix(s: &str) -> Result<IntMatrix2, String> {
    let v: Vec<i64> = s
        .split(',')
        .map(|t| t.trim().parse::<i64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [a, b, c, d] => Ok(IntMatrix2::new(a, b, c, d)),
        _ => Err(format!("expected 4 comma-separated entries, got {}", v.len())),
    }
}

fn parse_check(s: &str) -> Result<Check, String> {
    Check::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Check::ALL.iter().map(|c| c.as_str()).collect();
        format!("unknown check {s:?}; expected one of {}", names.join(", "))
    })
}

fn linear_exit(e: &LinearError) -> i32 {
    match e {
        LinearError::NonHyperbolic => EXIT_NOT_HYPERBOLIC,
        LinearError::Expanding => EXIT_EXPANDING,
        _ => EXIT_CONFIG,
    }
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("LAB_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Runs the CLI on `args` (including the program name); returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Spectrum { matrix } => match classify(matrix) {
            Ok(s) => {
                println!("{}", serde_json::to_string_pretty(&s).expect("spectral data serializes"));
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                linear_exit(&e)
            }
        },
        Command::Verify { config, checks } => {
            let mut cfg = match LabConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_CONFIG;
                }
            };
            Overrides { seed: cli.seed, out: cli.out, parallelism: cli.parallelism, checks }.apply(&mut cfg);
            match run_verify(&cfg) {
                Ok(r) => {
                    for c in &r.checks {
                        let verdict = c.verdict.as_deref().map(|v| format!(" [{v}]")).unwrap_or_default();
                        println!("{:<15} {:?}{verdict}", c.name, c.status);
                    }
                    println!("report: {}", output_dir(&cfg).join("report.json").display());
                    if r.passed {
                        EXIT_OK
                    } else {
                        eprintln!("failed checks: {}", r.failed_checks().join(", "));
                        EXIT_CHECK_FAILED
                    }
                }
                Err(VerifyError::Config(e)) => {
                    eprintln!("error: {e}");
                    e.linear().map_or(EXIT_CONFIG, linear_exit)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_CONFIG
                }
            }
        }
        Command::Merge { reports } => {
            let out = cli.out.unwrap_or_else(|| PathBuf::from("lab-merged"));
            match merge_reports(&reports).and_then(|m| write_merged(&m, &out).map(|_| m)) {
                Ok(m) => {
                    println!("merged {} reports into {}", m.models.len(), out.display());
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_CONFIG
                }
            }
        }
    }
}
