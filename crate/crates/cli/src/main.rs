mod config;
mod jobs;
mod vtk;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "fdlm", version, about = "Fictitious-domain FSI solver with a distributed Lagrange multiplier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the job described by a key = value configuration file.
    Run {
        config: PathBuf,
        /// Output directory (overrides `out_dir` in the configuration).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Run the invariant self-test suite.
    Check,
}

const EXIT_PARSE: u8 = 2;
const EXIT_MODEL: u8 = 3;
const EXIT_RUNTIME: u8 = 1;

fn configure_threads() {
    if let Some(n) = std::env::var("FDLM_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn run(config: PathBuf, out: Option<PathBuf>, quiet: bool) -> ExitCode {
    let text = match std::fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config.display());
            return ExitCode::from(EXIT_PARSE);
        }
    };
    let cfg = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(EXIT_PARSE);
        }
    };
    let out = out.or_else(|| cfg.out_dir.clone()).unwrap_or_else(jobs::default_out_dir);
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    let start = Instant::now();
    let outcome = jobs::execute(&cfg, &out, quiet);
    let manifest = jobs::manifest(&cfg, &outcome, start.elapsed().as_secs_f64(), &out);
    let mpath = out.join("manifest.txt");
    if let Err(e) = std::fs::write(&mpath, manifest) {
        eprintln!("error: cannot write {}: {e}", mpath.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    match outcome.result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error during {}: {e}", outcome.stage.name());
            ExitCode::from(if e.is_model_error() { EXIT_MODEL } else { EXIT_RUNTIME })
        }
    }
}

fn check() -> ExitCode {
    let results = fdlm_core::selfcheck::run_all();
    for r in &results {
        println!("{r}");
    }
    if results.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    configure_threads();
    match Cli::parse().command {
        Command::Run { config, out, quiet } => run(config, out, quiet),
        Command::Check => check(),
    }
}
