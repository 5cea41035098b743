use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use noma_mec::channel::SystemParams;
use noma_mec::harness::{self, ExperimentConfig, ValidationReport};
use noma_mec::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

#[derive(Parser)]
#[command(name = "noma-mec", version, about = "NOMA-MEC pairing and offloading experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Check the closed-form pair solver against the grid oracle.
    ValidateSolver {
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 128)]
        resolution: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
}

fn exit_code(err: &Error) -> ExitCode {
    match err {
        Error::Config { .. } => ExitCode::from(EXIT_CONFIG),
        _ => ExitCode::from(EXIT_FAILURE),
    }
}

fn run(config: PathBuf, output_dir: Option<PathBuf>, seed: Option<u64>, threads: usize) -> Result<(), (Error, ExitCode)> {
    let mut cfg = ExperimentConfig::load(&config).map_err(|e| {
        let code = match e {
            Error::Io { .. } => ExitCode::from(EXIT_CONFIG),
            _ => exit_code(&e),
        };
        (e, code)
    })?;
    if let Some(dir) = output_dir {
        cfg.output_dir = Some(dir);
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let out = harness::run(&cfg, threads).map_err(|e| {
        let code = exit_code(&e);
        (e, code)
    })?;
    println!("wrote {} tables to {}", out.tables.len(), out.output_dir.display());
    Ok(())
}

fn validate(instances: usize, resolution: usize, seed: u64, threads: usize) -> Result<ExitCode, (Error, ExitCode)> {
    if threads == 0 {
        let e = Error::Config {
            field: "threads".into(),
            reason: "must be at least 1".into(),
        };
        return Err((e, ExitCode::from(EXIT_CONFIG)));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| (Error::Internal(format!("thread pool: {e}")), ExitCode::from(EXIT_FAILURE)))?;
    let report = harness::validate_solver(&SystemParams::default(), seed, instances, resolution).map_err(|e| {
        let code = exit_code(&e);
        (e, code)
    })?;
    println!(
        "{} instances at resolution {}: max excess {:.3e} J (limit {:.0e}), max relative gap {:.3e} (limit {})",
        report.instances,
        report.resolution,
        report.max_excess_j,
        ValidationReport::EXCESS_TOL_J,
        report.max_relative_gap,
        ValidationReport::GAP_TOL
    );
    if report.passed() {
        println!("PASS");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("FAIL");
        Ok(ExitCode::from(EXIT_VALIDATION))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            output_dir,
            seed,
            threads,
        } => run(config, output_dir, seed, threads).map(|()| ExitCode::SUCCESS),
        Command::ValidateSolver {
            instances,
            resolution,
            seed,
            threads,
        } => validate(instances, resolution, seed, threads),
    };
    match result {
        Ok(code) => code,
        Err((e, code)) => {
            eprintln!("error: {e}");
            code
        }
    }
}
