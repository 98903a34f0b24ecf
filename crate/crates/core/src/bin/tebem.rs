//! Command-line front end: configuration loading, flag overrides, and exit
//! codes. All computation lives in the library; this binary only wires the
//! pieces together.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tebem::config::RunConfig;
use tebem::runner::{
    self, cmd_beyn, cmd_cache_clear, cmd_cache_list, cmd_mesh_info, cmd_oracle, cmd_scan,
    cmd_verify, RunnerError,
};

#[derive(Parser)]
#[command(name = "tebem", version, about = "Boundary-element transmission eigenvalue solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flag overrides applied on top of the config file (flags win).
#[derive(Args, Clone)]
struct Overrides {
    /// Path to the TOML run configuration.
    #[arg(long, short = 'c')]
    config: PathBuf,
    /// Override the contrast n.
    #[arg(long)]
    n: Option<f64>,
    /// Override the icosphere subdivision level.
    #[arg(long)]
    level: Option<u32>,
    /// Override the scan window minimum.
    #[arg(long)]
    k_min: Option<f64>,
    /// Override the scan window maximum.
    #[arg(long)]
    k_max: Option<f64>,
    /// Override the scan step count.
    #[arg(long)]
    steps: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override the cache directory.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Override the worker-pool size (0 = automatic).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Print a JSON summary of the configured geometry.
    MeshInfo(Overrides),
    /// Sweep sigma_min over the scan window and emit candidates.
    Scan(Overrides),
    /// Run the contour-integral eigenvalue search.
    Beyn(Overrides),
    /// Export sphere reference roots as JSON.
    Oracle(Overrides),
    /// Run the property checks and write a pass/fail report.
    Verify(Overrides),
    /// Inspect or clear the matrix cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    /// List cache entries as JSON.
    List {
        /// Cache directory (default: env override or .tebem-cache).
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Delete all cache entries.
    Clear {
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

fn load_config(overrides: &Overrides) -> Result<RunConfig, RunnerError> {
    let mut config = RunConfig::from_path(&overrides.config)?;
    if let Some(n) = overrides.n {
        config.n = n;
    }
    if let Some(level) = overrides.level {
        config.geometry.level = Some(level);
    }
    if let Some(scan) = config.scan.as_mut() {
        if let Some(k_min) = overrides.k_min {
            scan.k_min = k_min;
        }
        if let Some(k_max) = overrides.k_max {
            scan.k_max = k_max;
        }
        if let Some(steps) = overrides.steps {
            scan.steps = steps;
        }
    }
    if let Some(dir) = &overrides.output_dir {
        config.output_dir = dir.clone();
    }
    if let Some(dir) = &overrides.cache_dir {
        config.cache_dir = Some(dir.clone());
    }
    if let Some(workers) = overrides.workers {
        config.workers = workers;
    }
    config.validate()?;
    if config.workers > 0 {
        // Ignore the error if a pool already exists (e.g. repeated calls).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build_global();
    }
    Ok(config)
}

fn run() -> Result<i32, RunnerError> {
    let cli = Cli::parse();
    match cli.command {
        Command::MeshInfo(o) => {
            let info = cmd_mesh_info(&load_config(&o)?)?;
            println!("{}", serde_json::to_string_pretty(&info).unwrap());
            Ok(runner::EXIT_OK)
        }
        Command::Scan(o) => {
            let artifacts = cmd_scan(&load_config(&o)?)?;
            eprintln!(
                "scan: {} candidate(s), artifacts in {}",
                artifacts.candidates.len(),
                artifacts.scan_csv.parent().unwrap_or(std::path::Path::new(".")).display()
            );
            Ok(artifacts.exit_code)
        }
        Command::Beyn(o) => {
            let artifacts = cmd_beyn(&load_config(&o)?)?;
            eprintln!("beyn: {} candidate(s)", artifacts.candidates.len());
            Ok(artifacts.exit_code)
        }
        Command::Oracle(o) => {
            let path = cmd_oracle(&load_config(&o)?)?;
            eprintln!("oracle roots written to {}", path.display());
            Ok(runner::EXIT_OK)
        }
        Command::Verify(o) => {
            let (path, code) = cmd_verify(&load_config(&o)?)?;
            eprintln!("verify report written to {}", path.display());
            Ok(code)
        }
        Command::Cache { action } => match action {
            CacheAction::List { dir } => {
                let dir = tebem::cache::resolve_dir(dir.as_deref());
                println!(
                    "{}",
                    serde_json::to_string_pretty(&cmd_cache_list(&dir)).unwrap()
                );
                Ok(runner::EXIT_OK)
            }
            CacheAction::Clear { dir } => {
                let dir = tebem::cache::resolve_dir(dir.as_deref());
                let removed = cmd_cache_clear(&dir)?;
                eprintln!("removed {removed} cache file(s)");
                Ok(runner::EXIT_OK)
            }
        },
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
