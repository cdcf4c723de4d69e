use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use kgreen_cli::config::{parse_with_overrides, resolve};
use kgreen_cli::{bundled_scenario, tasks, AppError, BUNDLED_NAMES};

/// Reciprocal-space electrodynamics of dispersive media: scenario runner.
#[derive(Parser, Debug)]
#[command(name = "kgreen", version, about)]
struct Args {
    /// Scenario file path, or `bundled:NAME` (vacuum, lorentz, born_weak,
    /// conductor).
    #[arg(long)]
    config: String,

    /// Override the scenario's task (selftest, kernel-scan, dispersion,
    /// propagate).
    #[arg(long)]
    task: Option<String>,

    /// Output directory for tables and summary.json.
    #[arg(long, default_value = "out")]
    output: PathBuf,

    /// Dot-path config overrides, e.g. `--override time.n_steps=400`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Worker threads for the spectral loops (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn run(args: &Args) -> Result<bool, AppError> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| AppError::Config(format!("thread pool: {e}")))?;
    }

    let (text, base_dir) = match args.config.strip_prefix("bundled:") {
        Some(name) => {
            let text = bundled_scenario(name).ok_or_else(|| {
                AppError::Config(format!(
                    "no bundled scenario `{name}`; available: {}",
                    BUNDLED_NAMES.join(", ")
                ))
            })?;
            (text.to_string(), PathBuf::from("."))
        }
        None => {
            let path = PathBuf::from(&args.config);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
            let base = path.parent().map(PathBuf::from).unwrap_or_default();
            (text, base)
        }
    };

    let mut overrides = args.overrides.clone();
    if let Some(task) = &args.task {
        overrides.push(format!("task=\"{task}\""));
    }
    let spec = parse_with_overrides(&text, &overrides)?;
    let resolved = resolve(&spec, &base_dir)?;
    let summary = tasks::run(&resolved, &args.output)?;
    println!(
        "task {} finished: {} checks, {}",
        summary.task,
        summary.checks.len(),
        if summary.all_passed {
            "all passed"
        } else {
            "FAILURES"
        }
    );
    Ok(summary.all_passed)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
