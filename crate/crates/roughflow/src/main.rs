//! Batch experiment runner. Configs are JSON files (the reproducibility
//! artifact); flags only steer where output goes and how many threads
//! run. Exit codes: 0 success, 2 validation error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use roughflow::config::ExperimentConfig;
use roughflow::error::{Error, Result};
use roughflow::experiment::run_experiment;

const EXAMPLES: &[(&str, &str, &str)] = &[
    (
        "translation.json",
        "pure translation along a scaled fractional driver; third-order residual slope",
        include_str!("../fixtures/translation.json"),
    ),
    (
        "bounded_drift.json",
        "sine drift plus fractional driver; third-order residual slope",
        include_str!("../fixtures/bounded_drift.json"),
    ),
    (
        "duality_sweep.json",
        "duality bound against mollified comparison fields; rhs decreases with epsilon",
        include_str!("../fixtures/duality_sweep.json"),
    ),
    (
        "fbm_h03.json",
        "rough fractional sample with a Monte Carlo covariance check",
        include_str!("../fixtures/fbm_h03.json"),
    ),
    (
        "irregularity_line.json",
        "occupation-measure functional of a straight line; argmax at the top frequency",
        include_str!("../fixtures/irregularity_line.json"),
    ),
    (
        "flow_rotation.json",
        "planar rotation flow along a 2d Brownian driver with variational derivative",
        include_str!("../fixtures/flow_rotation.json"),
    ),
    (
        "convergence_integral.json",
        "compensated-integral error at dyadic resolutions; slope about 2",
        include_str!("../fixtures/convergence_integral.json"),
    ),
];

#[derive(Parser)]
#[command(
    name = "roughflow",
    version,
    about = "Numerical experiments for transport equations driven by irregular signals"
)]
struct Cli {
    /// Cap worker threads (also via ROUGHFLOW_THREADS). Results do not
    /// depend on the thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Progress chatter on stderr.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config; writes report.json and CSV artifacts.
    Run {
        /// Path to the JSON experiment file.
        config: PathBuf,
        /// Output directory. Default: the config's `output` field, else
        /// `<config stem>-out` next to the working directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Parse and validate a config without running anything.
    Validate {
        /// Path to the JSON experiment file.
        config: PathBuf,
    },
    /// List the embedded example configs, optionally exporting them.
    ListExamples {
        /// Write the examples as files into this directory.
        #[arg(long)]
        export: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Run { config, output } => run(&config, output, cli.verbose),
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!("ok: {} ({})", config.display(), cfg.kind());
            Ok(())
        }
        Command::ListExamples { export } => list_examples(export),
    }
}

fn init_threads(flag: Option<usize>) -> Result<()> {
    let threads = match flag {
        Some(n) => Some(n),
        None => match std::env::var("ROUGHFLOW_THREADS") {
            Ok(v) => Some(v.parse::<usize>().map_err(|_| {
                Error::Config(format!("ROUGHFLOW_THREADS must be a thread count, got {v:?}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("thread count must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}

fn run(config_path: &Path, output: Option<PathBuf>, verbose: bool) -> Result<()> {
    let bytes = std::fs::read(config_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let text = String::from_utf8_lossy(&bytes);
    let cfg = ExperimentConfig::from_json(&text)?;
    let out_dir = output
        .or_else(|| cfg.output().map(PathBuf::from))
        .unwrap_or_else(|| {
            let stem = config_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "experiment".into());
            PathBuf::from(format!("{stem}-out"))
        });
    if verbose {
        eprintln!("running {} experiment into {}", cfg.kind(), out_dir.display());
    }
    let report = run_experiment(&cfg, &bytes, &out_dir)?;
    std::fs::write(out_dir.join("report.json"), report.to_json())?;
    if verbose {
        for (k, v) in &report.scalars {
            eprintln!("  {k} = {v}");
        }
    }
    println!("{}", out_dir.join("report.json").display());
    Ok(())
}

fn list_examples(export: Option<PathBuf>) -> Result<()> {
    for (name, about, _) in EXAMPLES {
        println!("{name:<28} {about}");
    }
    if let Some(dir) = export {
        std::fs::create_dir_all(&dir)?;
        for (name, _, body) in EXAMPLES {
            std::fs::write(dir.join(name), body)?;
        }
        println!("exported {} configs to {}", EXAMPLES.len(), dir.display());
    }
    Ok(())
}
