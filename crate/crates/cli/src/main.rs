use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};
use wfduality::output::BUILD;
use wfduality::{execute, ExperimentConfig, Payload, ResultEnvelope};

#[derive(Parser)]
#[command(name = "wfduality", version, about = "Wright-Fisher duality experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write result.json and CSV tables.
    Run {
        config: PathBuf,
        /// Output directory; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; overrides the config.
        #[arg(long, env = "WFDUALITY_WORKERS")]
        workers: Option<usize>,
        /// Seed; overrides the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a config without simulating.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> anyhow::Result<bool> {
    match command {
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("OK {} ({})", cfg.experiment.kind(), config.display());
            Ok(true)
        }
        Command::Run { config, out, workers, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(dir) = out {
                cfg.output.dir = dir;
            }
            let workers = workers.or(cfg.workers).unwrap_or_else(|| {
                std::thread::available_parallelism().map_or(1, |n| n.get())
            });
            if workers == 0 {
                anyhow::bail!("workers must be positive");
            }
            cfg.workers = Some(workers);
            let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
            let started = Instant::now();
            let outcome = pool.install(|| execute(&cfg))?;
            let wall_time_s = started.elapsed().as_secs_f64();
            let dir = cfg.output.dir.clone();
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            for table in &outcome.tables {
                table.write(&dir)?;
            }
            let envelope = ResultEnvelope {
                payload: Payload {
                    files: outcome.tables.iter().map(|t| t.file_name()).collect(),
                    config: cfg,
                    build: BUILD,
                    metrics: outcome.metrics,
                    verdicts: outcome.verdicts,
                    report: outcome.report,
                },
                wall_time_s,
            };
            envelope.write(&dir)?;
            for v in envelope.payload.verdicts.iter().filter(|v| !v.passed) {
                eprintln!("FAIL {}: statistic {} threshold {}", v.name, v.statistic, v.threshold);
            }
            println!("{} -> {}", envelope.payload.config.experiment.kind(), dir.join("result.json").display());
            Ok(envelope.passed())
        }
    }
}
