use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use log::info;

use mogd_core::data::{prepare_dataset, synth_dataset, write_prices};
use mogd_core::experiment::{
    compare_report, export_front, metrics_report, ExperimentConfig, MetricsReport, SynthDataConfig,
};
use mogd_core::pareto::write_front_csv;
use mogd_core::Error;

/// Multi-objective gradient descent experiments and Pareto front reports.
#[derive(Debug, Parser)]
#[command(name = "mogd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the vanilla and adamized sweeps described by a JSON config.
    Run {
        config: PathBuf,
        /// Base seed for data generation and every run.
        #[arg(long)]
        seed: u64,
        /// Maximum runs executed in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Hypervolume and spacing of one front; coverage both ways for two.
    Metrics {
        front: PathBuf,
        other: Option<PathBuf>,
        /// Also write the report as JSON (`-` for stdout).
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Compare the merged fronts of two variant directories.
    Compare {
        first: PathBuf,
        second: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Merge run fronts into one non-dominated front sorted by the first axis.
    ExportFront {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Generate a synthetic ratings dataset with prices and split artifacts.
    SynthData {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn emit(report: &MetricsReport, json: Option<&Path>) -> Result<(), Error> {
    print!("{}", report.render_table());
    match json {
        Some(p) if p == Path::new("-") => println!("{}", report.to_json()?),
        Some(p) => fs::write(p, report.to_json()? + "\n").map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?,
        None => {}
    }
    Ok(())
}

// an unreadable config is the caller's mistake, not a runtime failure
fn config_error(err: Error) -> Error {
    match err {
        Error::Io { path, source } => Error::Config {
            field: "config".into(),
            reason: format!("cannot read {}: {source}", path.display()),
        },
        other => other,
    }
}

fn execute(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Run {
            config,
            seed,
            jobs,
            output_dir,
            epochs,
        } => {
            let mut config = ExperimentConfig::load(&config).map_err(config_error)?;
            if let Some(dir) = output_dir {
                config.output_dir = dir;
            }
            if let Some(e) = epochs {
                config.train.epochs = e;
            }
            let summary = mogd_core::experiment::run_experiment(&config, seed, jobs)?;
            for (name, front) in &summary.merged_fronts {
                println!("{name}: {} point(s) on the merged front", front.len());
            }
            println!("manifest: {}", config.output_dir.join("manifest.json").display());
            if summary.failures > 0 {
                eprintln!("error: {} run(s) failed; see failure.json in their directories", summary.failures);
                return Ok(ExitCode::from(2));
            }
        }
        Command::Metrics { front, other, json } => {
            emit(&metrics_report(&front, other.as_deref())?, json.as_deref())?;
        }
        Command::Compare { first, second, json } => {
            emit(&compare_report(&first, &second)?, json.as_deref())?;
        }
        Command::ExportFront { dirs, output } => {
            let (names, front) = export_front(&dirs)?;
            write_front_csv(&output, &names, &front)?;
            println!("{} point(s) written to {}", front.len(), output.display());
        }
        Command::SynthData {
            config,
            seed,
            output_dir,
        } => {
            let config = SynthDataConfig::load(&config).map_err(config_error)?;
            let seed = seed.or(config.seed).ok_or_else(|| Error::Config {
                field: "seed".into(),
                reason: "pass --seed or set `seed` in the config".into(),
            })?;
            let dir = output_dir
                .or(config.output_dir.clone())
                .ok_or_else(|| Error::Config {
                    field: "output_dir".into(),
                    reason: "pass --output-dir or set `output_dir` in the config".into(),
                })?;
            fs::create_dir_all(&dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            let data = synth_dataset(&config.synth, seed)?;
            data.ratings.to_csv(&dir.join("ratings.csv"))?;
            write_prices(&dir.join("prices.csv"), &data.prices)?;
            let split = prepare_dataset(&data.ratings, &data.price_map(), config.preprocess, seed)?;
            split.write_artifacts(&dir.join("splits"))?;
            info!("synthetic dataset written to {}", dir.display());
            println!(
                "{} ratings, {} items, {} users written to {}",
                data.ratings.len(),
                data.prices.len(),
                config.synth.num_users,
                dir.display()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}
