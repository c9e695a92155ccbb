use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use acl_core::gradcheck::{mlp_suite, SuiteConfig, TOLERANCE};
use acl_core::harness::{
    aggregate_reports, evaluate, run_experiment, simulate, Experiment, ExperimentConfig,
};
use acl_core::nn::checkpoint;
use acl_core::trainer::Mode;
use acl_core::{Error, Result};

#[derive(Parser)]
#[command(name = "acl", version, about = "Train structured predictors against label simulators")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// TOML experiment file; unset keys take the preset of its experiment and mode.
    config: Option<PathBuf>,
    /// Preset experiment when no file is given.
    #[arg(long, conflicts_with = "config")]
    experiment: Option<String>,
    /// Preset mode when no file is given.
    #[arg(long, conflicts_with = "config")]
    mode: Option<Mode>,
    /// Sets both the training seed and the split seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Source {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => {
                let experiment = match self.experiment.as_deref().unwrap_or("pendulum") {
                    "pendulum" => Experiment::Pendulum,
                    "skeleton" => Experiment::Skeleton,
                    "timeseries" => Experiment::Timeseries,
                    other => return Err(Error::Argument(format!("unknown experiment {other:?}"))),
                };
                ExperimentConfig::preset(experiment, self.mode.unwrap_or(Mode::Acl))
            }
        };
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
            cfg.split_seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train and write history.csv, report.csv, predictor.json and config.toml.
    Train {
        #[command(flatten)]
        source: Source,
        /// Output directory; overrides `out` in the file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a saved predictor on the datasets of a config.
    Eval {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Where to write report.csv; printed to stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump simulated label sequences as CSV.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// CSV file; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients of every objective with central differences.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 4)]
        depth: usize,
    },
    /// Aggregate report.csv files (directories are searched recursively).
    Report {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// CSV file; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            fs::write(path, text).map_err(|e| Error::io(path, e))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn find_reports(path: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_file() {
        found.push(path.to_path_buf());
        return Ok(());
    }
    let entries = fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    for entry in entries {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        if p.is_dir() {
            find_reports(&p, found)?;
        } else if p.file_name().is_some_and(|n| n == "report.csv") {
            found.push(p);
        }
    }
    Ok(())
}

/// `Ok(false)` means the command ran but its check failed.
fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Train { source, out } => {
            let cfg = source.load()?;
            let dir = out
                .or_else(|| cfg.out.clone())
                .ok_or_else(|| Error::Argument("no output directory: pass --out or set `out`".into()))?;
            let outcome = run_experiment(&cfg)?;
            outcome.write(&dir)?;
            emit(&cfg.to_toml()?, Some(&dir.join("config.toml")))?;
            print!("{}", outcome.report.to_csv_string()?);
            Ok(true)
        }
        Command::Eval {
            source,
            checkpoint: path,
            out,
        } => {
            let cfg = source.load()?;
            let params = checkpoint::load(&path)?;
            let report = evaluate(&cfg, &params)?;
            emit(&report.to_csv_string()?, out.as_deref().map(|d| d.join("report.csv")).as_deref())?;
            Ok(true)
        }
        Command::Simulate { source, count, out } => {
            let cfg = source.load()?;
            let (names, labels) = simulate(&cfg, count, cfg.train.seed)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&names)?;
            for r in 0..labels.rows() {
                w.write_record(labels.row(r).iter().map(f64::to_string))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Argument(e.to_string()))?;
            emit(&String::from_utf8(bytes).expect("csv output is utf-8"), out.as_deref())?;
            Ok(true)
        }
        Command::Gradcheck { seeds, width, depth } => {
            let cfg = SuiteConfig {
                width,
                depth,
                ..Default::default()
            };
            let mut ok = true;
            for seed in 0..seeds {
                for case in mlp_suite(&cfg, seed)? {
                    let verdict = if case.passed() { "ok" } else { "FAIL" };
                    println!(
                        "seed {seed:>2}  {:<36} {:>6} params  max rel err {:.3e}  {verdict}",
                        case.name, case.params, case.max_error
                    );
                    ok &= case.passed();
                }
            }
            println!("tolerance {TOLERANCE:e}: {}", if ok { "all passed" } else { "FAILED" });
            Ok(ok)
        }
        Command::Report { paths, out } => {
            let mut found = Vec::new();
            for p in &paths {
                find_reports(p, &mut found)?;
            }
            found.sort();
            if found.is_empty() {
                return Err(Error::Argument("no report.csv found".into()));
            }
            emit(&aggregate_reports(&found)?, out.as_deref())?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
