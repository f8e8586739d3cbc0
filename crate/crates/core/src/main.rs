use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedsysid::harness::{self, ExperimentConfig};
use fedsysid::{Error, Result};

/// Federated identification of nonlinear systems.
#[derive(Parser)]
#[command(name = "fedsysid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArg {
    /// Experiment config (TOML).
    #[arg(value_name = "CONFIG", required_unless_present = "config_flag")]
    config: Option<PathBuf>,
    /// Same as the positional CONFIG.
    #[arg(long = "config", value_name = "CONFIG", conflicts_with = "config")]
    config_flag: Option<PathBuf>,
}

impl ConfigArg {
    fn path(&self) -> &PathBuf {
        self.config
            .as_ref()
            .or(self.config_flag.as_ref())
            .expect("clap enforces one config")
    }
}

#[derive(clap::Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Output path; overrides `output_path` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds; overrides `seeds` in the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write the per-round CSV.
    Run(RunArgs),
    /// Print diagnostics for every sweep point and seed as JSON lines.
    Diagnose(RunArgs),
    /// Fit final error against M from an M-sweep CSV.
    Scaling {
        csv: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config without running it.
    Validate(ConfigArg),
}

fn load(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(args.config.path())?;
    if let Some(out) = &args.out {
        cfg.output_path = Some(out.clone());
    }
    if let Some(seeds) = &args.seeds {
        cfg.seeds = seeds.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::InvalidField {
                field: "threads".into(),
                message: "must be >= 1".into(),
            });
        }
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(f)
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = load(&args)?;
            if cfg.output_path.is_none() {
                return Err(Error::InvalidField {
                    field: "output_path".into(),
                    message: "set output_path in the config or pass --out".into(),
                });
            }
            let recs = with_pool(args.threads, || harness::run_experiment(&cfg))?;
            log::info!("wrote {} rows", recs.len());
        }
        Command::Diagnose(args) => {
            let cfg = load(&args)?;
            let reports = with_pool(args.threads, || harness::run_diagnostics(&cfg))?;
            let mut w = output(args.out.as_ref())?;
            for r in &reports {
                serde_json::to_writer(&mut w, r).map_err(|e| Error::Config(e.to_string()))?;
                writeln!(w)?;
            }
        }
        Command::Scaling { csv, out } => {
            let recs = harness::read_csv_path(&csv)?;
            let report = harness::sqrt_m_scaling(&recs)?;
            let mut w = output(out.as_ref())?;
            serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Error::Config(e.to_string()))?;
            writeln!(w)?;
        }
        Command::Validate(config) => {
            let cfg = ExperimentConfig::from_path(config.path())?;
            println!(
                "ok: {} point(s) x {} seed(s), {} rounds",
                cfg.points().len(),
                cfg.seeds.len(),
                cfg.rounds
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FEDSYSID_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.code(), e.to_string().replace('\n', " "));
            match e {
                Error::Config(_) | Error::InvalidField { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
