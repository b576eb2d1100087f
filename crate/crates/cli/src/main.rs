//! `colored-drift`: simulate colored-noise SDEs, estimate drift matrices and
//! run the Monte Carlo experiments.

use std::fs;
use std::io::BufWriter;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use colored_drift::experiments::config::System;
use colored_drift::experiments::{parse_config_set, run_experiment, Experiment, Overrides, RunConfig};
use colored_drift::filtering::filter_path;
use colored_drift::linalg::to_row_major;
use colored_drift::noise::GaussianStream;
use colored_drift::simulate::{drive_colored, drive_limit, InitialState, PathRecorder};
use colored_drift::{estimate_path, Path, TimeGrid, Variant};
use serde_json::json;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "colored-drift", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one path and write `path.csv`, `metadata.json` and `config.json`.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run estimators over stored path CSVs.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Path CSV files written by `simulate`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Run a named experiment and write its data bundle.
    Experiment {
        /// One of additive-1d, additive-2d, levy, clt, identities, convergence-rate.
        name: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// JSON configuration file (a single object, or an array for experiments).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed of the simulated path, or base seed of the replications.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Correlation scale ε, overriding the configuration.
    #[arg(long)]
    eps: Option<f64>,
    /// Replications M (and R for the CLT study).
    #[arg(long)]
    replications: Option<usize>,
    /// Restrict to one estimator variant.
    #[arg(long)]
    variant: Option<String>,
    /// Worker threads for replications.
    #[arg(long, env = "COLORED_DRIFT_THREADS")]
    threads: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Result<Overrides> {
        Ok(Overrides {
            epsilon: self.eps,
            replications: self.replications,
            base_seed: self.seed,
            variant: self.variant.as_deref().map(Variant::parse).transpose()?,
        })
    }

    fn configs(&self) -> Result<Option<Vec<RunConfig>>> {
        let Some(file) = &self.config else { return Ok(None) };
        let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
        let configs = parse_config_set(&text).with_context(|| format!("{}", file.display()))?;
        Ok(Some(configs))
    }

    /// The single resolved configuration `simulate` and `estimate` need.
    /// Here `--variant` replaces the configured variants.
    fn single_config(&self) -> Result<RunConfig> {
        let Some(configs) = self.configs()? else { bail!("--config is required") };
        let mut overrides = self.overrides()?;
        let variant = overrides.variant.take();
        let [mut cfg] = <[RunConfig; 1]>::try_from(overrides.apply(configs)?)
            .map_err(|v| anyhow::anyhow!("expected one configuration, found {}", v.len()))?;
        if let Some(v) = variant {
            cfg.estimator.variant = None;
            cfg.estimator.variants = vec![v];
        }
        let cfg = cfg.resolve().context("invalid configuration")?;
        Ok(cfg)
    }

    fn out_dir(&self, cfg_dir: Option<&str>, fallback: &str) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg_dir.map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(fallback))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let common = match &cli.command {
        Command::Simulate { common } | Command::Estimate { common, .. } | Command::Experiment { common, .. } => common,
    };
    if let Some(threads) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Simulate { common } => simulate(common).map(|_| true),
        Command::Estimate { common, inputs } => estimate(common, inputs).map(|_| true),
        Command::Experiment { name, common } => experiment(name, common),
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_json(path: &FsPath, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_config(dir: &FsPath, cfg: &RunConfig) -> Result<()> {
    fs::write(dir.join("config.json"), cfg.to_json() + "\n").context("writing config.json")
}

/// Simulates the configured system with the replication seed layout, so a
/// stored path reproduces the in-memory Monte Carlo run with the same seed.
fn simulate_path(cfg: &RunConfig) -> Result<Path> {
    let grid = cfg.grid.grid()?;
    let seed = cfg.experiment.base_seed;
    let mut noise = GaussianStream::with_refinement(seed, cfg.grid.refine);
    let colored = cfg.model.colored()?;
    let path = match cfg.system {
        System::Colored => {
            let mut rec = PathRecorder::new(&grid, cfg.output.thinning, colored.dim(), Some(colored.noise_dim()))?;
            drive_colored(&colored, &grid, &mut noise, &InitialState::default(), &mut rec)?;
            rec.into_path(grid, seed)?
        }
        System::Limit => {
            let mut rec = PathRecorder::new(&grid, cfg.output.thinning, colored.dim(), None)?;
            drive_limit(&cfg.model.limit()?, &grid, &mut noise, None, &mut rec)?;
            rec.into_path(grid, seed)?
        }
    };
    Ok(match &cfg.filter {
        Some(f) => filter_path(&path, f)?,
        None => path,
    })
}

fn simulate(common: &Common) -> Result<()> {
    let cfg = common.single_config()?;
    let dir = common.out_dir(cfg.output.directory.as_deref(), "out");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = simulate_path(&cfg)?;
    let file = fs::File::create(dir.join("path.csv")).context("creating path.csv")?;
    path.write_csv(BufWriter::new(file))?;
    let grid = cfg.grid.grid()?;
    let model_hash = hex(&Sha256::digest(serde_json::to_vec(&cfg.model)?));
    write_json(
        &dir.join("metadata.json"),
        &json!({
            "seed": cfg.experiment.base_seed,
            "model_hash": model_hash,
            "system": cfg.system,
            "epsilon": cfg.model.epsilon(),
            "h": grid.step(),
            "T": grid.horizon(),
            "n_steps": grid.n_steps(),
            "refine": cfg.grid.refine,
            "thinning": cfg.output.thinning,
            "channels": {"X": true, "Y": path.y.is_some(), "Z": path.z.is_some()},
        }),
    )?;
    write_config(&dir, &cfg)?;
    println!("wrote {} points to {}", path.len(), dir.join("path.csv").display());
    Ok(())
}

fn estimate(common: &Common, inputs: &[PathBuf]) -> Result<()> {
    let cfg = common.single_config()?;
    let dir = common.out_dir(cfg.output.directory.as_deref(), "out");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let basis = cfg.model.basis()?;
    let variants = cfg.estimator.selected();
    if variants.is_empty() {
        bail!("no estimator variant selected; set estimator.variant or pass --variant");
    }
    let theta0 = cfg.theta0()?;
    let mut finals = Vec::new();
    for input in inputs {
        let file = fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
        let path = Path::read_csv(std::io::BufReader::new(file)).with_context(|| format!("{}", input.display()))?;
        if path.dim() != basis.dim_in() {
            bail!("{}: path has dimension {}, the model expects {}", input.display(), path.dim(), basis.dim_in());
        }
        let stored = TimeGrid::new(path.stored_step(), path.len() - 1)?;
        let checkpoints = cfg.experiment.checkpoints.resolve(&stored)?;
        let runs = estimate_path(&path, &basis, &variants, cfg.estimator.lr, theta0.as_ref(), cfg.filter.as_ref(), &checkpoints)
            .with_context(|| format!("{}", input.display()))?;
        let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("path");
        for (variant, run) in variants.iter().zip(&runs) {
            let name = format!("{stem}_{}.csv", variant.name());
            let file = fs::File::create(dir.join(&name)).with_context(|| format!("creating {name}"))?;
            run.write_csv(BufWriter::new(file))?;
            let last = run.last();
            finals.push(json!({
                "input": input.display().to_string(),
                "variant": variant.name(),
                "t": run.times.last(),
                "value": last.as_ref().map(|m| to_row_major(m)),
                "rows": run.rows,
                "cols": run.cols,
                "condition_number": run.condition.last().copied().filter(|c| c.is_finite()),
            }));
            match last {
                Some(m) => println!("{stem} {}: {:?}", variant.name(), to_row_major(&m)),
                None => println!("{stem} {}: no estimate", variant.name()),
            }
        }
    }
    write_json(&dir.join("estimate.json"), &json!({ "estimates": finals }))?;
    write_config(&dir, &cfg)
}

fn experiment(name: &str, common: &Common) -> Result<bool> {
    let experiment = Experiment::parse(name)?;
    let configs = common.configs()?.unwrap_or_else(|| experiment.default_configs());
    let configs = common.overrides()?.apply(configs)?;
    let bundle = run_experiment(experiment, configs)?;
    let fallback = format!("output/{}_{}", experiment.name(), bundle.tag);
    let dir = common.out_dir(bundle.configs[0].output.directory.as_deref(), &fallback);
    bundle.write_to(&dir).with_context(|| format!("writing {}", dir.display()))?;
    for check in &bundle.checks {
        println!("{check}");
    }
    println!(
        "{} {} ({} checks) -> {}",
        if bundle.passed() { "PASS" } else { "FAIL" },
        experiment,
        bundle.checks.len(),
        dir.display()
    );
    Ok(bundle.passed())
}
