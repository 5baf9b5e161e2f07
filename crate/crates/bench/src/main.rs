use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use egot_bench::harness::{instance_seed, run_trial};
use egot_bench::{compare, generate, run, BenchError, Result, RunConfig};

#[derive(Parser)]
#[command(name = "egot", version, about = "Optimal transport solvers and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path (file for `gen`, directory otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the instance of one trial as JSON.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Solve the instance of one trial and print its result.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Run every trial of a config and write traces plus a summary.
    Bench {
        #[command(flatten)]
        common: Common,
    },
    /// Run several configs on shared instances and merge their curves.
    Compare {
        /// JSON run configurations; repeat the flag for each.
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    Ok(cfg)
}

fn main_inner(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { common, trial } => {
            let cfg = load(&common.config, common.seed)?;
            let inst = generate(&cfg.generator, instance_seed(cfg.master_seed, trial), cfg.normalize_costs)?;
            match common.out {
                Some(path) => inst.save(path)?,
                None => println!("{}", inst.to_json()?),
            }
        }
        Command::Solve { common, trial } => {
            let cfg = load(&common.config, common.seed)?;
            let res = run_trial(&cfg, trial)?;
            if let Some(dir) = common.out.or(cfg.out.clone()) {
                std::fs::create_dir_all(&dir)?;
                egot_bench::harness::write_trial_csv(&dir.join(format!("trial_{trial}.csv")), &res)?;
            }
            let line = serde_json::json!({
                "trial": res.trial,
                "n": res.n,
                "optimum": res.optimum,
                "cost": res.final_cost,
                "gap": res.final_gap,
                "iterations": res.iterations,
                "matvecs": res.matvecs,
                "wall_ms": res.wall_ms,
            });
            println!("{line}");
        }
        Command::Bench { common } => {
            let cfg = load(&common.config, common.seed)?;
            let out = common.out.or(cfg.out.clone());
            let report = run(&cfg, out.as_deref())?;
            println!("{}", report.summary.to_json());
        }
        Command::Compare { configs, seed, out } => {
            let cfgs = configs.iter().map(|p| load(p, seed)).collect::<Result<Vec<_>>>()?;
            let out = out.or_else(|| cfgs.first().and_then(|c| c.out.clone()));
            let report = compare(&cfgs, out.as_deref())?;
            println!("{}", report.summary.to_json());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("egot: {e}");
            ExitCode::from(BenchError::exit_code(&e) as u8)
        }
    }
}
