use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;
use vortexlab::harness::{self, ExperimentConfig};
use vortexlab::render::render;
use vortexlab::Error;

#[derive(Parser)]
#[command(name = "vortexlab", version, about = "Rotating Ginzburg-Landau vortex experiments on masked grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to the config's `output` field.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized steps; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibrium pipeline and closed-form predictions.
    Predict,
    /// Recovery-sequence sweep over the configured ε list.
    Sweep,
    /// Capacity, rotation potential and hole-mode table on an annulus.
    Annulus,
    /// Green equilibrium measure on the configured curve.
    Equilibrium,
    /// Descent on F_ε from a recovery seed at the first ε.
    Minimize,
    /// SVG plots from an output directory holding report.csv.
    Render,
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Failure::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut c = ExperimentConfig::from_json(&text).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    Ok(c)
}

fn print(v: &impl serde::Serialize) {
    match serde_json::to_value(v) {
        Ok(Value::Null) | Err(_) => {}
        Ok(v) => println!("{}", serde_json::to_string_pretty(&v).unwrap_or_default()),
    }
}

fn write_json(dir: &Path, name: &str, v: &impl serde::Serialize) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
    let text = serde_json::to_string_pretty(v).map_err(|e| Failure::Numerical(e.to_string()))?;
    std::fs::write(dir.join(name), text).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Render => {
            let dir = cli.out.as_ref().ok_or_else(|| Failure::Config("--out is required for render".into()))?;
            for p in render(dir)? {
                println!("{}", p.display());
            }
        }
        Command::Predict => {
            let c = load(cli)?;
            let p = harness::predict(&c)?;
            if let Some(dir) = harness::output_dir(&c, cli.out.clone()) {
                write_json(&dir, "predictions.json", &p.predictions)?;
                std::fs::write(dir.join("measure.csv"), p.measure.to_csv())
                    .map_err(|e| Failure::Config(e.to_string()))?;
            }
            print(&p.predictions);
        }
        Command::Sweep => {
            let c = load(cli)?;
            let dir = harness::output_dir(&c, cli.out.clone());
            let report = harness::run_sweep(&c, dir.as_deref())?;
            if let Some(d) = &dir {
                render(d)?;
            }
            print(&report.rows);
            if report.rows.iter().any(|r| r.status != "ok") {
                return Err(Failure::Numerical("one or more sweep rows failed".into()));
            }
        }
        Command::Annulus => {
            let c = load(cli)?;
            print(&harness::run_annulus(&c, harness::output_dir(&c, cli.out.clone()).as_deref())?);
        }
        Command::Equilibrium => {
            let c = load(cli)?;
            print(&harness::run_equilibrium(&c, harness::output_dir(&c, cli.out.clone()).as_deref())?);
        }
        Command::Minimize => {
            let c = load(cli)?;
            print(&harness::run_minimize(&c, harness::output_dir(&c, cli.out.clone()).as_deref())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
    }
}
