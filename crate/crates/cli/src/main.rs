//! `takeover` command-line entry point.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "takeover", version, about = "Bounded-rational takeover simulation, inference and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a corpus of episodes with ground-truth parameter traces.
    Simulate(SimulateArgs),
    /// Run the particle filter over one trajectory.
    Infer(InferArgs),
    /// Rolling collision-warning benchmark over a corpus.
    Bench(BenchArgs),
    /// Physiological consistency analysis.
    Physio(PhysioArgs),
    /// Re-execute the command recorded in a run manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML file with `gains`, `filter`, `predict`, `physio` and `simulate` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleKind {
    /// Fresh prior draw every 5 steps.
    Resample,
    /// Random walk refreshed every 5 steps.
    Drift,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Hold the parameters fixed: `sigma0,sigma_max,c,d`.
    #[arg(long, value_delimiter = ',')]
    pub fixed_theta: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = ScheduleKind::Resample)]
    pub schedule: ScheduleKind,
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub common: Common,
    /// Trajectory CSV.
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Scenario TOML; defaults to the `.scenario.toml` next to the trajectory.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    /// Corpus directory written by `simulate`.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_delimiter = ',', default_values = ["adaptive", "cv", "off"])]
    pub method: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
    pub thresholds: Vec<f64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PhysioArgs {
    #[command(flatten)]
    pub common: Common,
    /// Gaze CSV (`t,x,y,pupil,valid`).
    #[arg(long, requires = "posterior")]
    pub gaze: Option<PathBuf>,
    /// Posterior trace CSV written by `infer`.
    #[arg(long, requires = "gaze")]
    pub posterior: Option<PathBuf>,
    /// Grouped match rates (`dimension,level,parameter,value`).
    #[arg(long)]
    pub groups: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; defaults to the one recorded in the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("TC_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| takeover_core::Error::Config(format!("TC_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(takeover_core::Error::Config("TC_THREADS must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

/// 0 success, 1 invalid input, 2 I/O, 3 internal.
fn exit_code(err: &anyhow::Error) -> u8 {
    use takeover_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io(_) => 2,
                E::Csv(c) if matches!(c.kind(), csv::ErrorKind::Io(_)) => 2,
                E::State(_) | E::Filter(_) => 3,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let args: Vec<String> = std::env::args().skip(1).collect();
    let run = std::panic::catch_unwind(|| init_threads().and_then(|_| commands::dispatch(cli.command, args)));
    match run {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(3),
    }
}
