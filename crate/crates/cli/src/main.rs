mod commands;
mod manifest;
mod traj;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use safeinit_core::Error as CoreError;

#[derive(Parser, Debug)]
#[command(name = "safeinit", version, about = "Reachability-based safety simulation and learned initialization selection")]
struct Cli {
    /// Base seed; required by every command that draws random numbers.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel campaigns (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output file of the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

/// Game parameters shared by every command that touches a value grid.
#[derive(Args, Debug, Clone, Copy)]
pub struct GameArgs {
    /// Vehicle speed v (m/s).
    #[arg(long, default_value_t = 5.0)]
    pub speed: f64,
    /// Turn-rate bound (rad/s).
    #[arg(long, default_value_t = 1.0)]
    pub omega_bar: f64,
    /// Danger-zone radius (m).
    #[arg(long, default_value_t = 5.0)]
    pub rc: f64,
}

#[derive(Args, Debug, Clone, Copy)]
pub struct SimArgs {
    /// Simulation horizon (s); unfinished runs count as failures.
    #[arg(long, default_value_t = 60.0)]
    pub t_max: f64,
    /// Keep vehicles that reached their goal as stationary obstacles.
    #[arg(long)]
    pub arrived_obstacles: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the pairwise reachable set and write a BRSG grid file.
    Brs(commands::BrsArgs),
    /// Simulate randomized candidates and write a labeled JSON-Lines dataset.
    GenData(commands::GenDataArgs),
    /// Train the success classifier on a dataset.
    Train(commands::TrainArgs),
    /// Compare learned and random initialization selection.
    Eval(commands::EvalArgs),
    /// Simulate one scenario and write its trajectory CSV.
    Simulate(commands::SimulateArgs),
    /// Render a trajectory CSV as SVG.
    Plot(commands::PlotArgs),
}

pub struct Global {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Raised when the level-set iteration ran out of budget.
#[derive(Debug)]
pub struct NotConverged {
    pub residual: f64,
}

impl std::fmt::Display for NotConverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "reachable set did not converge (residual {:.3e}); partial grid saved", self.residual)
    }
}

impl std::error::Error for NotConverged {}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err.chain().any(|e| {
        e.is::<NotConverged>()
            || matches!(
                e.downcast_ref::<CoreError>(),
                Some(CoreError::Divergence { .. } | CoreError::NonFinite(_) | CoreError::SimulationBlowup { .. } | CoreError::Cfl { .. })
            )
    });
    if numerical {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let global = Global {
        seed: cli.seed,
        out: cli.out,
    };
    let result = match cli.command {
        Command::Brs(a) => commands::brs(&a, &global),
        Command::GenData(a) => commands::gen_data(&a, &global),
        Command::Train(a) => commands::train(&a, &global),
        Command::Eval(a) => commands::eval(&a, &global),
        Command::Simulate(a) => commands::simulate(&a, &global),
        Command::Plot(a) => commands::plot(&a, &global),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
