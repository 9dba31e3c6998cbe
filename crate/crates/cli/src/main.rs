//! `tactigrasp`: collect demonstrations, train the three pipeline stages,
//! evaluate and benchmark them, and serve the simulator to a teleop client.
//!
//! Every command ends by printing one JSON summary line on stdout.

mod commands;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use commands::Workspace;

#[derive(Parser, Debug)]
#[command(name = "tactigrasp", version, about = "Tactile adaptive grasping pipeline on a simulated gripper")]
struct Cli {
    /// Workspace root holding data/, models/, bench/ and eval/.
    #[arg(long, global = true, default_value = ".")]
    root: PathBuf,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Taxel noise.
    #[arg(long, global = true, value_enum, default_value_t = Toggle::On)]
    noise: Toggle,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Arm {
    None,
    Trained,
    Both,
}

#[derive(clap::Args, Debug, Clone, Default)]
pub struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    /// Model file to write instead of the workspace default.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate scripted demonstrations into data/<kind>/.
    Collect {
        /// `all` or one catalog object.
        #[arg(long, default_value = "all")]
        object: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the initial-grasp generator on data/gp.
    TrainGen(TrainArgs),
    /// Fit the stability estimator on data/gp and data/stab.
    TrainEst {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the grasp adapter on data/ga.
    TrainAdapt(TrainArgs),
    /// Closed-loop episodes under random disturbances, with and without the adapter.
    Eval {
        /// `all` (the test objects) or one catalog object.
        #[arg(long, default_value = "all")]
        object: String,
        /// Directory for per-episode traces.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Maximum supported water fill per object.
    Bench {
        #[arg(long, value_enum, default_value_t = Arm::Both)]
        adapter: Arm,
        /// `all` (the test objects) or one catalog object.
        #[arg(long, default_value = "all")]
        object: String,
        /// Summary file instead of bench/summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve one teleoperation session over WebSocket.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "milk_bottle")]
        object: String,
        /// Wall-clock period of one simulation tick.
        #[arg(long, default_value_t = 1000.0 / 160.0)]
        tick_ms: f64,
        /// Directory for recordings instead of data/.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check dataset files (default: everything under data/).
    Validate { paths: Vec<PathBuf> },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Collect { .. } => "collect",
            Command::TrainGen(_) => "train-gen",
            Command::TrainEst { .. } => "train-est",
            Command::TrainAdapt(_) => "train-adapt",
            Command::Eval { .. } => "eval",
            Command::Bench { .. } => "bench",
            Command::Serve { .. } => "serve",
            Command::Validate { .. } => "validate",
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<serde_json::Value> {
    let ws = Workspace::new(cli.root, cli.seed, cli.noise == Toggle::On);
    match cli.command {
        Command::Collect { object, out } => commands::collect(&ws, &object, out),
        Command::TrainGen(args) => commands::train_gen(&ws, &args),
        Command::TrainEst { out } => commands::train_est(&ws, out),
        Command::TrainAdapt(args) => commands::train_adapt(&ws, &args),
        Command::Eval { object, out } => commands::eval(&ws, &object, out),
        Command::Bench { adapter, object, out } => commands::bench(&ws, adapter, &object, out),
        Command::Serve {
            port,
            object,
            tick_ms,
            out,
        } => {
            anyhow::ensure!(tick_ms.is_finite() && tick_ms >= 0.0, "--tick-ms must be finite and >= 0");
            serve::serve(&ws, port, &object, Duration::from_secs_f64(tick_ms / 1000.0), out)
        }
        Command::Validate { paths } => commands::validate(&ws, &paths),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli) {
        Ok(mut summary) => {
            summary["command"] = json!(name);
            summary["ok"] = json!(true);
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            println!("{}", json!({"command": name, "ok": false, "error": format!("{e:#}")}));
            ExitCode::FAILURE
        }
    }
}
