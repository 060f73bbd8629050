use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use imprag::exec::Execution;
use imprag_cli::{
    cmd_build_index, cmd_eval_retrieval, cmd_retrieve, cmd_simulate, load_config, Overrides, SimulateTarget,
};

/// Retrieval-selected impedance control: index building, retrieval,
/// evaluation and simulation.
#[derive(Parser)]
#[command(name = "imprag", version)]
struct Cli {
    /// Run configuration (JSON); relative paths inside it resolve against its directory.
    #[arg(long, short, global = true, default_value = "data/config.json")]
    config: PathBuf,
    /// Override the output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Run batch work on one thread.
    #[arg(long, global = true, default_value_t = false)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed both knowledge-base tables and write the indexes.
    BuildIndex,
    /// Run perception and both retrieval stages for one image.
    Retrieve {
        /// Image URI (a fixture key in fixture mode, a file path otherwise).
        image_uri: String,
    },
    /// Score every fixture and write the report.
    EvalRetrieval {
        /// Override the fixture file.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Minimum accuracy for exit 0 [default: config value, 13/14].
        #[arg(long)]
        min_accuracy: Option<f64>,
    },
    /// Simulate a task (or every task with published gains) and write traces.
    Simulate {
        /// Task id, e.g. follow_surface.
        #[arg(required_unless_present = "all", conflicts_with = "all")]
        task_id: Option<String>,
        /// Run all six tasks with published gains and print a summary table.
        #[arg(long)]
        all: bool,
        /// Override the integrator step in seconds [default: config value, 0.02].
        #[arg(long)]
        dt: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut overrides = Overrides {
        output_dir: cli.output_dir.clone(),
        ..Overrides::default()
    };
    match &cli.command {
        Command::EvalRetrieval { fixtures, min_accuracy } => {
            overrides.fixtures = fixtures.clone();
            overrides.min_accuracy = *min_accuracy;
        }
        Command::Simulate { dt, .. } => overrides.dt = *dt,
        _ => {}
    }
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let (mut out, mut err) = (io::stdout().lock(), io::stderr().lock());
    let config = match load_config(&cli.config, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let code = match &cli.command {
        Command::BuildIndex => cmd_build_index(config, &mut out, &mut err),
        Command::Retrieve { image_uri } => cmd_retrieve(config, image_uri, &mut out, &mut err),
        Command::EvalRetrieval { .. } => cmd_eval_retrieval(config, exec, &mut out, &mut err),
        Command::Simulate { task_id, all, .. } => {
            let target = match (all, task_id) {
                (true, _) => SimulateTarget::All,
                (false, Some(t)) => SimulateTarget::Task(t),
                (false, None) => unreachable!("clap requires a task id without --all"),
            };
            cmd_simulate(config, target, exec, &mut out, &mut err)
        }
    };
    ExitCode::from(code as u8)
}
