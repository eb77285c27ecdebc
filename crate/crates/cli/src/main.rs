use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kgmas::cli::{self, parse_binding, RunConfig};
use kgmas::coordination::DEFAULT_STEP_DEADLINE_MS;
use log::LevelFilter;

/// Knowledge-graph mediated multi-agent system for simulated warehouse robots.
#[derive(Parser)]
#[command(name = "kgmas", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a setup graph against the five-layer asset model.
    Validate {
        #[arg(long)]
        setup: PathBuf,
    },
    /// Print one line per generated agent; optionally write the specs as JSON.
    Generate {
        #[arg(long)]
        setup: PathBuf,
        #[arg(long)]
        emit: Option<PathBuf>,
    },
    /// Start all agents and run a task against the simulated world.
    Run {
        #[arg(long)]
        setup: PathBuf,
        #[arg(long)]
        world: PathBuf,
        #[arg(long, default_value = "move_pallet")]
        task: String,
        /// Task parameter, `key=value`; repeatable.
        #[arg(long = "param", value_parser = parse_binding)]
        params: Vec<(String, String)>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "deadline-ms", default_value_t = DEFAULT_STEP_DEADLINE_MS)]
        deadline_ms: u64,
        #[arg(long)]
        out: PathBuf,
        /// `asset=scheme`; repeatable.
        #[arg(long = "transport-override", value_parser = parse_binding)]
        transport_overrides: Vec<(String, String)>,
    },
    /// Print a Turtle file in canonical form.
    Dump { file: PathBuf },
    /// Print a message trace, grouped by protocol step when a setup graph is given.
    Trace {
        file: PathBuf,
        #[arg(long)]
        setup: Option<PathBuf>,
    },
    /// Run the world-consistency check over a data-graph dump.
    Check { file: PathBuf },
}

fn init_logging() {
    let level = match std::env::var("KGMAS_LOG").as_deref() {
        Ok("debug") => LevelFilter::Debug,
        Ok("info") => LevelFilter::Info,
        _ => LevelFilter::Off,
    };
    env_logger::Builder::new().filter_level(level).target(env_logger::Target::Stderr).init();
}

fn main() -> ExitCode {
    init_logging();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { cli::EXIT_INPUT as u8 } else { 0 });
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let code = match args.command {
        Command::Validate { setup } => cli::cmd_validate(&setup, &mut out),
        Command::Generate { setup, emit } => cli::cmd_generate(&setup, emit.as_deref(), &mut out),
        Command::Run { setup, world, task, params, seed, deadline_ms, out: out_dir, transport_overrides } => {
            let config = RunConfig {
                setup,
                world,
                task,
                params: params.into_iter().collect::<BTreeMap<_, _>>(),
                seed,
                deadline_ms,
                out: out_dir,
                transport_overrides: transport_overrides.into_iter().collect(),
            };
            cli::cmd_run(&config, &mut out)
        }
        Command::Dump { file } => cli::cmd_dump(&file, &mut out),
        Command::Trace { file, setup } => cli::cmd_trace(&file, setup.as_deref(), &mut out),
        Command::Check { file } => cli::cmd_check(&file, &mut out),
    };
    let _ = out.flush();
    ExitCode::from(code as u8)
}
