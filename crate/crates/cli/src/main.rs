//! liouctl: simulate and analyze implicit Lyapunov control of closed quantum
//! systems.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 condition-check failure,
//! 3 runtime solver failure.

mod commands;
mod config;
mod csvout;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "liouctl", version, about = "Implicit Lyapunov control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's output.csv_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Frame for emitted states: original | tilde (overrides the config).
    #[arg(long)]
    frame: Option<String>,
    /// Time step override.
    #[arg(long)]
    dt: Option<f64>,
    /// Duration override.
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the convergence conditions at gamma = 0 and over a scan.
    Check(CommonArgs),
    /// Derive P eigenvalues from the diagonalized target.
    DesignP(CommonArgs),
    /// Simulate the closed loop and emit CSV trajectories.
    Run(CommonArgs),
    /// Run the configured parameter sweep.
    Sweep(CommonArgs),
}

fn apply_overrides(config: &mut config::RunConfig, args: &CommonArgs) -> anyhow::Result<()> {
    if let Some(dt) = args.dt {
        config.integration.dt = dt;
    }
    if let Some(duration) = args.duration {
        config.integration.duration = duration;
    }
    if let Some(frame) = &args.frame {
        match frame.as_str() {
            "original" | "tilde" => config.output.frame = frame.clone(),
            other => anyhow::bail!("config: --frame expects original|tilde, got {other:?}"),
        }
    }
    if let Some(out) = &args.out {
        config.output.csv_dir = out.display().to_string();
    }
    Ok(())
}

/// Errors before the command body starts are usage/config problems (exit
/// 1); failures inside a command are runtime problems (exit 3).
fn dispatch(command: &Command) -> Result<i32, (u8, anyhow::Error)> {
    let usage = |e: anyhow::Error| (1u8, e);
    let runtime = |e: anyhow::Error| (3u8, e);

    let args = match command {
        Command::Check(a) | Command::DesignP(a) | Command::Run(a) | Command::Sweep(a) => a,
    };
    let (mut config, mut raw) = commands::load(&args.config).map_err(usage)?;
    apply_overrides(&mut config, args).map_err(usage)?;
    // keep the raw JSON consistent with the overrides for sweep cells
    if let Some(dt) = args.dt {
        config::apply_path(&mut raw, "integration.dt", &serde_json::json!(dt)).map_err(usage)?;
    }
    if let Some(duration) = args.duration {
        config::apply_path(&mut raw, "integration.duration", &serde_json::json!(duration))
            .map_err(usage)?;
    }
    let resolved = config::resolve(&config).map_err(usage)?;

    match command {
        Command::Check(_) => commands::cmd_check(&resolved).map_err(runtime),
        Command::DesignP(_) => commands::cmd_design_p(&resolved, &config).map_err(runtime),
        Command::Run(_) => {
            let out_dir = PathBuf::from(&resolved.csv_dir);
            let artifacts = commands::cmd_run(&resolved, &out_dir).map_err(runtime)?;
            commands::print_run_summary(&artifacts);
            Ok(0)
        }
        Command::Sweep(_) => {
            let out_dir = PathBuf::from(&resolved.csv_dir);
            commands::cmd_sweep(&raw, &config, &out_dir).map_err(runtime)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(1);
        }
    };
    match dispatch(&cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err((code, err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
