use std::process::ExitCode;

use clap::Parser;
use scd_cli::commands::{self, Cli, Command};
use scd_cli::failure::Failure;

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate {
            scenario,
            out,
            format,
            seed,
            variant,
            beta,
        } => commands::simulate_cmd(&scenario, &out, format, seed, variant, beta),
        Command::Pareto { qtable, out } => commands::pareto_cmd(&qtable, &out),
        Command::Equilibrium {
            goals,
            state,
            out,
            tol,
        } => commands::equilibrium_cmd(&goals, &state, &out, tol),
        Command::LagSweep {
            scenario,
            dwells,
            variants,
            out,
            format,
        } => commands::lag_sweep_cmd(&scenario, &dwells, &variants, &out, format),
        Command::Serve { port, host } => serve(&host, port),
    }
}

fn serve(host: &str, port: u16) -> Result<(), Failure> {
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| Failure::input("runtime", e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| Failure::input("bind", format!("{host}:{port}: {e}")))?;
        log::info!("listening on ws://{}", listener.local_addr().map_err(|e| Failure::input("bind", e.to_string()))?);
        scd_cli::server::serve(listener)
            .await
            .map_err(|e| Failure::input("accept", e.to_string()))
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{}", failure.to_json());
            ExitCode::from(failure.exit_code as u8)
        }
    }
}
