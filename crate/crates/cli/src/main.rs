use bope_cli::commands::{self, EXIT_FAILED, EXIT_OK, EXIT_USAGE};
use bope_cli::server::{router, AppState};
use bope_cli::session::Store;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bope", version, about = "Bayesian optimization with preference exploration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulated optimization.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the master seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a problems x algorithms x seeds matrix.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Aggregate run records into curves and comparison tables.
    Metrics {
        /// Directory searched recursively for *.jsonl run records.
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, default_value = "metrics-out")]
        out: PathBuf,
    },
    /// Serve live sessions over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Session persistence directory.
        #[arg(long, default_value = "sessions")]
        out: PathBuf,
    },
}

fn fail(e: commands::CommandError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out } => match commands::cmd_run(&config, seed, &out) {
            Ok(o) => {
                for it in &o.record.iterations {
                    for w in &it.warnings {
                        log::warn!("iteration {}: {w}", it.iteration);
                    }
                }
                println!("record: {}", o.record_path.display());
                for p in &o.curve_paths {
                    println!("curve: {}", p.display());
                }
                match (&o.record.termination, o.record.final_regret()) {
                    (bope_core::record::Termination::Failed { iteration, message }, _) => {
                        eprintln!("run failed at iteration {iteration}: {message}");
                        ExitCode::from(EXIT_FAILED as u8)
                    }
                    (_, Some(r)) => {
                        println!("final regret: {r:e}");
                        ExitCode::from(EXIT_OK as u8)
                    }
                    _ => ExitCode::from(EXIT_OK as u8),
                }
            }
            Err(e) => fail(e),
        },
        Command::Bench { config, out, parallel } => match commands::cmd_bench(&config, &out, parallel) {
            Ok(o) => {
                println!("{} runs, {} curves, {} failures", o.records.len(), o.curve_paths.len(), o.failures.len());
                for f in &o.failures {
                    eprintln!("failed: {} {:?} seed {}: {}", f.problem, f.algorithm, f.seed, f.error);
                }
                ExitCode::from(if o.failures.is_empty() { EXIT_OK } else { EXIT_FAILED } as u8)
            }
            Err(e) => fail(e),
        },
        Command::Metrics { runs, out } => match commands::cmd_metrics(&runs, &out) {
            Ok(o) => {
                for p in o.curve_paths.iter().chain(&o.comparison_paths) {
                    println!("{}", p.display());
                }
                ExitCode::from(EXIT_OK as u8)
            }
            Err(e) => fail(e),
        },
        Command::Serve { bind, out } => {
            let runtime = match tokio::runtime::Runtime::new() {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_FAILED as u8);
                }
            };
            runtime.block_on(async move {
                let state = match Store::open(&out).and_then(AppState::new) {
                    Ok(s) => s,
                    Err(e) => {
                        eprintln!("error: session directory {}: {e}", out.display());
                        return ExitCode::from(EXIT_USAGE as u8);
                    }
                };
                let listener = match tokio::net::TcpListener::bind(&bind).await {
                    Ok(l) => l,
                    Err(e) => {
                        eprintln!("error: cannot bind {bind}: {e}");
                        return ExitCode::from(EXIT_USAGE as u8);
                    }
                };
                log::info!("listening on {bind}");
                match axum::serve(listener, router(state)).await {
                    Ok(()) => ExitCode::from(EXIT_OK as u8),
                    Err(e) => {
                        eprintln!("error: {e}");
                        ExitCode::from(EXIT_FAILED as u8)
                    }
                }
            })
        }
    }
}
