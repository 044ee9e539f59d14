mod args;
mod commands;
mod output;

use std::process::ExitCode;
use std::time::Instant;

use args::Command;
use output::Artifacts;

pub type AppResult<T> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = args::parse();

    if let Some(threads) = cli.opts.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot start {threads} worker threads: {e}");
            return ExitCode::FAILURE;
        }
    }

    if cli.command == Command::Cutoff {
        return match commands::cutoff(&cli.opts) {
            Ok(value) => {
                println!("{value:.6}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        };
    }

    let started = Instant::now();
    let mut artifacts = Artifacts::new(&cli.opts.out);
    match commands::run(cli.command, &cli.opts, &mut artifacts) {
        Ok(mut summary) => {
            summary["command"] = cli.command.name().into();
            summary["outputs"] = artifacts.listing().into();
            summary["elapsed_ms"] = (started.elapsed().as_millis() as u64).into();
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            artifacts.discard();
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
