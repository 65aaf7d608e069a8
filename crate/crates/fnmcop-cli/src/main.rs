mod cli;
mod commands;
mod data;
mod output;

use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    // FNM_THREADS caps the worker pool (default: hardware concurrency).
    if let Ok(v) = std::env::var("FNM_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }

    let parsed = cli::Cli::try_parse();
    let cli = match parsed {
        Ok(c) => c,
        Err(e) => {
            // help/version print normally; real usage errors are input errors
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };

    let result = match &cli.command {
        cli::Command::Fit(args) => commands::cmd_fit(args),
        cli::Command::Compare(args) => commands::cmd_compare(args),
        cli::Command::Simulate(args) => commands::cmd_simulate(args),
        cli::Command::Kl(args) => commands::cmd_kl(args),
        cli::Command::Contour(args) => commands::cmd_contour(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(output::exit_code(&e))
        }
    }
}
