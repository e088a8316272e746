mod commands;

use std::process::ExitCode;

use burstrank::evaluation::EvalError;
use burstrank::numkernel::KernelError;
use burstrank::ranknet::ModelError;
use burstrank::training::TrainError;
use clap::error::ErrorKind;
use clap::Parser;

use commands::Cli;

/// 2 for numeric faults anywhere in the chain, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numeric = err.chain().any(|e| {
        e.downcast_ref::<TrainError>().is_some_and(TrainError::is_numeric)
            || e.downcast_ref::<ModelError>().is_some_and(ModelError::is_numeric_fault)
            || matches!(e.downcast_ref::<KernelError>(), Some(KernelError::NumericFault(_)))
            || matches!(e.downcast_ref::<EvalError>(), Some(EvalError::Model(m)) if m.is_numeric_fault())
    });
    if numeric {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("ERROR: {first}");
            for line in msg.lines().skip(1).filter(|l| !l.trim().is_empty()) {
                eprintln!("{line}");
            }
            return ExitCode::from(1);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .format_timestamp(None)
        .init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERROR: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
