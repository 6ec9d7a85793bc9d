use std::process::ExitCode;

use clap::Parser;
use ctmc_fluid::cli::{exit_code, run, Cli, EXIT_ASSERTION};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(out) => {
            let out_dir = cli.command.args().out.display();
            if out.passed {
                println!("{}: pass ({out_dir}/summary.json)", cli.command.name());
                ExitCode::SUCCESS
            } else {
                println!("{}: FAIL ({out_dir}/summary.json)", cli.command.name());
                ExitCode::from(EXIT_ASSERTION as u8)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
