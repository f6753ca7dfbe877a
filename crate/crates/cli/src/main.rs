use std::process::ExitCode;

use clap::Parser;

use bbm_lab_cli::{execute, parse_config, Cli};

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    match parse_config(cli).and_then(|cfg| execute(&cfg)) {
        Ok(run) => {
            for line in run.summary {
                println!("{line}");
            }
            for f in run.files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("bbm-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
