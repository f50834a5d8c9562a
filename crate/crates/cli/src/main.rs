use std::process::ExitCode;

use clap::Parser;
use windcov_cli::{run, Args};

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(manifest) => {
            println!("wrote {} files to {}", manifest.outputs.len() + 1, manifest.output_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
