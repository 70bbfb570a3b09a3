use std::process::ExitCode;

use clap::Parser;

use bgestim::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            println!("{}", report.summary_line());
            for output in &report.outputs {
                println!("wrote {output}");
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("bgestim: {err}");
            ExitCode::FAILURE
        }
    }
}
