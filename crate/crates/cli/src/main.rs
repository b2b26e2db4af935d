//! `captiongan`: corpus generation, training, decoding and evaluation.

mod commands;
mod config;
mod emit;
mod manifest;
mod ops;
mod pipeline;
mod store;

use std::process::ExitCode;

use clap::Parser;

#[derive(Parser, Debug)]
#[command(name = "captiongan", version, about = "Adversarially trained image-caption generator on synthetic scenes")]
struct Cli {
    /// Worker threads; 1 gives the bit-reproducible schedule.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: commands::Command,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
