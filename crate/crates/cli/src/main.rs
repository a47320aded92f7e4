//! `prop3d`: run the online 3D proposal pipeline, evaluate its output,
//! generate synthetic sequences and dump per-frame heatmaps.

mod args;
mod debug;
mod error;
mod eval;
mod run;
mod synth;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.verbose { "info" } else { "warn" }))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.into()).build_global() {
            eprintln!("error: cannot configure {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Run(a) => run::run(a),
        Command::Eval(a) => eval::eval(a),
        Command::Synth(a) => synth::synth(a),
        Command::DebugHeatmap(a) => debug::debug_heatmap(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
