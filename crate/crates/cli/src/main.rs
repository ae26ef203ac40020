mod bench;
mod cli;
mod commands;
mod error;
mod report;
mod wav;

use clap::Parser;

use cli::{Cli, Command};
use error::CliResult;

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Design(args) => commands::run_design(args),
        Command::Split(args) => commands::run_split(args),
        Command::Merge(args) => commands::run_merge(args),
        Command::Roundtrip(args) => commands::run_roundtrip(args),
        Command::Flops(args) => commands::run_flops(args),
        Command::Bench(args) => commands::run_bench_cmd(args),
        Command::Quantize(args) => commands::run_quantize(args),
        Command::Gen(args) => commands::run_gen(args),
        Command::Expand(args) => commands::run_expand(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
