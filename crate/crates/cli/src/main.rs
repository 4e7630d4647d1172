//! Experiment runner for the aoi-gossip library. Every run is described
//! by flat `key = value` parameters from a config file and/or flags, and
//! produces CSV outputs plus a deterministic run manifest.

mod config;
mod runner;

use std::process::exit;

const USAGE: &str = "\
usage: aoi-gossip [<command>] [--config <path>] [--out <dir>] [--seed <u64>] [--<key> <value>]...
commands: simulate, exact-star, exact-ring4, approx-ring, optimal-beta, validate
exit codes: 0 success, 1 usage error, 2 validation-suite failure";

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() || args.iter().any(|a| a == "--help" || a == "-h") {
        println!("{USAGE}");
        exit(if args.is_empty() { 1 } else { 0 });
    }
    match config::parse_args(&args).and_then(|spec| runner::run(&spec)) {
        Ok(code) => exit(code),
        Err(message) => {
            eprintln!("error: {message}");
            exit(1);
        }
    }
}
