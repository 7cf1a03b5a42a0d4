use std::process::exit;

fn main() {
    exit(dronechain_cli::run_cli(std::env::args_os()));
}
