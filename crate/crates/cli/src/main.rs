use std::io::Write;

use clap::Parser;

use breathnet_cli::{run, Cli, CliError};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("BREATHNET_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let err = CliError::usage(e.to_string().trim_end());
            eprintln!("{}", err.to_json());
            std::process::exit(err.kind.exit_code());
        }
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(msg) => {
            // a closed pipe (e.g. `| head`) is not an error worth reporting
            let _ = writeln!(std::io::stdout(), "{msg}");
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            std::process::exit(err.kind.exit_code());
        }
    }
}
