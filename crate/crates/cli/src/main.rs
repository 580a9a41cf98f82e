use clap::Parser;
use cpcr_cli::{run, Cli, Outcome};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let code = match run(&cli.command) {
        Ok(outcome) => {
            if let Outcome::Partial { failures, .. } = &outcome {
                log::warn!("{failures} rows failed; see the status column");
            }
            println!("{}", outcome.report().display());
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}
