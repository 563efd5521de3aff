use clap::Parser;
use steercov_cli::{run, Command, Flags, RunConfig};

#[derive(Parser)]
#[command(name = "steercov", version, about = "Steerable covariance estimation for CTF-corrupted images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&RunConfig::new(cli.command, cli.flags)) {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
