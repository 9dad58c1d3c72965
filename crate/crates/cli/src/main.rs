use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pixmimic_cli::{commands, exit_code, gateway, CliError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "pixmimic", about = "Imitation learning from rendered frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration. Any other `--key=value` overrides one of its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    port: Option<u16>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Record expert-versus-CPU episodes into a dataset.
    Record,
    /// Train a model on the dataset.
    Train,
    /// Score a checkpoint on a dataset split.
    Eval,
    /// Play the agent against a CPU opponent.
    Play,
    /// Write saliency maps for a replayed episode segment.
    Saliency,
    /// Run the live websocket gateway.
    Serve,
}

const FLAGS: [&str; 6] = ["config", "seed", "checkpoint", "port", "help", "version"];

/// Splits `--key=value` configuration overrides (any key that is not one of
/// the named flags) from the arguments clap understands.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for a in args {
        match a.strip_prefix("--").and_then(|b| b.split_once('=')) {
            Some((k, v)) if !FLAGS.contains(&k) => overrides.push((k.replace('-', "_"), v.to_string())),
            _ => rest.push(a),
        }
    }
    (rest, overrides)
}

fn run(cli: Cli, mut overrides: Vec<(String, String)>) -> Result<(), CliError> {
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(port) = cli.port {
        overrides.push(("port".into(), port.to_string()));
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    let ckpt = cli.checkpoint.as_deref();
    match cli.command {
        Command::Record => commands::record(&cfg).map(|_| ()),
        Command::Train => commands::train(&cfg, ckpt).map(|_| ()),
        Command::Eval => commands::eval(&cfg, ckpt).map(|_| ()),
        Command::Play => commands::play(&cfg, ckpt).map(|_| ()),
        Command::Saliency => commands::saliency(&cfg, ckpt).map(|_| ()),
        Command::Serve => gateway::serve_blocking(&cfg, ckpt),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (args, overrides) = split_overrides(std::env::args().collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    exit_code(run(cli, overrides))
}
