//! `ssan`: generate synthetic text data, train and evaluate recognizers,
//! run the ablation and gradient checks, and render attention overlays.

mod cmd;
mod config;
mod overlay;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "ssan", version, about = "Scale-aware scene-text recognizer on synthetic data")]
struct Cli {
    /// File of `key=value` lines supplying flag defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<std::path::PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a labeled dataset of synthetic word images.
    Generate(cmd::generate::Args),
    /// Train a recognizer with Adadelta on a dataset directory.
    Train(cmd::train::Args),
    /// Evaluate a checkpoint, optionally with lexicon-constrained decoding.
    Eval(cmd::eval::Args),
    /// Train several encoder variants on identical data and compare them.
    Ablate(cmd::ablate::Args),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(cmd::gradcheck::Args),
    /// Write scale and spatial attention overlays for one image.
    Visualize(cmd::visualize::Args),
}

#[derive(Debug)]
pub enum Failure {
    Core(ssan::Error),
    Usage(String),
    /// Gradient checks over tolerance, by name.
    Checks(Vec<String>),
}

impl From<ssan::Error> for Failure {
    fn from(e: ssan::Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(ssan::Error::Numerical { .. }) => 3,
            Failure::Core(_) | Failure::Usage(_) => 2,
            Failure::Checks(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{}", e),
            Failure::Usage(m) => f.write_str(m),
            Failure::Checks(names) => write!(f, "gradient check failed: {}", names.join(", ")),
        }
    }
}

fn run(args: Vec<OsString>) -> Result<(), Failure> {
    let args = config::merge(&<Cli as clap::CommandFactory>::command(), args)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{}", e);
            return Ok(());
        }
        Err(e) => return Err(Failure::Usage(e.to_string().trim_end().to_string())),
    };
    match cli.command {
        Command::Generate(a) => cmd::generate::run(a),
        Command::Train(a) => cmd::train::run(a),
        Command::Eval(a) => cmd::eval::run(a),
        Command::Ablate(a) => cmd::ablate::run(a),
        Command::Gradcheck(a) => cmd::gradcheck::run(a),
        Command::Visualize(a) => cmd::visualize::run(a),
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("{}", m);
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code())
        }
    }
}
