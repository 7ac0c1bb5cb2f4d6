use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

mod compile;
mod import;
mod serve;
mod simulate;

/// Compiler, task engine and load simulator for declarative mobile task UIs.
#[derive(Debug, Parser)]
#[command(name = "muit", version, propagate_version = true)]
struct Cli {
    /// More log output (-v info, -vv debug). MUIT_LOG takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compile a .muit source file into a page bundle directory.
    Compile {
        /// Source file.
        src: PathBuf,
        /// Bundle output directory; created if missing.
        #[arg(short, long)]
        out: PathBuf,
        /// Bundle name; defaults to the module name.
        #[arg(long)]
        name: Option<String>,
    },
    /// Derive a .muit source file from a WSDL document.
    ImportWsdl {
        /// WSDL file path or http(s) URL.
        source: String,
        /// Where to write the generated source; stdout when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the task engine until interrupted.
    Serve {
        /// Engine config file (TOML).
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Listen address, overriding the config file.
        #[arg(long)]
        listen: Option<String>,
        /// Public origin for deep links, overriding the config file.
        #[arg(long)]
        base_url: Option<String>,
        /// Instance store file, overriding the config file.
        #[arg(long)]
        store: Option<PathBuf>,
        /// Idle seconds before a pending instance is passivated.
        #[arg(long)]
        idle_threshold: Option<f64>,
    },
    /// Run the passivation load simulation and write a CSV report.
    Simulate {
        /// Sweep spec file (TOML); built-in defaults when absent.
        #[arg(short, long)]
        spec: Option<PathBuf>,
        /// CSV output file; stdout when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Comma-separated concurrency levels, overriding the spec.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        /// Passivation on or off, overriding the spec.
        #[arg(long)]
        passivation: Option<Switch>,
        /// Random seed, overriding the spec.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the version.
    Version,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

/// Exit status contract: 1 for domain errors, 2 for environment errors.
#[derive(Debug)]
pub enum Failure {
    Domain(String),
    Env(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Env(_) => 2,
        }
    }
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_env("MUIT_LOG").unwrap_or_else(|_| EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let result = match cli.command {
        Command::Compile { src, out, name } => compile::run(&src, &out, name),
        Command::ImportWsdl { source, out } => import::run(&source, out.as_deref()),
        Command::Serve { config, listen, base_url, store, idle_threshold } => {
            serve::run(serve::Overrides { config, listen, base_url, store, idle_threshold })
        }
        Command::Simulate { spec, out, n, passivation, seed } => {
            simulate::run(spec.as_deref(), out.as_deref(), n, passivation.map(|s| matches!(s, Switch::On)), seed)
        }
        Command::Version => {
            println!("muit {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Domain(m) | Failure::Env(m) if !m.is_empty() => eprintln!("muit: {m}"),
                _ => {}
            }
            ExitCode::from(f.code())
        }
    }
}
