//! Command-line front end for `hodgelab`.
//!
//! Every command writes versioned JSON reports (and CSV grids where useful)
//! into the output directory. Reports depend only on the inputs and the seed,
//! so identical runs produce byte-identical files.

pub mod accept;
pub mod commands;
pub mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use thiserror::Error;

pub use config::{RunConfig, OUT_ENV, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ACCEPTANCE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_AMBIGUOUS: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("numerical ambiguity: {0}")]
    Ambiguous(String),

    #[error("acceptance failed: items {0:?}")]
    AcceptanceFailed(Vec<u32>),

    #[error(transparent)]
    Core(hodgelab::Error),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<hodgelab::Error> for CliError {
    fn from(e: hodgelab::Error) -> Self {
        use hodgelab::Error as E;
        match e {
            E::RankAmbiguous { .. } | E::ClusterSplit(_) | E::DegenerateForm { .. } => {
                CliError::Ambiguous(e.to_string())
            }
            E::BuilderParam { .. } | E::DeskScaleLimit { .. } | E::SignatureDimension(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Ambiguous(_) => EXIT_AMBIGUOUS,
            CliError::AcceptanceFailed(_) => EXIT_ACCEPTANCE,
            // bad input files are usage errors; numerical failures are not
            CliError::Io { .. } | CliError::Json(_) => EXIT_USAGE,
            CliError::Core(
                hodgelab::Error::Invalid(_) | hodgelab::Error::Io(_) | hodgelab::Error::Json(_),
            ) => EXIT_USAGE,
            CliError::Core(_) => EXIT_ACCEPTANCE,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "hodgelab",
    version,
    about = "Hodge-Dirac laboratory on triangulated manifolds"
)]
pub struct Cli {
    /// Output directory (overrides the HODGELAB_OUT environment variable).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Seed for every randomized estimator.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Run configuration file; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a mesh, write it as JSON and print its summary.
    Mesh(commands::MeshArgs),
    /// Euler index of D₊ and, in dimensions 4j, the signature.
    Index(commands::IndexArgs),
    /// Bisectoriality sweeps, contour calculus and sign probes.
    Funcalc(commands::FuncalcArgs),
    /// Run the acceptance suite.
    Accept(accept::AcceptArgs),
}

/// Runs one parsed invocation and returns the process exit code on success.
pub fn run(cli: Cli) -> CliResult<i32> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.output_dir = config::resolve_output_dir(cli.out.as_deref(), &cfg);
    match cli.command {
        Command::Mesh(args) => commands::cmd_mesh(&args, &mut cfg),
        Command::Index(args) => commands::cmd_index(&args, &mut cfg),
        Command::Funcalc(args) => commands::cmd_funcalc(&args, &mut cfg),
        Command::Accept(args) => accept::cmd_accept(&args, &mut cfg),
    }
}
