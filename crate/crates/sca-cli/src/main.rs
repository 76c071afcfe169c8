use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sca_cli::commands::{
    cmd_experiment, cmd_owner_prepare, cmd_server_index, cmd_user_query, QueryMode, Study,
    UserQueryArgs,
};
use sca_cli::config::load_config;
use sca_cli::error::Result;

#[derive(Parser)]
#[command(
    name = "sca",
    about = "Privacy-preserving similarity search via sparse coding with ambiguation",
    version
)]
struct Cli {
    /// Experiment configuration file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the master seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate data, learn the transform, encode, ambiguate, and write the
    /// public artifacts (data, transform, released codebook).
    OwnerPrepare,
    /// Load a released codebook and report index statistics.
    ServerIndex {
        /// Codebook file; defaults to <out>/codebook.scac.
        #[arg(long)]
        codebook: Option<PathBuf>,
    },
    /// Encode a query vector, search the index, and reconstruct the pick.
    UserQuery {
        /// Query vector as a single-column matrix file.
        #[arg(long)]
        query: PathBuf,
        /// Transform file; defaults to <out>/transform.scam.
        #[arg(long)]
        transform: Option<PathBuf>,
        /// Codebook file; defaults to <out>/codebook.scac.
        #[arg(long)]
        codebook: Option<PathBuf>,
        /// Query-side noise budget; defaults to the config value.
        #[arg(long)]
        s_q: Option<usize>,
        /// Absolute search radius; defaults to the config radius rule.
        #[arg(long)]
        radius: Option<f64>,
        /// Whether the caller holds the support key.
        #[arg(long, value_enum, default_value_t = QueryMode::Authorized)]
        mode: QueryMode,
    },
    /// Run one evaluation study and write its CSV into the output directory.
    Experiment {
        #[arg(long, value_enum)]
        study: Study,
    },
}

fn run(cli: Cli) -> Result<()> {
    let config_path = cli.config.as_deref().ok_or_else(|| {
        sca_cli::error::CliError::Config("--config is required".into())
    })?;
    let mut cfg = load_config(config_path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    match cli.command {
        Command::OwnerPrepare => cmd_owner_prepare(&cfg),
        Command::ServerIndex { codebook } => {
            let path = codebook.unwrap_or_else(|| sca_cli::commands::codebook_path(&cfg.out_dir));
            cmd_server_index(&path)
        }
        Command::UserQuery {
            query,
            transform,
            codebook,
            s_q,
            radius,
            mode,
        } => cmd_user_query(
            &cfg,
            &UserQueryArgs {
                query,
                transform,
                codebook,
                s_q,
                radius,
                mode,
            },
        ),
        Command::Experiment { study } => cmd_experiment(&cfg, study),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
