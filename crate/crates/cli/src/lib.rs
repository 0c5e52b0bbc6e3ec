//! The `radsearch` command line.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use radsearch_service::auth::Tier;

pub mod checks;
pub mod commands;
pub mod config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input, arguments or configuration.
    #[error("{0}")]
    User(String),
    /// Storage or runtime failure.
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "radsearch", version, about = "Full-text search over radiology reports")]
pub struct Cli {
    /// Configuration file; falls back to $RADSEARCH_CONFIG.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a JSON Lines file, or every .jsonl file of a directory in name order.
    Index(IndexArgs),
    /// Run one query against the index.
    Search(SearchArgs),
    /// Start the HTTP service and the refresh scheduler.
    Serve(ServeArgs),
    /// Manage service accounts.
    #[command(subcommand)]
    User(UserCommand),
    /// Validation sweep and latency benchmark on synthetic corpora.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Same as `eval bench`.
    #[command(hide = true)]
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    pub input: PathBuf,
    /// Exit 0 even when records were rejected.
    #[arg(long)]
    pub allow_rejects: bool,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    pub query: String,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub page: u64,
    /// Modality code; repeat or separate with commas.
    #[arg(long, value_delimiter = ',')]
    pub modality: Vec<String>,
    /// Earliest study time, RFC 3339 or YYYY-MM-DD.
    #[arg(long)]
    pub from: Option<String>,
    /// Latest study time; a bare date covers the whole day.
    #[arg(long)]
    pub to: Option<String>,
    /// Keep one hit per value of this field.
    #[arg(long, value_name = "FIELD")]
    pub collapse: Option<String>,
    /// Show the score breakdown of every hit.
    #[arg(long)]
    pub explain: bool,
    /// Print the response as the HTTP API would.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Overrides `service.bind`.
    #[arg(long)]
    pub bind: Option<std::net::SocketAddr>,
    /// Do not start the refresh scheduler.
    #[arg(long)]
    pub no_schedule: bool,
}

#[derive(Debug, Subcommand)]
pub enum UserCommand {
    /// Add an account. The password is read from the first line of stdin.
    Add {
        user_id: String,
        #[arg(long)]
        tier: Tier,
        /// Approved protocol identifier, required for researcher accounts.
        #[arg(long)]
        protocol: Option<String>,
    },
    /// List accounts.
    List,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Sensitivity and specificity against operator count for each scenario.
    Run(EvalArgs),
    /// Latency against result count on a Zipf-distributed corpus.
    Bench(BenchArgs),
    /// Print the built-in corpus and scenario definition as JSON, a starting
    /// point for `eval run --scenarios`.
    Spec,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Corpus and scenario definition (JSON); the built-in five scenarios when absent.
    #[arg(long, value_name = "FILE")]
    pub scenarios: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value = "eval-out")]
    pub out: PathBuf,
    /// Exit 1 when a threshold fails.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 100_000)]
    pub docs: usize,
    #[arg(long, default_value_t = 500)]
    pub queries: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value = "bench-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub strict: bool,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let loaded = config::load(cli.config.as_deref())?;
    commands::init_logging(cli.verbose, loaded.config.log.as_deref());
    match cli.command {
        Command::Index(args) => commands::index(&loaded, &args),
        Command::Search(args) => commands::search(&loaded, &args),
        Command::Serve(args) => commands::serve(&loaded, &args),
        Command::User(cmd) => commands::accounts(&loaded, cmd),
        Command::Eval(EvalCommand::Run(args)) => commands::eval_run(&loaded, &args),
        Command::Eval(EvalCommand::Spec) => commands::print_spec(),
        Command::Eval(EvalCommand::Bench(args)) | Command::Bench(args) => commands::bench(&loaded, &args),
    }
}
