//! Operator surface: one binary wiring config, gateway, and pipeline stages
//! together, offline (scripted backends) or live.

mod commands;
mod support;

use clap::{Parser, Subcommand};

use commands::{report, search, seed};

#[derive(Parser)]
#[command(
    name = "glotprobe",
    version,
    about = "Probes black-box language models for cross-lingual weaknesses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample questions and build verified bilingual seed pairs
    Seed(seed::SeedArgs),
    /// Beam-search seed pairs for cross-lingual weaknesses (or run a baseline)
    Search(Box<search::SearchArgs>),
    /// Evaluate candidates against target models into an accuracy table
    Evaluate(report::EvaluateArgs),
    /// Re-translate candidate pairs into additional languages
    Expand(report::ExpandArgs),
    /// Compute relative affinity scores from an accuracy matrix
    Affinity(report::AffinityArgs),
    /// Assign candidates to subject domains
    Categorize(report::CategorizeArgs),
    /// Join a cost ledger with run stats into a per-language table
    Cost(report::CostArgs),
    /// Pairwise cosine distances over normalized embeddings
    Distances(report::DistancesArgs),
    /// Export candidates as fine-tuning records
    Export(report::ExportArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Seed(args) => seed::run(args),
        Command::Search(args) => search::run(args),
        Command::Evaluate(args) => report::evaluate(args),
        Command::Expand(args) => report::expand(args),
        Command::Affinity(args) => report::affinity(args),
        Command::Categorize(args) => report::categorize(args),
        Command::Cost(args) => report::cost(args),
        Command::Distances(args) => report::distances(args),
        Command::Export(args) => report::export(args),
    };
    if let Err(e) = result {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
