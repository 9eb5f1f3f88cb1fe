use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Debug, Parser)]
#[command(
    name = "scfg-moments",
    version,
    about = "Cross-moments of additive statistics of stochastic context-free grammars"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check properness, usefulness and consistency (ρ(M) < 1).
    Validate(GrammarArgs),
    /// Cross-moments m^(α) for every nonterminal and every α ≤ ν.
    Moments(MomentArgs),
    /// Conditional cross-moments given a string, from the inside algorithm.
    Conditional(ConditionalArgs),
    /// Derivational entropy, or conditional entropy of the parses of a string.
    Entropy(EntropyArgs),
    /// Brute-force moment sums over enumerated derivations.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
struct GrammarArgs {
    /// Grammar file.
    #[arg(short, long)]
    grammar: PathBuf,
    /// Rescale rule probabilities so every premise sums to 1.
    #[arg(long)]
    normalize: bool,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct FeatureArgs {
    /// Comma-separated generators: derivation-length, string-length,
    /// surprisal, file (all columns from the grammar file) or file:K.
    /// Defaults to `file` when the grammar has features, else
    /// `derivation-length`.
    #[arg(long)]
    features: Option<String>,
    /// Moment order as comma-separated exponents, one per feature
    /// (defaults to 1 for each).
    #[arg(long)]
    nu: Option<String>,
}

#[derive(Debug, Args)]
struct MomentArgs {
    #[command(flatten)]
    grammar: GrammarArgs,
    #[command(flatten)]
    features: FeatureArgs,
}

#[derive(Debug, Args)]
struct ConditionalArgs {
    #[command(flatten)]
    grammar: GrammarArgs,
    #[command(flatten)]
    features: FeatureArgs,
    /// Whitespace-separated terminals.
    #[arg(short = 'u', long = "string", allow_hyphen_values = true)]
    string: String,
    /// Root nonterminal (defaults to the start symbol).
    #[arg(long)]
    nonterminal: Option<String>,
}

#[derive(Debug, Args)]
struct EntropyArgs {
    #[command(flatten)]
    grammar: GrammarArgs,
    /// Also report the conditional entropy of the parses of this string.
    #[arg(short = 'u', long = "string")]
    string: Option<String>,
    #[arg(long)]
    nonterminal: Option<String>,
    /// Report in bits instead of nats.
    #[arg(long)]
    bits: bool,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    grammar: GrammarArgs,
    #[command(flatten)]
    features: FeatureArgs,
    /// Sum over the parses of this string instead of all derivations.
    #[arg(short = 'u', long = "string")]
    string: Option<String>,
    #[arg(long)]
    nonterminal: Option<String>,
    /// Longest derivation enumerated.
    #[arg(long, default_value_t = 30)]
    max_steps: usize,
    /// Assumed bound on |X^α|, used to turn the tail mass into an error
    /// bound for α ≠ 0.
    #[arg(long)]
    x_cap: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Validate(a) => commands::validate(&a),
        Command::Moments(a) => commands::moments(&a),
        Command::Conditional(a) => commands::conditional(&a),
        Command::Entropy(a) => commands::entropy(&a),
        Command::Oracle(a) => commands::oracle(&a),
    };
    match result {
        Ok(out) => {
            print!("{}", out.text);
            ExitCode::from(out.status)
        }
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.status)
        }
    }
}
