mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ConfigArgs;

/// Error caused by the invocation rather than by the data; exits with 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser)]
#[command(name = "soundscribe", version, about = "Zero-shot audio captioning with keyword prompts and audio-guided decoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Caption clips and print one line per clip
    Caption(CaptionArgs),
    /// Score candidate captions against references
    Evaluate(EvaluateArgs),
    /// Keyword-list × MAGIC on/off grid, plus a greedy baseline row
    Ablate(AblateArgs),
    /// One-axis parameter sweep
    Sweep(SweepArgs),
    /// Keyword-list utilities
    #[command(subcommand)]
    Keywords(KeywordsCommand),
    /// Fixture-file utilities
    #[command(subcommand)]
    Fixtures(FixturesCommand),
}

#[derive(Args)]
pub struct CaptionArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Clip id to caption; repeat for several (default: every clip)
    #[arg(long = "clip", value_name = "ID")]
    pub clips: Vec<String>,
    /// Disable the alignment term; with -l 0 this runs the greedy baseline
    #[arg(long)]
    pub no_magic: bool,
    /// Print every step's scored candidates
    #[arg(long)]
    pub trace: bool,
    /// Also write captions as a candidates JSON file (with a sidecar)
    #[arg(long, short, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// `{"clip_id": "caption"}` JSON
    #[arg(long, value_name = "FILE")]
    pub candidates: PathBuf,
    /// `{"clip_id": ["reference", ...]}` JSON
    #[arg(long, value_name = "FILE")]
    pub refs: PathBuf,
    /// Print the full report, per clip included, as JSON
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Extra keyword list as NAME=FILE; repeatable
    #[arg(long = "list", value_name = "NAME=FILE")]
    pub lists: Vec<String>,
    /// Skip the greedy baseline row
    #[arg(long)]
    pub no_greedy: bool,
    /// Write the CSV here (plus `<FILE>.meta.json`) instead of stdout
    #[arg(long, short, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("grid").required(true).args(["axis", "preset"]))]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// w_confidence, w_degeneration, w_magic, tau, l, k or keyword_list
    #[arg(long, requires = "values")]
    pub axis: Option<String>,
    /// Comma-separated values along the axis
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<String>,
    /// Named grid: keyword-count, beta-as-confidence, beta-as-magic, temperature
    #[arg(long, conflicts_with_all = ["axis", "values"])]
    pub preset: Option<String>,
    /// Named keyword list as NAME=FILE for the keyword_list axis; repeatable
    #[arg(long = "list", value_name = "NAME=FILE")]
    pub lists: Vec<String>,
    /// Write the CSV here (plus `<FILE>.meta.json`) instead of stdout
    #[arg(long, short, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum KeywordsCommand {
    /// Merge lists in order, dropping duplicates, and print the counts
    Merge {
        #[arg(required = true, num_args = 2..)]
        inputs: Vec<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Normalize one list (split compounds, trim, de-duplicate)
    Normalize {
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Rank keywords against one clip
    Select {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_name = "ID")]
        clip: String,
    },
}

#[derive(Subcommand)]
pub enum FixturesCommand {
    /// Write the toy world as fixture files plus references and a config
    GenToy {
        #[arg(long, value_name = "DIR")]
        dir: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Load fixture files and report what they contain
    Validate {
        #[arg(long, value_name = "FILE")]
        embeddings: PathBuf,
        #[arg(long, value_name = "FILE")]
        lm: PathBuf,
        /// Also check that every manifest clip has an audio record
        #[arg(long, value_name = "FILE")]
        manifest: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Caption(a) => commands::caption(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Keywords(c) => commands::keywords(c),
        Command::Fixtures(c) => commands::fixtures(c),
    };
    match result {
        Ok(code) => code,
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
