use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use rstsplit::eval::Convention;
use rstsplit::{Aggregation, BoundaryMode, FusionOrder, LabelSpaceMode};

mod commands;
mod config;
mod exit;

#[derive(Parser)]
#[command(name = "rstsplit", version, about = "Top-down RST discourse parser")]
struct Cli {
    /// Worker threads for parsing and training batches.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic corpus.
    Generate(GenerateArgs),
    /// Convert a directory of `.dis` files into a corpus.
    ConvertDis(ConvertArgs),
    /// Train a parser and write a checkpoint.
    Train(TrainArgs),
    /// Parse every document of a corpus.
    Parse(ParseArgs),
    /// Score predicted trees against gold.
    Evaluate(EvaluateArgs),
    /// Finite-difference check of the full training loss.
    Gradcheck(GradcheckArgs),
    /// Print one tree with its EDU texts.
    Inspect(InspectArgs),
}

fn enum_arg<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub docs: usize,
    #[arg(long, default_value_t = 2)]
    pub min_edus: usize,
    #[arg(long, default_value_t = 8)]
    pub max_edus: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of distinct filler words.
    #[arg(long, default_value_t = 50)]
    pub vocab: usize,
    /// Mask the structure-revealing first and last token of every EDU.
    #[arg(long)]
    pub ablate_markers: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ConvertArgs {
    /// Directory holding `*.dis` files.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Fine-to-coarse relation map; the built-in map by default.
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-epoch JSON lines; defaults to `<out>.log.jsonl`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// EMB1 file for precomputed embeddings.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = enum_arg::<BoundaryMode>)]
    pub boundary: Option<BoundaryMode>,
    #[arg(long, value_parser = enum_arg::<Aggregation>)]
    pub aggregation: Option<Aggregation>,
    #[arg(long, value_parser = enum_arg::<FusionOrder>)]
    pub fusion: Option<FusionOrder>,
    #[arg(long, value_parser = enum_arg::<LabelSpaceMode>)]
    pub label_space: Option<LabelSpaceMode>,
}

#[derive(Args)]
pub struct ParseArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Beam size; 1 decodes greedily.
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, value_parser = enum_arg::<Convention>)]
    pub convention: Option<Convention>,
    /// Also write the full-precision report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Check at most this many evenly spaced entries per tensor.
    #[arg(long)]
    pub max_entries: Option<usize>,
}

#[derive(Args)]
pub struct InspectArgs {
    /// Tree file written by `parse`, or a corpus with gold trees.
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long)]
    pub doc: String,
    /// Corpus supplying EDU texts when the tree file has none.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(exit::CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(exit::CONFIG);
        }
    }
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::ConvertDis(a) => commands::convert_dis(a),
        Command::Train(a) => commands::train(a),
        Command::Parse(a) => commands::parse(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Inspect(a) => commands::inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
