use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use kgcl::eval::Protocol;
use kgcl::train::Mode;

#[derive(Debug, Parser)]
#[command(name = "kgcl", version, about = "Continual knowledge-graph embedding: train, evaluate, simulate and teach")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world and split it into learning sessions.
    Generate(GenerateArgs),
    /// Train over the sessions of a manifest and print the evaluation matrix.
    Train(TrainArgs),
    /// Score one split with a saved checkpoint.
    Eval(EvalArgs),
    /// Run the explore/train loop against a simulated teacher.
    Simulate(SimulateArgs),
    /// Answer the robot's questions on the terminal, or serve them over HTTP.
    Teach(TeachArgs),
    /// Dump a KB snapshot as TSV and CSV reports.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output directory for the split files and manifest.toml.
    #[arg(long)]
    pub out: PathBuf,
    /// Use the frozen benchmark world and sessions; other world flags are ignored.
    #[arg(long)]
    pub benchmark: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rooms: Option<usize>,
    #[arg(long)]
    pub objects: Option<usize>,
    #[arg(long)]
    pub novel_objects: Option<usize>,
    #[arg(long, default_value_t = 6)]
    pub sessions: usize,
    #[arg(long, default_value_t = 0.8)]
    pub novel_fraction: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Session manifest written by `generate`.
    #[arg(long, value_name = "MANIFEST")]
    pub sessions: PathBuf,
    #[arg(long, default_value = "continual")]
    pub mode: Mode,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the matrix, per-epoch curves, checkpoint and KB snapshot here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// KB snapshot holding the vocabulary and the known triples.
    #[arg(long)]
    pub kb: PathBuf,
    /// Triple TSV to score.
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, default_value = "filtered")]
    pub protocol: Protocol,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 10)]
    pub cycles: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train after every N acquisitions, overriding the configured condition.
    #[arg(long)]
    pub quota: Option<usize>,
    /// Write the timeline, KB snapshot, checkpoint and acquired triples here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TeachArgs {
    /// Starting KB: a snapshot or a triple TSV. Defaults to an empty KB with
    /// the household relations.
    #[arg(long)]
    pub kb: Option<PathBuf>,
    /// Resume from a trained checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Question templates (TSV: relation, question, correction prompt).
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Objects to ask about, in order. Further labels are read from stdin.
    #[arg(long = "detect", value_name = "LABEL")]
    pub detections: Vec<String>,
    /// Serve questions over HTTP instead of the terminal.
    #[arg(long)]
    pub serve: bool,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    /// Save the KB snapshot here on exit.
    #[arg(long)]
    pub save_kb: Option<PathBuf>,
    /// Save the model checkpoint here on exit.
    #[arg(long)]
    pub save_checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// KB snapshot or triple TSV.
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}
