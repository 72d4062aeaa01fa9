//! `kestance`: command-line driver for the stance-detection pipeline.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid
//! configuration.

mod commands;
mod config;
mod log;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, Ctx};

#[derive(Parser)]
#[command(
    name = "kestance",
    version,
    about = "Knowledge- and sentiment-enhanced stance detection",
    after_help = "Any other --section.key=value argument overrides the config file, e.g. --stance.epochs=5."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Seed-filter a triple dump down to the concepts the corpus mentions.
    ExtractSubgraph(Common),
    /// Pretrain the graph autoencoder and export concept features.
    PretrainKg(Common),
    /// Pretrain the sentiment encoder on a rated corpus.
    PretrainSentiment(Common),
    /// Train a stance classifier, keeping the best-dev checkpoint.
    TrainStance(Common),
    /// Predict a test split and score it.
    Evaluate(Common),
    /// Accuracy by document sentiment and gold stance.
    AnalyzeSentimentStance(Common),
    /// Zero-shot macro-F1 as the knowledge graph is subsampled.
    AblateKgCoverage(Common),
    /// Write a synthetic benchmark suite.
    GenSynthetic(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed [default: 42].
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: $KESTANCE_OUT_DIR, else ./kestance-out].
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::ExtractSubgraph(c) => ("extract-subgraph", c),
            Command::PretrainKg(c) => ("pretrain-kg", c),
            Command::PretrainSentiment(c) => ("pretrain-sentiment", c),
            Command::TrainStance(c) => ("train-stance", c),
            Command::Evaluate(c) => ("evaluate", c),
            Command::AnalyzeSentimentStance(c) => ("analyze-sentiment-stance", c),
            Command::AblateKgCoverage(c) => ("ablate-kg-coverage", c),
            Command::GenSynthetic(c) => ("gen-synthetic", c),
        }
    }
}

const OWN_FLAGS: [&str; 3] = ["config", "seed", "out"];

/// Pulls `--key=value` config overrides out of the argument list.
fn split_overrides(args: Vec<OsString>) -> (Vec<OsString>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for a in args {
        if let Some((k, v)) = a.to_str().and_then(|s| s.strip_prefix("--")).and_then(|s| s.split_once('=')) {
            if !OWN_FLAGS.contains(&k) {
                overrides.push((k.to_string(), v.to_string()));
                continue;
            }
        }
        rest.push(a);
    }
    (rest, overrides)
}

fn execute(command: &str, common: &Common, overrides: &[(String, String)]) -> Result<String, CliError> {
    let cfg = config::load(common.config.as_deref(), overrides, common.seed, common.out.as_deref())?;
    commands::required_inputs(command, &cfg)?;
    let mut ctx = Ctx::new(cfg);
    std::fs::create_dir_all(&ctx.out)?;
    let echo = serde_json::to_string_pretty(&ctx.cfg).expect("config serializes") + "\n";
    std::fs::write(ctx.out.join(format!("{command}.config.json")), echo)?;
    let result = commands::run(command, &mut ctx);
    ctx.log.write(&ctx.out.join(format!("{command}.metrics.jsonl")))?;
    result
}

fn main() -> ExitCode {
    let (args, overrides) = split_overrides(std::env::args_os().collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (command, common) = cli.command.parts();
    match execute(command, common, &overrides) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e @ CliError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_are_separated_from_flags() {
        let args = ["kestance", "train-stance", "--seed=3", "--stance.epochs=2", "--out", "x", "--variant=BS"]
            .map(OsString::from)
            .to_vec();
        let (rest, ov) = split_overrides(args);
        assert_eq!(rest, ["kestance", "train-stance", "--seed=3", "--out", "x"].map(OsString::from).to_vec());
        assert_eq!(
            ov,
            vec![("stance.epochs".to_string(), "2".to_string()), ("variant".to_string(), "BS".to_string())]
        );
    }
}
