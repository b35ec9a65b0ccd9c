//! Command-line front end: synthetic data, subword training, model
//! training, controlled generation, evaluation and probes.

pub mod commands;
pub mod config;
pub mod files;
pub mod report;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "mvg", version, about = "Multilingual semantic/syntactic VAE toolkit")]
pub struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Top-level seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic bilingual world with gold labels.
    GenSynth {
        #[arg(long)]
        out: PathBuf,
        /// Bitext pairs to generate.
        #[arg(long)]
        n_pairs: Option<usize>,
    },
    /// Learn a joint subword model from a bitext.
    Bpe {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "l1")]
        src_lang: String,
        #[arg(long, default_value = "l2")]
        tgt_lang: String,
        #[arg(long)]
        merges: Option<i64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes checkpoints, metrics.csv and a report to `--out`.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        bpe: Option<PathBuf>,
        /// Dev triples for BLEU-based early stopping.
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Parse bank as `LANG=PATH`; repeatable. With banks, word noise
        /// swaps words only for words of the same POS tag.
        #[arg(long = "bank", value_parser = parse_bank_arg)]
        banks: Vec<(String, PathBuf)>,
        /// Continue from `--out`/last.ckpt.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Controlled generation for a file of triples.
    Generate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        triples: PathBuf,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score paraphrase hypotheses.
    EvalPara(EvalArgs),
    /// Score translation hypotheses.
    EvalMt(EvalArgs),
    /// Semantic similarity probe.
    EvalSts {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        lang: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Syntactic retrieval probes over a parse bank and an optional probe set.
    EvalSyn {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        lang: String,
        #[arg(long)]
        probe: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nearest neighbors under one latent variable.
    Nn {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        lang: String,
        /// `semantic` or `syntactic`.
        #[arg(long)]
        variable: String,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Generation output (JSONL).
    #[arg(long)]
    pub hyps: PathBuf,
    #[arg(long)]
    pub triples: PathBuf,
    /// Parse bank for the parser, as `LANG=PATH`; repeatable.
    #[arg(long = "bank", value_parser = parse_bank_arg)]
    pub banks: Vec<(String, PathBuf)>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_bank_arg(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((l, p)) if !l.is_empty() && !p.is_empty() => Ok((l.to_string(), PathBuf::from(p))),
        _ => Err(format!("expected LANG=PATH, got `{s}`")),
    }
}

/// Effective configuration: defaults, then the file, then `--seed`.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    commands::dispatch(cli.command, cfg)
}

/// Short category for the structured error line.
pub fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<mvgvae::Error>() {
            return match e {
                mvgvae::Error::Io { .. } => "io",
                mvgvae::Error::Format { .. } | mvgvae::Error::Bracket { .. } | mvgvae::Error::Json(_) => "format",
                mvgvae::Error::Config(_) => "config",
                mvgvae::Error::UnknownLanguage(_) | mvgvae::Error::UnknownId(_) => "vocabulary",
                mvgvae::Error::Shape(_) | mvgvae::Error::Invalid(_) => "invalid-input",
                mvgvae::Error::NonFinite(_) => "numeric",
                mvgvae::Error::Checkpoint(_) => "checkpoint",
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() || cause.downcast_ref::<serde_json::Error>().is_some() {
            return "format";
        }
    }
    "error"
}
