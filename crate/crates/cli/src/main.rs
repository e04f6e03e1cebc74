//! `ontosum` command-line entry point.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use ontosum::config::RunConfig;
use ontosum::Error;

#[derive(Parser, Debug)]
#[command(name = "ontosum", version, about = "Ontology-aware summarization of report findings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every configured subcommand; they override the file.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Flat key = value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// filtered | all-ontology | plain
    #[arg(long)]
    pub mode: Option<String>,
    /// Any configuration key, e.g. `--set beam_size=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Align findings with impressions and write copy tags.
    Label {
        #[command(flatten)]
        common: Common,
        /// Output path (default: the configured tagged dataset).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train the content selector on the tagged dataset.
    TrainSelector {
        #[command(flatten)]
        common: Common,
    },
    /// Train the summarizer in the configured mode.
    TrainSummarizer {
        #[command(flatten)]
        common: Common,
        /// Selector checkpoint (filtered mode).
        #[arg(long)]
        selector: Option<PathBuf>,
    },
    /// Generate impressions with a trained summarizer.
    Summarize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        selector: Option<PathBuf>,
        /// Reports to summarize (default: the test split of the configured corpus).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score generations; with `--compare`, run paired t-tests.
    Evaluate {
        #[arg(long)]
        generations: PathBuf,
        #[arg(long)]
        compare: Option<PathBuf>,
        /// Report path; `.json` selects JSON, anything else CSV.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Dev ROUGE of a filtered summarizer over a grid of copying thresholds.
    SweepEpsilon {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        selector: Option<PathBuf>,
    },
    /// Write a synthetic corpus and its lexicon.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 250)]
        reports: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn load_config(common: &Common) -> ontosum::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(eps) = common.epsilon {
        cfg.set("epsilon", &eps.to_string())?;
    }
    if let Some(mode) = &common.mode {
        cfg.set("mode", mode)?;
    }
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    let defaults = cfg.defaults_used();
    if !defaults.is_empty() {
        info!("defaults used for: {}", defaults.join(", "));
    }
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Contract(_) => 1,
        Error::Numerical(_) => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> ontosum::Result<()> {
    match cli.command {
        Command::Label { common, output } => commands::label(&load_config(&common)?, output),
        Command::TrainSelector { common } => commands::train_selector(&load_config(&common)?),
        Command::TrainSummarizer { common, selector } => commands::train_summarizer(&load_config(&common)?, selector),
        Command::Summarize {
            common,
            checkpoint,
            selector,
            input,
            output,
        } => commands::summarize(&load_config(&common)?, &checkpoint, selector, input, output),
        Command::Evaluate {
            generations,
            compare,
            output,
        } => commands::evaluate(&generations, compare.as_deref(), output),
        Command::SweepEpsilon {
            common,
            checkpoint,
            selector,
        } => commands::sweep_epsilon(&load_config(&common)?, &checkpoint, selector),
        Command::Synth { out_dir, reports, seed } => commands::synth(&out_dir, reports, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
