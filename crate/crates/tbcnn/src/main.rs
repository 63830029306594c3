//! Command-line entry point: staged experiment commands over one config.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tbcnn::config::{ExperimentConfig, SystemKind};
use tbcnn::error::Result;
use tbcnn::harness;

#[derive(Parser)]
#[command(name = "tbcnn", about = "Topic-augmented CNN text classification experiments")]
struct Cli {
    /// Experiment configuration file.
    #[arg(long, global = true, default_value = "config/default.toml")]
    config: PathBuf,

    /// Master seed, overriding the config's run.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, overriding the config's run.out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Config override as section.key=value; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize, build the vocabulary, encode both splits, load embeddings.
    Prepare,
    /// Fit the topic model and assign topics to every document.
    Lda {
        /// Sweep the candidate topic counts even when one is fixed.
        #[arg(long)]
        sweep: bool,
    },
    /// Train one system from the prepared artifacts.
    Train {
        #[arg(long, value_parser = parse_system)]
        system: SystemKind,
    },
    /// Score every requested system on the test split.
    Evaluate,
    /// Render the comparison table from the stored results.
    Report,
    /// The whole pipeline end to end.
    RunAll,
}

fn parse_system(text: &str) -> std::result::Result<SystemKind, String> {
    SystemKind::parse(text)
        .ok_or_else(|| format!("unknown system `{text}`, expected mnb|bow-svm|nbsvm|textcnn|tbcnn"))
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&cli.config)?;
    for assignment in &cli.overrides {
        config.apply_override(assignment)?;
    }
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.run.out = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::Prepare => {
            let s = harness::prepare(&config)?;
            println!(
                "prepared {} train / {} test documents, vocabulary {}, length {}",
                s.train_docs, s.test_docs, s.vocab_size, s.encoded_length
            );
            if let Some(e) = s.embedding {
                let source = if e.pretrained { "pretrained" } else { "random" };
                println!(
                    "embeddings: {source}, dim {}, coverage {:.1}%",
                    e.dim,
                    e.coverage * 100.0
                );
            }
        }
        Command::Lda { sweep } => {
            let s = harness::fit_lda(&config, *sweep)?;
            let chosen = if s.swept { "swept to" } else { "fixed at" };
            println!(
                "topic model {chosen} {} topics, train perplexity {:.2}, fit {:.1}s",
                s.num_topics, s.train_perplexity, s.fit_seconds
            );
            if !s.topic_vectors_built {
                println!("topic vectors skipped: no embedding matrix prepared");
            }
        }
        Command::Train { system } => {
            let s = harness::train_system(&config, *system)?;
            println!(
                "trained {} in {:.1}s ({})",
                system.display_name(),
                s.fit_seconds,
                s.detail
            );
        }
        Command::Evaluate => {
            let report = harness::evaluate(&config)?;
            println!("evaluated {} systems", report.rows.len());
        }
        Command::Report => {
            print!("{}", harness::render_report(&config)?);
        }
        Command::RunAll => {
            harness::run_experiment(&config)?;
            print!("{}", harness::render_report(&config)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Display strings already chain their causes.
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
