//! Shared fixtures for the integration tests: a tiny separable sentiment
//! corpus written as TSV splits, plus a config sized for seconds-long runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;

use tbcnn::config::ExperimentConfig;
use tbcnn::seeding;

const POSITIVE: [&str; 5] = ["great", "lovely", "superb", "warm", "delight"];
const NEGATIVE: [&str; 5] = ["dull", "awful", "tedious", "bleak", "grim"];
const FILLER: [&str; 4] = ["the", "movie", "plot", "was"];

/// One split: alternating labels, each document drawing four words from its
/// class lexicon and three fillers, so every system can separate it.
fn render_split(docs: usize, seed: u64, label_of: impl Fn(usize) -> usize) -> String {
    let mut rng = seeding::stage_rng(seed, "toy-corpus");
    let mut out = String::new();
    for i in 0..docs {
        let label = label_of(i);
        let lexicon = if label == 1 { POSITIVE } else { NEGATIVE };
        let mut tokens = Vec::new();
        for _ in 0..4 {
            tokens.push(lexicon[rng.gen_range(0..lexicon.len())]);
        }
        for _ in 0..3 {
            tokens.push(FILLER[rng.gen_range(0..FILLER.len())]);
        }
        let name = if label == 1 { "pos" } else { "neg" };
        writeln!(out, "{name}\t{}", tokens.join(" ")).expect("string write");
    }
    out
}

pub fn write_toy_corpus(dir: &Path, train_docs: usize, test_docs: usize, seed: u64) -> (PathBuf, PathBuf) {
    let train = dir.join("train.tsv");
    let test = dir.join("test.tsv");
    std::fs::write(&train, render_split(train_docs, seed, |i| i % 2)).unwrap();
    std::fs::write(&test, render_split(test_docs, seed ^ 0x9e37, |i| (i / 2) % 2)).unwrap();
    (train, test)
}

/// Config tuned to finish the whole five-system pipeline in seconds.
pub fn toy_config(train: PathBuf, test: PathBuf, out: PathBuf, seed: u64) -> ExperimentConfig {
    let mut config = ExperimentConfig::default();
    config.data.train = train;
    config.data.test = test;
    config.data.max_length = 12;
    config.data.min_count = 1;
    config.data.max_vocab = 100;
    config.lda.topics = Some(3);
    config.lda.iterations = 150;
    config.lda.burn_in = 30;
    config.lda.fold_in_sweeps = 20;
    config.embedding.dim = 8;
    config.embedding.keywords = 3;
    config.cnn.region_sizes = vec![2, 3];
    config.cnn.filters_per_size = 4;
    config.train.batch_size = 4;
    config.train.epochs = 30;
    config.train.learning_rate = 0.01;
    config.baselines.svm_epochs = 10;
    config.run.out = out;
    config.run.seed = seed;
    config
}

/// Report TSV with the Seconds column blanked, for determinism comparisons.
pub fn mask_seconds(tsv: &str) -> String {
    let mut out = String::new();
    for (i, line) in tsv.lines().enumerate() {
        let mut fields: Vec<&str> = line.split('\t').collect();
        if i > 0 && fields.len() == 7 {
            fields[5] = "-";
        }
        writeln!(out, "{}", fields.join("\t")).expect("string write");
    }
    out
}
