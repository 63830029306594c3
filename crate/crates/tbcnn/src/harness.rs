//! Experiment pipeline over a shared artifact directory: prepare data, fit
//! the topic model, train each requested system, evaluate, and emit the
//! comparison report. Each stage is a standalone command reading the
//! artifacts of earlier stages from disk.
//!
//! Seed scheme: the master seed is handed to every stochastic consumer,
//! which derives its own stream as `stage_seed(master, label)` with a label
//! unique across the codebase ("lda-init", "embedding-init", "cnn-init",
//! "shuffle", "dropout", ...). Per-system baseline seeds add one level so
//! the two SVM trainers do not share shuffle streams. TextCNN and TB-CNN
//! deliberately receive identical init and shuffle seeds: their metric
//! difference then isolates the topic channel.
//!
//! Timing: `Instant` (monotonic) around model generation (feature building,
//! initialization, training) and around test-set prediction; loading
//! artifacts from disk is excluded. The report's Seconds column is the sum
//! of both, and never takes part in determinism comparisons.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;

use crate::baselines::{
    self, FeatureSpace, LinearConfig, LinearModel, LossKind, MnbModel, NbsvmModel,
};
use crate::binio;
use crate::config::{ExperimentConfig, SystemKind};
use crate::corpus::{self, LabeledDocument, PaddedDocument, Vocabulary, NUM_CLASSES, PAD_INDEX};
use crate::embedding::{EmbeddingMatrix, TopicVectorTable};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, MetricsReport, SystemRow};
use crate::neural::{self, CnnDoc, CnnModel};
use crate::seeding;
use crate::topic_model::{argmax_tie_lowest, BagCorpus, TopicModel};

/// Artifact layout inside one output directory.
pub struct ArtifactStore {
    out: PathBuf,
}

impl ArtifactStore {
    pub fn new(out: &Path) -> ArtifactStore {
        ArtifactStore { out: out.to_path_buf() }
    }

    pub fn dir(&self) -> &Path {
        &self.out
    }

    fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn config_snapshot(&self) -> PathBuf {
        self.file("config.toml")
    }
    pub fn vocab(&self) -> PathBuf {
        self.file("vocab.tsv")
    }
    pub fn encoded(&self, split: &str) -> PathBuf {
        self.file(&format!("{split}.encoded.bin"))
    }
    pub fn tokens(&self, split: &str) -> PathBuf {
        self.file(&format!("{split}.tokens.tsv"))
    }
    pub fn embeddings(&self) -> PathBuf {
        self.file("embeddings.bin")
    }
    pub fn lda_model(&self) -> PathBuf {
        self.file("lda_model.json")
    }
    pub fn lda_sweep(&self) -> PathBuf {
        self.file("lda_sweep.tsv")
    }
    pub fn topics(&self) -> PathBuf {
        self.file("topics.tsv")
    }
    pub fn topic_vectors(&self) -> PathBuf {
        self.file("topic_vectors.bin")
    }
    pub fn features(&self, system: SystemKind) -> PathBuf {
        self.file(&format!("{}.features.tsv", system.stem()))
    }
    pub fn checkpoint(&self, system: SystemKind) -> PathBuf {
        let ext = match system {
            SystemKind::Textcnn | SystemKind::Tbcnn => "bin",
            _ => "txt",
        };
        self.file(&format!("{}.model.{ext}", system.stem()))
    }
    pub fn training_log(&self, system: SystemKind) -> PathBuf {
        self.file(&format!("{}.training_log.tsv", system.stem()))
    }
    pub fn svm_tuning(&self) -> PathBuf {
        self.file("bow_svm.tuning.tsv")
    }
    pub fn timings(&self) -> PathBuf {
        self.file("timings.tsv")
    }
    pub fn report_text(&self) -> PathBuf {
        self.file("report.txt")
    }
    pub fn report_tsv(&self) -> PathBuf {
        self.file("report.tsv")
    }
    fn stale_marker(&self) -> PathBuf {
        self.file(".stale")
    }

    fn require(&self, path: PathBuf, hint: &str) -> Result<PathBuf> {
        if path.exists() {
            Ok(path)
        } else {
            Err(Error::Config(format!("missing artifact {}; {hint}", path.display())))
        }
    }

    /// Refuses to start when an earlier stage's artifacts are flagged stale
    /// from an interrupted run; rerunning the flagged stage itself (or
    /// anything before it) is allowed because that rebuilds them.
    fn check_fresh(&self, stage: &'static str) -> Result<()> {
        if let Ok(failed) = fs::read_to_string(self.stale_marker()) {
            let failed = failed.trim();
            if stage_rank(failed) < stage_rank(stage) {
                return Err(Error::Config(format!(
                    "artifacts of stage `{failed}` are stale (a previous run did not finish); rerun it first"
                )));
            }
        }
        Ok(())
    }

    /// Flags this stage's artifacts as in-flight. Called only once all
    /// inputs are resolved and computation succeeded, immediately before
    /// the first write, so a failure earlier in the stage leaves the
    /// previous artifacts intact and unflagged.
    fn begin_writes(&self, stage: &'static str) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let marker = self.stale_marker();
        fs::write(&marker, stage).map_err(|e| Error::io(&marker, e))
    }

    fn finish_stage(&self) -> Result<()> {
        let marker = self.stale_marker();
        if marker.exists() {
            fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
        }
        Ok(())
    }

    /// Recorded fit seconds, one row per trained system.
    fn load_timings(&self) -> Result<BTreeMap<String, f64>> {
        let path = self.timings();
        let mut map = BTreeMap::new();
        if !path.exists() {
            return Ok(map);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        for line in text.lines().skip(1) {
            let (system, secs) = line.split_once('\t').ok_or_else(|| Error::Config(format!(
                "malformed timing row `{line}` in {}",
                path.display()
            )))?;
            let secs: f64 = secs.parse().map_err(|_| Error::Config(format!(
                "unreadable seconds `{secs}` in {}",
                path.display()
            )))?;
            map.insert(system.to_string(), secs);
        }
        Ok(map)
    }

    fn record_timing(&self, system: SystemKind, fit_seconds: f64) -> Result<()> {
        let mut map = self.load_timings()?;
        map.insert(system.stem().to_string(), fit_seconds);
        let mut out = String::from("system\tfit_seconds\n");
        for (system, secs) in &map {
            out.push_str(&format!("{system}\t{secs}\n"));
        }
        write_text(&self.timings(), &out)
    }
}

fn stage_rank(stage: &str) -> u8 {
    match stage {
        "prepare" => 0,
        "lda" => 1,
        s if s.starts_with("train-") => 2,
        "evaluate" => 3,
        "report" => 4,
        _ => u8::MAX,
    }
}

fn train_stage_name(system: SystemKind) -> &'static str {
    match system {
        SystemKind::Mnb => "train-mnb",
        SystemKind::BowSvm => "train-bow_svm",
        SystemKind::Nbsvm => "train-nbsvm",
        SystemKind::Textcnn => "train-textcnn",
        SystemKind::Tbcnn => "train-tbcnn",
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn needs_embeddings(config: &ExperimentConfig) -> bool {
    config
        .run
        .systems
        .iter()
        .any(|&s| matches!(s, SystemKind::Textcnn | SystemKind::Tbcnn))
}

fn needs_lda(config: &ExperimentConfig) -> bool {
    config.run.systems.contains(&SystemKind::Tbcnn)
}

fn save_embedding_matrix(path: &Path, emb: &EmbeddingMatrix<f64>) -> Result<()> {
    let meta = serde_json::json!({
        "kind": "embedding-matrix",
        "rows": emb.rows(),
        "dim": emb.dim(),
        "coverage": emb.coverage(),
    });
    let flat: Vec<f64> = emb.matrix().iter().copied().collect();
    binio::write_container(path, &meta, &[binio::Section::from_scalars("vectors", &flat)])
}

fn load_embedding_matrix(path: &Path) -> Result<(EmbeddingMatrix<f64>, f64)> {
    let c = binio::read_container(path)?;
    let bad = |message: &str| Error::ModelFormat {
        path: path.display().to_string(),
        message: message.to_string(),
    };
    let rows = c.meta["rows"].as_u64().ok_or_else(|| bad("missing row count"))? as usize;
    let dim = c.meta["dim"].as_u64().ok_or_else(|| bad("missing dimensionality"))? as usize;
    let coverage = c.meta["coverage"].as_f64().unwrap_or(0.0);
    let flat: Vec<f64> = c.section_scalars("vectors")?;
    let vectors = Array2::from_shape_vec((rows, dim), flat)
        .map_err(|_| bad("vector section does not match its declared shape"))?;
    Ok((EmbeddingMatrix::from_matrix(vectors), coverage))
}

/// Per-document dominant topics for both splits, in document order.
#[derive(Debug, Clone)]
pub struct TopicAssignments {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn save_topics(path: &Path, assignments: &TopicAssignments) -> Result<()> {
    let mut out = String::from("split\tdoc_id\ttopic\n");
    for (split, topics) in [("train", &assignments.train), ("test", &assignments.test)] {
        for (doc_id, topic) in topics.iter().enumerate() {
            out.push_str(&format!("{split}\t{doc_id}\t{topic}\n"));
        }
    }
    write_text(path, &out)
}

pub fn load_topics(path: &Path) -> Result<TopicAssignments> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut assignments = TopicAssignments { train: Vec::new(), test: Vec::new() };
    for (lineno, line) in text.lines().enumerate().skip(1) {
        let bad = |message: String| Error::Dataset {
            location: format!("{}:{}", path.display(), lineno + 1),
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [split, doc_id, topic] = fields[..] else {
            return Err(bad("expected split<TAB>doc_id<TAB>topic".into()));
        };
        let doc_id: usize = doc_id.parse().map_err(|_| bad(format!("unreadable doc id `{doc_id}`")))?;
        let topic: usize = topic.parse().map_err(|_| bad(format!("unreadable topic `{topic}`")))?;
        let list = match split {
            "train" => &mut assignments.train,
            "test" => &mut assignments.test,
            other => return Err(bad(format!("unknown split `{other}`"))),
        };
        if doc_id != list.len() {
            return Err(bad(format!("doc id {doc_id} out of order, expected {}", list.len())));
        }
        list.push(topic);
    }
    Ok(assignments)
}

#[derive(Debug, Clone)]
pub struct EmbeddingSummary {
    pub dim: usize,
    pub coverage: f64,
    pub pretrained: bool,
}

#[derive(Debug, Clone)]
pub struct PrepareSummary {
    pub train_docs: usize,
    pub test_docs: usize,
    pub vocab_size: usize,
    pub encoded_length: usize,
    pub embedding: Option<EmbeddingSummary>,
}

/// Tokenizes both splits, builds the vocabulary on the train split, encodes
/// to fixed length, and materializes the embedding matrix when a CNN system
/// is requested. Everything later stages need lands in the output directory.
pub fn prepare(config: &ExperimentConfig) -> Result<PrepareSummary> {
    let store = ArtifactStore::new(&config.run.out);
    store.check_fresh("prepare")?;

    let train = corpus::load_split(&config.data.train)?;
    let test = corpus::load_split(&config.data.test)?;
    let vocab = Vocabulary::build(&train, config.data.min_count, config.data.max_vocab)?;
    let length = config.data.max_length;

    let encode_all = |docs: &[LabeledDocument]| -> Vec<PaddedDocument> {
        docs.iter().map(|d| corpus::encode(d, &vocab, length)).collect()
    };
    let train_encoded = encode_all(&train);
    let test_encoded = encode_all(&test);

    let embedding = if needs_embeddings(config) {
        Some(match &config.embedding.path {
            Some(path) => (
                EmbeddingMatrix::<f64>::load_word2vec_text(
                    path,
                    &vocab,
                    Some(config.embedding.dim),
                    config.run.seed,
                )?,
                true,
            ),
            None => (
                EmbeddingMatrix::<f64>::seeded_random(
                    vocab.size(),
                    config.embedding.dim,
                    config.run.seed,
                ),
                false,
            ),
        })
    } else {
        None
    };

    store.begin_writes("prepare")?;
    vocab.save(&store.vocab())?;
    corpus::save_tokenized(&store.tokens("train"), &train)?;
    corpus::save_tokenized(&store.tokens("test"), &test)?;
    corpus::save_encoded(&store.encoded("train"), &train_encoded, vocab.size(), length)?;
    corpus::save_encoded(&store.encoded("test"), &test_encoded, vocab.size(), length)?;
    let embedding = match embedding {
        Some((emb, pretrained)) => {
            save_embedding_matrix(&store.embeddings(), &emb)?;
            Some(EmbeddingSummary { dim: emb.dim(), coverage: emb.coverage(), pretrained })
        }
        None => None,
    };
    write_text(&store.config_snapshot(), &config.to_toml())?;
    store.finish_stage()?;
    Ok(PrepareSummary {
        train_docs: train.len(),
        test_docs: test.len(),
        vocab_size: vocab.size(),
        encoded_length: length,
        embedding,
    })
}

#[derive(Debug, Clone)]
pub struct LdaSummary {
    pub num_topics: usize,
    pub swept: bool,
    pub train_perplexity: f64,
    pub topic_vectors_built: bool,
    pub fit_seconds: f64,
}

/// Fits the topic model on the encoded train split (sweeping the candidate
/// topic counts first when none is fixed), assigns a dominant topic to every
/// train and test document, and builds the topic vector table when the
/// embedding matrix is available.
pub fn fit_lda(config: &ExperimentConfig, force_sweep: bool) -> Result<LdaSummary> {
    let store = ArtifactStore::new(&config.run.out);
    store.check_fresh("lda")?;

    let encoded_path = store.require(store.encoded("train"), "run `prepare` first")?;
    let (train_encoded, vocab_size) = corpus::load_encoded(&encoded_path)?;
    let (test_encoded, _) = corpus::load_encoded(&store.require(
        store.encoded("test"),
        "run `prepare` first",
    )?)?;
    let corpus = BagCorpus::from_encoded(&train_encoded, vocab_size);
    let master = config.run.seed;

    let (num_topics, swept, mut sweep_table) = match (force_sweep, config.lda.topics) {
        (false, Some(k)) => (k, false, String::new()),
        _ => {
            let template = config.lda.lda_config(config.lda.sweep[0], master);
            let sweep = crate::topic_model::sweep_topics(&corpus, &config.lda.sweep, &template)?;
            let mut out = String::from("topics\tperplexity\tseconds\n");
            for row in &sweep.rows {
                out.push_str(&format!("{}\t{}\t{}\n", row.num_topics, row.perplexity, row.seconds));
            }
            (sweep.best_num_topics, true, out)
        }
    };

    let started = Instant::now();
    let model = TopicModel::fit(&corpus, config.lda.lda_config(num_topics, master))?;
    let fit_seconds = started.elapsed().as_secs_f64();
    let train_perplexity = model.perplexity(&corpus)?;
    if !swept {
        sweep_table =
            format!("topics\tperplexity\tseconds\n{num_topics}\t{train_perplexity}\t{fit_seconds}\n");
    }

    let mut assignments = TopicAssignments {
        train: Vec::with_capacity(train_encoded.len()),
        test: Vec::with_capacity(test_encoded.len()),
    };
    for d in 0..train_encoded.len() {
        assignments.train.push(model.dominant_topic(d)?);
    }
    let fold_stage = seeding::stage_seed(master, "fold-in");
    for doc in &test_encoded {
        let tokens: Vec<u32> = doc.indices[..doc.true_length]
            .iter()
            .copied()
            .filter(|&w| w != PAD_INDEX)
            .collect();
        let mut rng = seeding::item_rng(fold_stage, doc.doc_id as u64);
        let theta = model.fold_in(&tokens, config.lda.fold_in_sweeps, &mut rng);
        assignments.test.push(argmax_tie_lowest(&theta));
    }
    let topic_table = if store.embeddings().exists() {
        let (emb, _) = load_embedding_matrix(&store.embeddings())?;
        Some(TopicVectorTable::build(&model, &emb, config.embedding.keywords)?)
    } else {
        None
    };

    store.begin_writes("lda")?;
    write_text(&store.lda_sweep(), &sweep_table)?;
    model.save(&store.lda_model())?;
    save_topics(&store.topics(), &assignments)?;
    let topic_vectors_built = match topic_table {
        Some(table) => {
            table.save(&store.topic_vectors())?;
            true
        }
        None => false,
    };
    store.finish_stage()?;
    Ok(LdaSummary { num_topics, swept, train_perplexity, topic_vectors_built, fit_seconds })
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub system: SystemKind,
    pub fit_seconds: f64,
    pub detail: String,
}

/// Trains one system from prepared artifacts and checkpoints it. The
/// recorded seconds cover feature building, initialization, and training.
pub fn train_system(config: &ExperimentConfig, system: SystemKind) -> Result<TrainSummary> {
    let store = ArtifactStore::new(&config.run.out);
    let stage = train_stage_name(system);
    store.check_fresh(stage)?;
    let master = config.run.seed;

    let summary = match system {
        SystemKind::Mnb => {
            let docs = corpus::load_tokenized(&store.require(store.tokens("train"), "run `prepare` first")?)?;
            let started = Instant::now();
            let space = FeatureSpace::build(&docs, config.baselines.mnb_bigrams);
            let counts = space.counts(&docs, config.baselines.mnb_binarize);
            let model = baselines::train_mnb(&counts, baselines::DEFAULT_SMOOTHING)?;
            let fit_seconds = started.elapsed().as_secs_f64();
            store.begin_writes(stage)?;
            space.save(&store.features(system))?;
            model.save_text(&store.checkpoint(system))?;
            TrainSummary {
                system,
                fit_seconds,
                detail: format!("{} features", space.num_features()),
            }
        }
        SystemKind::BowSvm => {
            let docs = corpus::load_tokenized(&store.require(store.tokens("train"), "run `prepare` first")?)?;
            let started = Instant::now();
            let space = FeatureSpace::build(&docs, false);
            let counts = space.counts(&docs, false);
            let mut linear_config = LinearConfig::new(
                LossKind::Hinge,
                config.baselines.svm_reg_grid[0],
                seeding::stage_seed(master, "bow-svm"),
            );
            linear_config.epochs = config.baselines.svm_epochs;
            let (best_reg, tuning) = baselines::tune_reg(
                &counts,
                &config.baselines.svm_reg_grid,
                config.baselines.svm_holdout,
                &linear_config,
            )?;
            linear_config.reg = best_reg;
            let model = baselines::train_linear(&counts, &linear_config)?;
            let fit_seconds = started.elapsed().as_secs_f64();
            let mut rows = String::from("reg\tholdout_accuracy\n");
            for (reg, acc) in &tuning {
                rows.push_str(&format!("{reg}\t{acc}\n"));
            }
            store.begin_writes(stage)?;
            write_text(&store.svm_tuning(), &rows)?;
            space.save(&store.features(system))?;
            model.save_text(&store.checkpoint(system))?;
            TrainSummary { system, fit_seconds, detail: format!("reg {best_reg}") }
        }
        SystemKind::Nbsvm => {
            let docs = corpus::load_tokenized(&store.require(store.tokens("train"), "run `prepare` first")?)?;
            let started = Instant::now();
            let space = FeatureSpace::build(&docs, config.baselines.nbsvm_bigrams);
            let counts = space.counts(&docs, true);
            let mut linear_config = LinearConfig::new(
                LossKind::Hinge,
                config.baselines.nbsvm_reg,
                seeding::stage_seed(master, "nbsvm"),
            );
            linear_config.epochs = config.baselines.svm_epochs;
            let model = baselines::train_nbsvm(&counts, &linear_config)?;
            let fit_seconds = started.elapsed().as_secs_f64();
            store.begin_writes(stage)?;
            space.save(&store.features(system))?;
            model.save_text(&store.checkpoint(system))?;
            TrainSummary { system, fit_seconds, detail: format!("{} features", space.num_features()) }
        }
        SystemKind::Textcnn | SystemKind::Tbcnn => {
            let (encoded, _) = corpus::load_encoded(&store.require(
                store.encoded("train"),
                "run `prepare` first",
            )?)?;
            let (emb, _) = load_embedding_matrix(&store.require(
                store.embeddings(),
                "run `prepare` with a CNN system among run.systems",
            )?)?;
            let (table, topics) = if system == SystemKind::Tbcnn {
                let table = TopicVectorTable::<f64>::load(&store.require(
                    store.topic_vectors(),
                    "run `lda` first",
                )?)?;
                let assignments = load_topics(&store.require(store.topics(), "run `lda` first")?)?;
                if assignments.train.len() != encoded.len() {
                    return Err(Error::Config(format!(
                        "topics.tsv assigns {} train documents but the corpus holds {}",
                        assignments.train.len(),
                        encoded.len()
                    )));
                }
                (Some(table), Some(assignments.train))
            } else {
                (None, None)
            };

            let started = Instant::now();
            let docs: Vec<CnnDoc> = encoded
                .iter()
                .map(|d| CnnDoc::from_padded(d, topics.as_ref().map(|t| t[d.doc_id])))
                .collect();
            let mut model = CnnModel::<f64>::new(
                &emb,
                table.as_ref(),
                &config.cnn.region_sizes,
                config.cnn.filters_per_size,
                NUM_CLASSES,
                master,
            )?;
            let history = neural::train(&mut model, &docs, &config.train.train_config(master))?;
            let fit_seconds = started.elapsed().as_secs_f64();
            store.begin_writes(stage)?;
            model.save(&store.checkpoint(system))?;
            neural::save_training_log(&history, &store.training_log(system))?;
            let detail = match history.epochs.last() {
                Some(e) => format!(
                    "{} parameters, final loss {:.4}, train accuracy {:.4}",
                    model.param_count(),
                    e.mean_loss,
                    e.train_accuracy
                ),
                None => format!("{} parameters, no epochs", model.param_count()),
            };
            TrainSummary { system, fit_seconds, detail }
        }
    };

    store.record_timing(system, summary.fit_seconds)?;
    store.finish_stage()?;
    Ok(summary)
}

fn predictions(
    config: &ExperimentConfig,
    store: &ArtifactStore,
    system: SystemKind,
) -> Result<(Vec<usize>, Vec<usize>, f64)> {
    let hint = "run `train` for this system first";
    match system {
        SystemKind::Mnb | SystemKind::BowSvm | SystemKind::Nbsvm => {
            let docs = corpus::load_tokenized(&store.require(store.tokens("test"), "run `prepare` first")?)?;
            let space = FeatureSpace::load(&store.require(store.features(system), hint)?)?;
            let checkpoint = store.require(store.checkpoint(system), hint)?;
            let gold: Vec<usize> = docs.iter().map(|d| d.label).collect();
            let (preds, seconds) = match system {
                SystemKind::Mnb => {
                    let model = MnbModel::load_text(&checkpoint)?;
                    let binarize = config.baselines.mnb_binarize;
                    let started = Instant::now();
                    let preds = docs
                        .iter()
                        .map(|d| model.predict(&space.featurize(&d.tokens, binarize)))
                        .collect();
                    (preds, started.elapsed().as_secs_f64())
                }
                SystemKind::BowSvm => {
                    let model = LinearModel::load_text(&checkpoint)?;
                    let started = Instant::now();
                    let preds = docs
                        .iter()
                        .map(|d| model.predict(&space.featurize(&d.tokens, false)))
                        .collect();
                    (preds, started.elapsed().as_secs_f64())
                }
                _ => {
                    let model = NbsvmModel::load_text(&checkpoint)?;
                    let started = Instant::now();
                    let preds = docs
                        .iter()
                        .map(|d| model.predict(&space.featurize(&d.tokens, true)))
                        .collect();
                    (preds, started.elapsed().as_secs_f64())
                }
            };
            Ok((preds, gold, seconds))
        }
        SystemKind::Textcnn | SystemKind::Tbcnn => {
            let (encoded, _) = corpus::load_encoded(&store.require(
                store.encoded("test"),
                "run `prepare` first",
            )?)?;
            let model = CnnModel::<f64>::load(&store.require(store.checkpoint(system), hint)?)?;
            let topics = if system == SystemKind::Tbcnn {
                let assignments = load_topics(&store.require(store.topics(), "run `lda` first")?)?;
                if assignments.test.len() != encoded.len() {
                    return Err(Error::Config(format!(
                        "topics.tsv assigns {} test documents but the split holds {}",
                        assignments.test.len(),
                        encoded.len()
                    )));
                }
                Some(assignments.test)
            } else {
                None
            };
            let gold: Vec<usize> = encoded.iter().map(|d| d.label).collect();
            let started = Instant::now();
            let docs: Vec<CnnDoc> = encoded
                .iter()
                .map(|d| CnnDoc::from_padded(d, topics.as_ref().map(|t| t[d.doc_id])))
                .collect();
            let preds = model.predict_batch(&docs)?;
            Ok((preds, gold, started.elapsed().as_secs_f64()))
        }
    }
}

/// Scores every requested system on the test split and writes the
/// machine-readable report. Seconds = recorded fit time + prediction time.
pub fn evaluate(config: &ExperimentConfig) -> Result<MetricsReport> {
    let store = ArtifactStore::new(&config.run.out);
    store.check_fresh("evaluate")?;
    let timings = store.load_timings()?;

    let mut report = MetricsReport::default();
    for &system in &config.run.systems {
        let fit_seconds = *timings.get(system.stem()).ok_or_else(|| Error::Config(format!(
            "no recorded fit time for {}; run `train --system {}` first",
            system.display_name(),
            system.stem()
        )))?;
        let (preds, gold, test_seconds) = predictions(config, &store, system)?;
        report.rows.push(SystemRow {
            system: system.display_name().to_string(),
            metrics: compute_metrics(&preds, &gold)?,
            seconds: fit_seconds + test_seconds,
        });
    }

    store.begin_writes("evaluate")?;
    write_text(&store.report_tsv(), &report.to_tsv())?;
    store.finish_stage()?;
    Ok(report)
}

/// Renders the aligned table from the stored TSV report and returns it.
pub fn render_report(config: &ExperimentConfig) -> Result<String> {
    let store = ArtifactStore::new(&config.run.out);
    store.check_fresh("report")?;
    let tsv_path = store.require(store.report_tsv(), "run `evaluate` first")?;
    let text = fs::read_to_string(&tsv_path).map_err(|e| Error::io(&tsv_path, e))?;
    let report = MetricsReport::parse_tsv(&text)?;
    let rendered = report.render_text();
    store.begin_writes("report")?;
    write_text(&store.report_text(), &rendered)?;
    store.finish_stage()?;
    Ok(rendered)
}

/// The full pipeline: prepare, topic model when needed, train every
/// requested system, evaluate, report. Any failure is tagged with the stage
/// it happened in.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsReport> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    prepare(config).map_err(|e| e.in_stage("prepare"))?;
    if needs_lda(config) {
        fit_lda(config, false).map_err(|e| e.in_stage("lda"))?;
    }
    for &system in &config.run.systems {
        train_system(config, system).map_err(|e| e.in_stage(train_stage_name(system)))?;
    }
    let report = evaluate(config).map_err(|e| e.in_stage("evaluate"))?;
    render_report(config).map_err(|e| e.in_stage("report"))?;
    Ok(report)
}
