//! Experiment configuration: a TOML file checked into the repository,
//! with every value overridable from the command line as `section.key=value`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{OptimizerKind, TrainConfig};
use crate::topic_model::LdaConfig;

/// The systems of the comparison table, in its row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Mnb,
    BowSvm,
    Nbsvm,
    Textcnn,
    Tbcnn,
}

pub const ALL_SYSTEMS: [SystemKind; 5] = [
    SystemKind::Mnb,
    SystemKind::BowSvm,
    SystemKind::Nbsvm,
    SystemKind::Textcnn,
    SystemKind::Tbcnn,
];

impl SystemKind {
    /// Row label in the report.
    pub fn display_name(self) -> &'static str {
        match self {
            SystemKind::Mnb => "MNB",
            SystemKind::BowSvm => "BoW+SVM",
            SystemKind::Nbsvm => "NBSVM",
            SystemKind::Textcnn => "TextCNN",
            SystemKind::Tbcnn => "TB-CNN",
        }
    }

    /// File-name stem for the system's artifacts.
    pub fn stem(self) -> &'static str {
        match self {
            SystemKind::Mnb => "mnb",
            SystemKind::BowSvm => "bow_svm",
            SystemKind::Nbsvm => "nbsvm",
            SystemKind::Textcnn => "textcnn",
            SystemKind::Tbcnn => "tbcnn",
        }
    }

    pub fn parse(text: &str) -> Option<SystemKind> {
        match text.to_ascii_lowercase().replace('-', "_").as_str() {
            "mnb" => Some(SystemKind::Mnb),
            "bow_svm" => Some(SystemKind::BowSvm),
            "nbsvm" => Some(SystemKind::Nbsvm),
            "textcnn" => Some(SystemKind::Textcnn),
            "tbcnn" | "tb_cnn" => Some(SystemKind::Tbcnn),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Train split: a `label<TAB>text` TSV file or a `pos`/`neg` directory.
    pub train: PathBuf,
    pub test: PathBuf,
    /// Fixed encoded document length L.
    pub max_length: usize,
    /// Words below this count stay out of the vocabulary.
    pub min_count: u64,
    /// Vocabulary cap, padding slot included.
    pub max_vocab: usize,
}

impl Default for DataSection {
    fn default() -> DataSection {
        DataSection {
            train: PathBuf::from("data/train.tsv"),
            test: PathBuf::from("data/test.tsv"),
            max_length: 200,
            min_count: 5,
            max_vocab: 30000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaSection {
    /// Fixed topic count; unset means pick by perplexity over `sweep`.
    pub topics: Option<usize>,
    pub sweep: Vec<usize>,
    /// Document-topic prior; unset means 50/k.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    /// Gibbs sweeps when folding unseen documents in.
    pub fold_in_sweeps: usize,
}

impl Default for LdaSection {
    fn default() -> LdaSection {
        LdaSection {
            topics: None,
            sweep: (10..=19).collect(),
            alpha: None,
            beta: 0.01,
            iterations: 1000,
            burn_in: 200,
            fold_in_sweeps: 50,
        }
    }
}

impl LdaSection {
    pub fn lda_config(&self, num_topics: usize, seed: u64) -> LdaConfig {
        LdaConfig {
            num_topics,
            alpha: self.alpha,
            beta: self.beta,
            iterations: self.iterations,
            burn_in: self.burn_in,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    /// Pretrained vectors in word2vec text format; unset means seeded
    /// random initialization.
    pub path: Option<PathBuf>,
    pub dim: usize,
    /// Keywords averaged into each topic vector.
    pub keywords: usize,
}

impl Default for EmbeddingSection {
    fn default() -> EmbeddingSection {
        EmbeddingSection { path: None, dim: 300, keywords: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnSection {
    pub region_sizes: Vec<usize>,
    pub filters_per_size: usize,
}

impl Default for CnnSection {
    fn default() -> CnnSection {
        CnnSection {
            region_sizes: crate::neural::DEFAULT_REGION_SIZES.to_vec(),
            filters_per_size: crate::neural::DEFAULT_FILTERS_PER_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub optimizer: OptimizerKind,
    pub fine_tune: bool,
}

impl Default for TrainSection {
    fn default() -> TrainSection {
        let base = TrainConfig::default();
        TrainSection {
            batch_size: base.batch_size,
            epochs: base.epochs,
            learning_rate: base.learning_rate,
            dropout: base.dropout_rate,
            optimizer: base.optimizer,
            fine_tune: base.fine_tune_embeddings,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, shuffle_seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            dropout_rate: self.dropout,
            optimizer: self.optimizer,
            shuffle_seed,
            fine_tune_embeddings: self.fine_tune,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub svm_epochs: usize,
    pub svm_reg_grid: Vec<f64>,
    pub svm_holdout: f64,
    pub nbsvm_reg: f64,
    pub nbsvm_bigrams: bool,
    pub mnb_bigrams: bool,
    pub mnb_binarize: bool,
}

impl Default for BaselineSection {
    fn default() -> BaselineSection {
        BaselineSection {
            svm_epochs: 20,
            svm_reg_grid: crate::baselines::SVM_REG_GRID.to_vec(),
            svm_holdout: crate::baselines::SVM_HOLDOUT_FRACTION,
            nbsvm_reg: 1e-3,
            nbsvm_bigrams: true,
            mnb_bigrams: true,
            mnb_binarize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub systems: Vec<SystemKind>,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> RunSection {
        RunSection {
            systems: ALL_SYSTEMS.to_vec(),
            out: PathBuf::from("runs/default"),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub lda: LdaSection,
    pub embedding: EmbeddingSection,
    pub cnn: CnnSection,
    pub train: TrainSection,
    pub baselines: BaselineSection,
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Applies one `section.key=value` assignment. The value is parsed as
    /// a TOML literal; anything that does not parse becomes a string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));

        let mut root = toml::Value::try_from(&*self)
            .map_err(|e| Error::Config(format!("config does not serialize: {e}")))?;
        let mut node = &mut root;
        let parts: Vec<&str> = key.trim().split('.').collect();
        for part in &parts[..parts.len() - 1] {
            node = node
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("`{key}` does not name a config value")))?
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()));
        }
        let last = parts.last().expect("split yields at least one part");
        node.as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{key}` does not name a config value")))?
            .insert(last.to_string(), value);

        *self = root
            .try_into()
            .map_err(|e| Error::Config(format!("override `{assignment}`: {e}")))?;
        Ok(())
    }

    /// Structural and path checks. Runs before any stage touches disk.
    pub fn validate(&self) -> Result<()> {
        for (name, path) in [("data.train", &self.data.train), ("data.test", &self.data.test)] {
            if !path.exists() {
                return Err(Error::Config(format!("{name} path {} does not exist", path.display())));
            }
        }
        if let Some(path) = &self.embedding.path {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "embedding.path {} does not exist",
                    path.display()
                )));
            }
        }
        let max_region = self.cnn.region_sizes.iter().copied().max().unwrap_or(0);
        if self.cnn.region_sizes.is_empty() || self.cnn.region_sizes.contains(&0) {
            return Err(Error::Config("cnn.region_sizes must list positive sizes".into()));
        }
        if self.cnn.filters_per_size == 0 {
            return Err(Error::Config("cnn.filters_per_size must be at least 1".into()));
        }
        if self.data.max_length < max_region {
            return Err(Error::Config(format!(
                "data.max_length {} is below the largest region size {max_region}",
                self.data.max_length
            )));
        }
        if self.data.min_count == 0 {
            return Err(Error::Config("data.min_count must be at least 1".into()));
        }
        if self.data.max_vocab < 2 {
            return Err(Error::Config("data.max_vocab must leave room for a word".into()));
        }
        if self.embedding.dim == 0 {
            return Err(Error::Config("embedding.dim must be positive".into()));
        }
        if self.embedding.keywords == 0 {
            return Err(Error::Config("embedding.keywords must be at least 1".into()));
        }
        match self.lda.topics {
            Some(k) => self.lda.lda_config(k, 0).validate()?,
            None => {
                if self.lda.sweep.is_empty() {
                    return Err(Error::Config(
                        "lda.sweep must list candidate topic counts when lda.topics is unset".into(),
                    ));
                }
                for &k in &self.lda.sweep {
                    self.lda.lda_config(k, 0).validate()?;
                }
            }
        }
        if self.lda.fold_in_sweeps == 0 {
            return Err(Error::Config("lda.fold_in_sweeps must be at least 1".into()));
        }
        self.train.train_config(0).validate()?;
        if self.baselines.svm_epochs == 0 {
            return Err(Error::Config("baselines.svm_epochs must be at least 1".into()));
        }
        if self.baselines.svm_reg_grid.is_empty()
            || self.baselines.svm_reg_grid.iter().any(|&r| !(r > 0.0) || !r.is_finite())
        {
            return Err(Error::Config("baselines.svm_reg_grid must list positive values".into()));
        }
        if !(0.0 < self.baselines.svm_holdout && self.baselines.svm_holdout < 1.0) {
            return Err(Error::Config("baselines.svm_holdout must lie in (0, 1)".into()));
        }
        if !(self.baselines.nbsvm_reg > 0.0) {
            return Err(Error::Config("baselines.nbsvm_reg must be positive".into()));
        }
        if self.run.systems.is_empty() {
            return Err(Error::Config("run.systems lists nothing to run".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_documented_values() {
        let c = ExperimentConfig::default();
        assert_eq!(c.data.max_length, 200);
        assert_eq!(c.lda.sweep, (10..=19).collect::<Vec<_>>());
        assert_eq!(c.lda.topics, None);
        assert_eq!(c.lda.beta, 0.01);
        assert_eq!(c.lda.iterations, 1000);
        assert_eq!(c.lda.burn_in, 200);
        assert_eq!(c.embedding.dim, 300);
        assert_eq!(c.embedding.keywords, 20);
        assert_eq!(c.cnn.region_sizes, vec![4, 5, 6]);
        assert_eq!(c.cnn.filters_per_size, 100);
        assert_eq!(c.train.batch_size, 50);
        assert_eq!(c.train.dropout, 0.5);
        assert_eq!(c.train.learning_rate, 1e-3);
        assert_eq!(c.run.systems.len(), 5);
    }

    #[test]
    fn toml_round_trips_the_whole_config() {
        let mut c = ExperimentConfig::default();
        c.lda.topics = Some(12);
        c.embedding.path = Some(PathBuf::from("/tmp/vectors.txt"));
        let text = c.to_toml();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_reach_nested_keys_with_native_types() {
        let mut c = ExperimentConfig::default();
        c.apply_override("lda.topics=12").unwrap();
        assert_eq!(c.lda.topics, Some(12));
        c.apply_override("train.dropout=0.3").unwrap();
        assert_eq!(c.train.dropout, 0.3);
        c.apply_override("train.fine_tune=false").unwrap();
        assert!(!c.train.fine_tune);
        c.apply_override("run.systems=[\"mnb\", \"tbcnn\"]").unwrap();
        assert_eq!(c.run.systems, vec![SystemKind::Mnb, SystemKind::Tbcnn]);
        // Bare strings (no TOML quoting) fall back to string values.
        c.apply_override("data.train=/somewhere/train.tsv").unwrap();
        assert_eq!(c.data.train, PathBuf::from("/somewhere/train.tsv"));
        c.apply_override("cnn.region_sizes=[3, 4]").unwrap();
        assert_eq!(c.cnn.region_sizes, vec![3, 4]);
    }

    #[test]
    fn overrides_reject_unknown_keys_and_bad_shapes() {
        let mut c = ExperimentConfig::default();
        assert!(c.apply_override("lda.bogus=1").is_err());
        assert!(c.apply_override("no_equals_sign").is_err());
        assert!(c.apply_override("train.epochs=not_a_number").is_err());
        // Failed overrides leave the config untouched.
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn validation_checks_paths_and_geometry() {
        let dir = tempfile::tempdir().unwrap();
        let train = dir.path().join("train.tsv");
        let test = dir.path().join("test.tsv");
        std::fs::write(&train, "pos\tfine\n").unwrap();
        std::fs::write(&test, "neg\tdull\n").unwrap();

        let mut c = ExperimentConfig::default();
        c.data.train = train.clone();
        c.data.test = test.clone();
        assert!(c.validate().is_ok());

        c.data.max_length = 3;
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("region"), "{err}");
        c.data.max_length = 200;

        c.data.test = dir.path().join("missing.tsv");
        assert!(c.validate().is_err());
        c.data.test = test;

        c.run.systems.clear();
        assert!(c.validate().is_err());
        c.run.systems = vec![SystemKind::Mnb];

        c.lda.topics = None;
        c.lda.sweep.clear();
        assert!(c.validate().is_err());
        c.lda.topics = Some(10);
        assert!(c.validate().is_ok());

        c.embedding.path = Some(dir.path().join("missing_vectors.txt"));
        assert!(c.validate().is_err());
    }

    #[test]
    fn system_names_parse_in_both_spellings() {
        assert_eq!(SystemKind::parse("bow-svm"), Some(SystemKind::BowSvm));
        assert_eq!(SystemKind::parse("bow_svm"), Some(SystemKind::BowSvm));
        assert_eq!(SystemKind::parse("TB-CNN"), Some(SystemKind::Tbcnn));
        assert_eq!(SystemKind::parse("mystery"), None);
        for kind in ALL_SYSTEMS {
            assert_eq!(SystemKind::parse(kind.stem()), Some(kind));
        }
    }
}
