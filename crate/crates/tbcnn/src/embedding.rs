//! Word embeddings, per-topic vectors, and the fused CNN input.
//!
//! Pretrained vectors arrive in word2vec text format (`<count> <dim>`
//! header, then `word v1 .. v_dim` lines). Words missing from the file and
//! the no-pretrained case draw from a seeded uniform distribution. Row 0 is
//! the padding row and stays all-zero.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use crate::corpus::{PaddedDocument, Vocabulary, PAD_INDEX};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seeding;
use crate::topic_model::TopicModel;

pub const RANDOM_INIT_HALF_WIDTH: f64 = 0.25;

/// Vocabulary-aligned embedding table, one row per index, row 0 zero.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix<T: Scalar> {
    vectors: Array2<T>,
    /// Fraction of non-padding vocabulary words found in the pretrained
    /// file; 0 when fully random.
    coverage: f64,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    /// All word rows drawn uniformly from
    /// `(-RANDOM_INIT_HALF_WIDTH, RANDOM_INIT_HALF_WIDTH)`.
    pub fn seeded_random(vocab_size: usize, dim: usize, seed: u64) -> EmbeddingMatrix<T> {
        let mut rng = seeding::stage_rng(seed, "embedding-init");
        let mut vectors = Array2::zeros((vocab_size, dim));
        for mut row in vectors.rows_mut().into_iter().skip(1) {
            for v in row.iter_mut() {
                *v = T::from_f64(rng.gen_range(-RANDOM_INIT_HALF_WIDTH..RANDOM_INIT_HALF_WIDTH));
            }
        }
        EmbeddingMatrix { vectors, coverage: 0.0 }
    }

    /// Reads a word2vec text file, keeping only vocabulary words. Words
    /// absent from the file fall back to the seeded uniform fill, drawn in
    /// index order so the result does not depend on file order. When
    /// `expected_dim` is given the file must agree.
    pub fn load_word2vec_text(
        path: &Path,
        vocab: &Vocabulary,
        expected_dim: Option<usize>,
        seed: u64,
    ) -> Result<EmbeddingMatrix<T>> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err(path, 1, "file is empty"))?
            .map_err(|e| Error::io(path, e))?;
        let mut parts = header.split_whitespace();
        let declared: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(path, 1, "header must start with the vector count"))?;
        let dim: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(path, 1, "header must give the dimensionality"))?;
        if parts.next().is_some() {
            return Err(parse_err(path, 1, "header has trailing fields"));
        }
        if dim == 0 {
            return Err(parse_err(path, 1, "dimensionality must be positive"));
        }
        if let Some(expected) = expected_dim {
            if dim != expected {
                return Err(Error::Embedding(format!(
                    "{} stores {dim}-dimensional vectors, configuration expects {expected}",
                    path.display()
                )));
            }
        }

        let mut vectors = Array2::zeros((vocab.size(), dim));
        let mut found = vec![false; vocab.size()];
        let mut rows_seen = 0usize;
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            rows_seen += 1;
            let mut fields = line.split_whitespace();
            let word = fields.next().ok_or_else(|| parse_err(path, lineno + 2, "blank vector row"))?;
            let Some(index) = vocab.index_of(word) else { continue };
            let mut row = vectors.row_mut(index as usize);
            let mut filled = 0;
            for field in fields {
                if filled == dim {
                    return Err(parse_err(path, lineno + 2, &format!("more than {dim} values")));
                }
                row[filled] = T::parse(field)
                    .ok_or_else(|| parse_err(path, lineno + 2, &format!("unparsable value {field:?}")))?;
                filled += 1;
            }
            if filled != dim {
                return Err(parse_err(path, lineno + 2, &format!("expected {dim} values, found {filled}")));
            }
            found[index as usize] = true;
        }
        if rows_seen != declared {
            return Err(parse_err(
                path,
                1,
                &format!("header declares {declared} vectors, file holds {rows_seen}"),
            ));
        }

        let mut rng = seeding::stage_rng(seed, "embedding-fill");
        let mut covered = 0usize;
        for index in 1..vocab.size() {
            if found[index] {
                covered += 1;
                continue;
            }
            for v in vectors.row_mut(index).iter_mut() {
                *v = T::from_f64(rng.gen_range(-RANDOM_INIT_HALF_WIDTH..RANDOM_INIT_HALF_WIDTH));
            }
        }
        let coverage = covered as f64 / (vocab.size() - 1) as f64;
        Ok(EmbeddingMatrix { vectors, coverage })
    }

    /// Writes all word rows (padding excluded) in word2vec text format.
    pub fn save_word2vec_text(&self, vocab: &Vocabulary, path: &Path) -> Result<()> {
        if vocab.size() != self.rows() {
            return Err(Error::Embedding(format!(
                "vocabulary of {} entries does not match {} embedding rows",
                vocab.size(),
                self.rows()
            )));
        }
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "{} {}", self.rows() - 1, self.dim()).map_err(io)?;
        for index in 1..self.rows() {
            write!(w, "{}", vocab.word(index as u32)).map_err(io)?;
            for v in self.vectors.row(index) {
                write!(w, " {v}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn from_matrix(vectors: Array2<T>) -> EmbeddingMatrix<T> {
        EmbeddingMatrix { vectors, coverage: 0.0 }
    }

    pub fn rows(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn coverage(&self) -> f64 {
        self.coverage
    }

    pub fn row(&self, index: u32) -> ArrayView1<'_, T> {
        self.vectors.row(index as usize)
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.vectors
    }

    pub fn into_matrix(self) -> Array2<T> {
        self.vectors
    }
}

fn parse_err(path: &Path, line: usize, message: &str) -> Error {
    Error::EmbeddingParse {
        path: path.display().to_string(),
        line,
        message: message.to_string(),
    }
}

/// Dense vector for one topic: the unweighted mean of the embeddings of its
/// highest-probability keywords. The padding index never contributes.
pub fn topic_vector<T: Scalar>(
    model: &TopicModel,
    topic: usize,
    emb: &EmbeddingMatrix<T>,
    keywords: usize,
) -> Result<Array1<T>> {
    if keywords == 0 {
        return Err(Error::Embedding("topic vector needs at least one keyword".into()));
    }
    if emb.rows() != model.vocab_size() {
        return Err(Error::Embedding(format!(
            "embedding table of {} rows does not cover vocabulary of {}",
            emb.rows(),
            model.vocab_size()
        )));
    }
    let picked: Vec<u32> = model
        .top_keywords(topic, keywords + 1)?
        .into_iter()
        .filter(|&w| w != PAD_INDEX)
        .take(keywords)
        .collect();
    let mut sum = Array1::<T>::zeros(emb.dim());
    for &w in &picked {
        sum = sum + emb.row(w);
    }
    Ok(sum / T::from_f64(picked.len() as f64))
}

/// One topic vector per topic, in topic order.
#[derive(Debug, Clone)]
pub struct TopicVectorTable<T: Scalar> {
    vectors: Array2<T>,
    pub keywords_per_topic: usize,
}

impl<T: Scalar> TopicVectorTable<T> {
    /// Wraps an externally computed table (row per topic).
    pub fn from_matrix(vectors: Array2<T>, keywords_per_topic: usize) -> TopicVectorTable<T> {
        TopicVectorTable { vectors, keywords_per_topic }
    }

    pub fn build(model: &TopicModel, emb: &EmbeddingMatrix<T>, keywords: usize) -> Result<TopicVectorTable<T>> {
        let mut vectors = Array2::zeros((model.num_topics(), emb.dim()));
        for t in 0..model.num_topics() {
            vectors.row_mut(t).assign(&topic_vector(model, t, emb, keywords)?);
        }
        Ok(TopicVectorTable { vectors, keywords_per_topic: keywords })
    }

    pub fn num_topics(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn row(&self, topic: usize) -> ArrayView1<'_, T> {
        self.vectors.row(topic)
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.vectors
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "kind": "topic-vectors",
            "topics": self.num_topics(),
            "dim": self.dim(),
            "keywords_per_topic": self.keywords_per_topic,
            "scalar": T::TAG,
        });
        let flat: Vec<T> = self.vectors.iter().copied().collect();
        crate::binio::write_container(path, &meta, &[crate::binio::Section::from_scalars("vectors", &flat)])
    }

    pub fn load(path: &Path) -> Result<TopicVectorTable<T>> {
        let c = crate::binio::read_container(path)?;
        let topics = c.meta["topics"].as_u64().unwrap_or(0) as usize;
        let dim = c.meta["dim"].as_u64().unwrap_or(0) as usize;
        let keywords = c.meta["keywords_per_topic"].as_u64().unwrap_or(0) as usize;
        let flat: Vec<T> = c.section_scalars("vectors")?;
        let vectors = Array2::from_shape_vec((topics, dim), flat).map_err(|_| Error::ModelFormat {
            path: path.display().to_string(),
            message: "vector payload does not match declared shape".into(),
        })?;
        Ok(TopicVectorTable { vectors, keywords_per_topic: keywords })
    }
}

/// CNN input for one document: each of the `length` rows is the word
/// embedding (zero for padding and unknown words) with the document's topic
/// vector appended, giving a `length x 2*dim` matrix.
#[derive(Debug, Clone)]
pub struct FusedInput<T: Scalar> {
    pub matrix: Array2<T>,
    pub true_length: usize,
    pub label: usize,
    pub doc_id: usize,
}

pub fn fuse<T: Scalar>(
    doc: &PaddedDocument,
    emb: &EmbeddingMatrix<T>,
    topics: &TopicVectorTable<T>,
    topic: usize,
) -> Result<FusedInput<T>> {
    if emb.dim() != topics.dim() {
        return Err(Error::Embedding(format!(
            "word dimension {} differs from topic dimension {}",
            emb.dim(),
            topics.dim()
        )));
    }
    if topic >= topics.num_topics() {
        return Err(Error::Embedding(format!(
            "topic {topic} out of range ({} topics)",
            topics.num_topics()
        )));
    }
    let dim = emb.dim();
    let mut matrix = Array2::zeros((doc.indices.len(), 2 * dim));
    let topic_row = topics.row(topic);
    for (i, &w) in doc.indices.iter().enumerate() {
        if (w as usize) >= emb.rows() {
            return Err(Error::Embedding(format!(
                "document {} holds index {w} outside the embedding table",
                doc.doc_id
            )));
        }
        let mut row = matrix.row_mut(i);
        if w != PAD_INDEX {
            row.slice_mut(ndarray::s![..dim]).assign(&emb.row(w));
        }
        row.slice_mut(ndarray::s![dim..]).assign(&topic_row);
    }
    Ok(FusedInput {
        matrix,
        true_length: doc.true_length,
        label: doc.label,
        doc_id: doc.doc_id,
    })
}

/// Word-only CNN input (`length x dim`), used by the plain-CNN ablation.
pub fn embed_only<T: Scalar>(doc: &PaddedDocument, emb: &EmbeddingMatrix<T>) -> Result<FusedInput<T>> {
    let dim = emb.dim();
    let mut matrix = Array2::zeros((doc.indices.len(), dim));
    for (i, &w) in doc.indices.iter().enumerate() {
        if (w as usize) >= emb.rows() {
            return Err(Error::Embedding(format!(
                "document {} holds index {w} outside the embedding table",
                doc.doc_id
            )));
        }
        if w != PAD_INDEX {
            matrix.row_mut(i).assign(&emb.row(w));
        }
    }
    Ok(FusedInput {
        matrix,
        true_length: doc.true_length,
        label: doc.label,
        doc_id: doc.doc_id,
    })
}
