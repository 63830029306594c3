//! Corpus loading, tokenization, vocabulary construction and fixed-length
//! encoding.
//!
//! Two on-disk layouts are accepted: a directory tree
//! `<root>/{train,test}/{pos,neg}/*.txt` with one document per file, and a
//! pair `<root>/{train,test}.tsv` with `<label>\t<text>` lines. Both load
//! into the same in-memory form.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved padding index; embedding row 0 is pinned to zero.
pub const PAD_INDEX: u32 = 0;

pub const LABEL_NEG: usize = 0;
pub const LABEL_POS: usize = 1;
pub const NUM_CLASSES: usize = 2;

pub fn label_name(label: usize) -> &'static str {
    if label == LABEL_POS {
        "pos"
    } else {
        "neg"
    }
}

/// A tokenized document with its class label and load-order id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDocument {
    pub tokens: Vec<String>,
    pub label: usize,
    pub doc_id: usize,
}

/// A document encoded to a fixed number of vocabulary indices.
///
/// `indices[true_length..]` is all `PAD_INDEX`; positions before
/// `true_length` may also be `PAD_INDEX` when the source token was
/// out-of-vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaddedDocument {
    pub indices: Vec<u32>,
    pub true_length: usize,
    pub label: usize,
    pub doc_id: usize,
}

/// Lowercased alphanumeric tokenizer that drops HTML line-break tags.
///
/// `<br>`, `<br/>` and `<br />` (any case) act as token separators; every
/// other non-alphanumeric character also separates tokens. Contractions
/// split at the apostrophe ("don't" becomes "don", "t").
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let mut i = 0;
    while i < text.len() {
        let rest = &text[i..];
        if let Some(tag_len) = br_tag_len(rest) {
            flush(&mut word, &mut tokens);
            i += tag_len;
            continue;
        }
        let ch = rest.chars().next().expect("offset lies on a char boundary");
        if ch.is_alphanumeric() {
            for lower in ch.to_lowercase() {
                word.push(lower);
            }
        } else {
            flush(&mut word, &mut tokens);
        }
        i += ch.len_utf8();
    }
    flush(&mut word, &mut tokens);
    tokens
}

fn flush(word: &mut String, tokens: &mut Vec<String>) {
    if !word.is_empty() {
        tokens.push(std::mem::take(word));
    }
}

/// Byte length of a line-break tag starting at `s`, if one is present.
fn br_tag_len(s: &str) -> Option<usize> {
    let b = s.as_bytes();
    if b.len() < 4 || b[0] != b'<' || !b[1].eq_ignore_ascii_case(&b'b') || !b[2].eq_ignore_ascii_case(&b'r') {
        return None;
    }
    let mut i = 3;
    while i < b.len() && (b[i] == b' ' || b[i] == b'\t') {
        i += 1;
    }
    if i < b.len() && b[i] == b'/' {
        i += 1;
    }
    if i < b.len() && b[i] == b'>' {
        Some(i + 1)
    } else {
        None
    }
}

/// Frequency-pruned word index. Index 0 is the padding slot; real words
/// occupy `1..size()`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    index_to_word: Vec<String>,
    counts: Vec<u64>,
    #[serde(skip)]
    word_to_index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Keeps words seen at least `min_count` times, ranked by descending
    /// corpus frequency with ties broken lexicographically, truncated so the
    /// table (padding included) holds at most `max_size` entries.
    pub fn build(docs: &[LabeledDocument], min_count: u64, max_size: usize) -> Result<Self> {
        if max_size < 2 {
            return Err(Error::Vocabulary(format!(
                "max_size must leave room for at least one word beside padding, got {max_size}"
            )));
        }
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for doc in docs {
            for tok in &doc.tokens {
                *freq.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(&str, u64)> = freq.into_iter().filter(|&(_, c)| c >= min_count).collect();
        if kept.is_empty() {
            return Err(Error::Vocabulary(format!(
                "no word reaches min_count {min_count}; vocabulary would be empty"
            )));
        }
        kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        kept.truncate(max_size - 1);

        let mut index_to_word = Vec::with_capacity(kept.len() + 1);
        let mut counts = Vec::with_capacity(kept.len() + 1);
        index_to_word.push(String::new());
        counts.push(0);
        for (word, count) in kept {
            index_to_word.push(word.to_string());
            counts.push(count);
        }
        Ok(Self::from_parts(index_to_word, counts))
    }

    fn from_parts(index_to_word: Vec<String>, counts: Vec<u64>) -> Self {
        let word_to_index = index_to_word
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Vocabulary { index_to_word, counts, word_to_index }
    }

    /// Table size including the padding slot.
    pub fn size(&self) -> usize {
        self.index_to_word.len()
    }

    pub fn index_of(&self, word: &str) -> Option<u32> {
        self.word_to_index.get(word).copied()
    }

    pub fn word(&self, index: u32) -> &str {
        &self.index_to_word[index as usize]
    }

    pub fn count(&self, index: u32) -> u64 {
        self.counts[index as usize]
    }

    /// Words only, in index order, padding excluded.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.index_to_word.iter().skip(1).map(String::as_str)
    }

    /// Writes `word<TAB>count` lines in index order, padding slot first.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (i, word) in self.index_to_word.iter().enumerate() {
            let name = if i == 0 { "<pad>" } else { word.as_str() };
            writeln!(out, "{}\t{}", name, self.counts[i]).expect("string write");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut index_to_word = Vec::new();
        let mut counts = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let (word, count) = line.split_once('\t').ok_or_else(|| {
                Error::Vocabulary(format!("{}:{}: expected word<TAB>count", path.display(), lineno + 1))
            })?;
            let count: u64 = count.trim().parse().map_err(|_| {
                Error::Vocabulary(format!("{}:{}: bad count {count:?}", path.display(), lineno + 1))
            })?;
            if lineno == 0 {
                if word != "<pad>" {
                    return Err(Error::Vocabulary(format!(
                        "{}: first row must be the <pad> slot, found {word:?}",
                        path.display()
                    )));
                }
                index_to_word.push(String::new());
            } else {
                index_to_word.push(word.to_string());
            }
            counts.push(count);
        }
        if index_to_word.len() < 2 {
            return Err(Error::Vocabulary(format!("{}: no words beside padding", path.display())));
        }
        Ok(Self::from_parts(index_to_word, counts))
    }
}

/// Maps a document onto exactly `length` indices: known words keep their
/// vocabulary index, unknown words map to `PAD_INDEX`, overlong documents
/// truncate, short ones pad with trailing `PAD_INDEX`.
pub fn encode(doc: &LabeledDocument, vocab: &Vocabulary, length: usize) -> PaddedDocument {
    let mut indices = Vec::with_capacity(length);
    for tok in doc.tokens.iter().take(length) {
        indices.push(vocab.index_of(tok).unwrap_or(PAD_INDEX));
    }
    let true_length = indices.len();
    indices.resize(length, PAD_INDEX);
    PaddedDocument { indices, true_length, label: doc.label, doc_id: doc.doc_id }
}

/// Train and test splits of a loaded corpus.
#[derive(Debug, Clone)]
pub struct DatasetPair {
    pub train: Vec<LabeledDocument>,
    pub test: Vec<LabeledDocument>,
}

/// Loads both splits from `root`, auto-detecting the layout: directory
/// trees `train/{pos,neg}/*.txt` or files `train.tsv`/`test.tsv`. Document
/// order is deterministic (neg before pos, files sorted by name; TSV rows
/// in file order) and `doc_id` numbers each split from zero in that order.
pub fn load_dataset(root: &Path) -> Result<DatasetPair> {
    if !root.exists() {
        return Err(Error::Dataset {
            location: root.display().to_string(),
            message: "path does not exist".into(),
        });
    }
    let dir_layout = root.join("train").is_dir();
    let tsv_layout = root.join("train.tsv").is_file();
    let (train, test) = if dir_layout {
        (load_split_dir(&root.join("train"))?, load_split_dir(&root.join("test"))?)
    } else if tsv_layout {
        (load_split_tsv(&root.join("train.tsv"))?, load_split_tsv(&root.join("test.tsv"))?)
    } else {
        return Err(Error::Dataset {
            location: root.display().to_string(),
            message: "expected train/ and test/ directories or train.tsv and test.tsv files".into(),
        });
    };
    Ok(DatasetPair { train, test })
}

/// Loads one split from `path`: either a `label<TAB>text` TSV file or a
/// directory holding `pos/*.txt` and `neg/*.txt`.
pub fn load_split(path: &Path) -> Result<Vec<LabeledDocument>> {
    if path.is_dir() {
        load_split_dir(path)
    } else if path.is_file() {
        load_split_tsv(path)
    } else {
        Err(Error::Dataset {
            location: path.display().to_string(),
            message: "path is neither a TSV file nor a directory".into(),
        })
    }
}

fn load_split_dir(split: &Path) -> Result<Vec<LabeledDocument>> {
    let mut docs = Vec::new();
    for (class, label) in [("neg", LABEL_NEG), ("pos", LABEL_POS)] {
        let dir = split.join(class);
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map_or(false, |ext| ext == "txt"))
            .collect();
        files.sort();
        for path in files {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            push_doc(&mut docs, &text, label, &path.display().to_string())?;
        }
    }
    Ok(docs)
}

fn load_split_tsv(path: &Path) -> Result<Vec<LabeledDocument>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let location = format!("{}:{}", path.display(), lineno + 1);
        let (label, text) = line.split_once('\t').ok_or_else(|| Error::Dataset {
            location: location.clone(),
            message: "expected <label><TAB><text>".into(),
        })?;
        let label = match label {
            "pos" => LABEL_POS,
            "neg" => LABEL_NEG,
            other => {
                return Err(Error::Dataset {
                    location,
                    message: format!("unknown label {other:?}, expected pos or neg"),
                })
            }
        };
        push_doc(&mut docs, text, label, &location)?;
    }
    Ok(docs)
}

fn push_doc(docs: &mut Vec<LabeledDocument>, text: &str, label: usize, location: &str) -> Result<()> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(Error::Dataset {
            location: location.to_string(),
            message: "document has no tokens after tokenization".into(),
        });
    }
    let doc_id = docs.len();
    docs.push(LabeledDocument { tokens, label, doc_id });
    Ok(())
}

/// Per-split size and length statistics.
#[derive(Debug, Clone, Serialize)]
pub struct SplitStats {
    pub documents: usize,
    pub positive: usize,
    pub negative: usize,
    pub avg_tokens: f64,
    pub max_tokens: usize,
    pub min_tokens: usize,
}

pub fn split_stats(docs: &[LabeledDocument]) -> SplitStats {
    let positive = docs.iter().filter(|d| d.label == LABEL_POS).count();
    let lengths: Vec<usize> = docs.iter().map(|d| d.tokens.len()).collect();
    let total: usize = lengths.iter().sum();
    SplitStats {
        documents: docs.len(),
        positive,
        negative: docs.len() - positive,
        avg_tokens: if docs.is_empty() { 0.0 } else { total as f64 / docs.len() as f64 },
        max_tokens: lengths.iter().copied().max().unwrap_or(0),
        min_tokens: lengths.iter().copied().min().unwrap_or(0),
    }
}

/// Binary container for a split of encoded documents.
pub fn save_encoded(path: &Path, docs: &[PaddedDocument], vocab_size: usize, length: usize) -> Result<()> {
    let mut indices = Vec::with_capacity(docs.len() * length);
    let mut lengths = Vec::with_capacity(docs.len());
    let mut labels = Vec::with_capacity(docs.len());
    let mut ids = Vec::with_capacity(docs.len());
    for d in docs {
        indices.extend_from_slice(&d.indices);
        lengths.push(d.true_length as u32);
        labels.push(d.label as u32);
        ids.push(d.doc_id as u32);
    }
    let meta = serde_json::json!({
        "kind": "encoded-corpus",
        "documents": docs.len(),
        "length": length,
        "vocab_size": vocab_size,
    });
    crate::binio::write_container(
        path,
        &meta,
        &[
            crate::binio::Section::from_u32("indices", &indices),
            crate::binio::Section::from_u32("true_lengths", &lengths),
            crate::binio::Section::from_u32("labels", &labels),
            crate::binio::Section::from_u32("doc_ids", &ids),
        ],
    )
}

pub fn load_encoded(path: &Path) -> Result<(Vec<PaddedDocument>, usize)> {
    let container = crate::binio::read_container(path)?;
    let length = container.meta["length"].as_u64().ok_or_else(|| Error::ModelFormat {
        path: path.display().to_string(),
        message: "missing length".into(),
    })? as usize;
    let vocab_size = container.meta["vocab_size"].as_u64().unwrap_or(0) as usize;
    let indices = container.section_u32("indices")?;
    let lengths = container.section_u32("true_lengths")?;
    let labels = container.section_u32("labels")?;
    let ids = container.section_u32("doc_ids")?;
    if length == 0 || indices.len() != lengths.len() * length {
        return Err(Error::ModelFormat {
            path: path.display().to_string(),
            message: "index payload does not match document count".into(),
        });
    }
    let docs = lengths
        .iter()
        .zip(&labels)
        .zip(&ids)
        .enumerate()
        .map(|(i, ((&tl, &label), &id))| PaddedDocument {
            indices: indices[i * length..(i + 1) * length].to_vec(),
            true_length: tl as usize,
            label: label as usize,
            doc_id: id as usize,
        })
        .collect();
    Ok((docs, vocab_size))
}

/// Writes `<label>\t<space-joined tokens>` lines, one per document.
pub fn save_tokenized(path: &Path, docs: &[LabeledDocument]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for d in docs {
        writeln!(w, "{}\t{}", label_name(d.label), d.tokens.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Reads the format `save_tokenized` writes. Document ids follow line
/// order, matching the ids assigned at load time.
pub fn load_tokenized(path: &Path) -> Result<Vec<LabeledDocument>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let at = || format!("{}:{}", path.display(), i + 1);
        let (label, body) = line.split_once('\t').ok_or_else(|| Error::Dataset {
            location: at(),
            message: "expected label<TAB>tokens".into(),
        })?;
        let label = match label {
            "pos" => LABEL_POS,
            "neg" => LABEL_NEG,
            other => {
                return Err(Error::Dataset {
                    location: at(),
                    message: format!("unknown label `{other}`"),
                })
            }
        };
        let tokens: Vec<String> = body.split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            return Err(Error::Dataset {
                location: at(),
                message: "document holds no tokens".into(),
            });
        }
        docs.push(LabeledDocument { tokens, label, doc_id: i });
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(tokens: &[&str], label: usize, doc_id: usize) -> LabeledDocument {
        LabeledDocument {
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            label,
            doc_id,
        }
    }

    #[test]
    fn tokenize_lowercases_and_splits_on_punctuation() {
        assert_eq!(tokenize("Good movie!"), vec!["good", "movie"]);
        assert_eq!(tokenize("don't"), vec!["don", "t"]);
        assert_eq!(tokenize("3 stars, really."), vec!["3", "stars", "really"]);
    }

    #[test]
    fn tokenize_empty_and_symbol_only_inputs() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("?!... --- ***").is_empty());
    }

    #[test]
    fn tokenize_strips_break_tags_in_any_spelling() {
        assert_eq!(tokenize("one<br />two"), vec!["one", "two"]);
        assert_eq!(tokenize("one<br>two"), vec!["one", "two"]);
        assert_eq!(tokenize("one<BR/>two"), vec!["one", "two"]);
        assert_eq!(tokenize("one <br\t/> two"), vec!["one", "two"]);
        // A lone angle bracket is ordinary punctuation.
        assert_eq!(tokenize("a < b"), vec!["a", "b"]);
        assert_eq!(tokenize("a <brand> b"), vec!["a", "brand", "b"]);
    }

    #[test]
    fn vocabulary_ranks_by_frequency_then_alphabetically() {
        let docs = vec![doc(&["b", "a", "b", "c", "a", "b"], 0, 0)];
        let v = Vocabulary::build(&docs, 1, usize::MAX).unwrap();
        assert_eq!(v.size(), 4);
        assert_eq!(v.index_of("b"), Some(1));
        assert_eq!(v.index_of("a"), Some(2));
        assert_eq!(v.index_of("c"), Some(3));
        assert_eq!(v.count(1), 3);
        assert_eq!(v.count(0), 0);
    }

    #[test]
    fn vocabulary_breaks_frequency_ties_lexicographically() {
        let docs = vec![doc(&["zeta", "alpha"], 0, 0)];
        let v = Vocabulary::build(&docs, 1, usize::MAX).unwrap();
        assert_eq!(v.index_of("alpha"), Some(1));
        assert_eq!(v.index_of("zeta"), Some(2));
    }

    #[test]
    fn vocabulary_applies_min_count_and_max_size() {
        let docs = vec![doc(&["a", "a", "b", "c", "c", "c"], 0, 0)];
        let v = Vocabulary::build(&docs, 2, usize::MAX).unwrap();
        assert_eq!(v.size(), 3);
        assert_eq!(v.index_of("b"), None);

        let v = Vocabulary::build(&docs, 1, 2).unwrap();
        assert_eq!(v.size(), 2);
        assert_eq!(v.index_of("c"), Some(1));
        assert_eq!(v.index_of("a"), None);
    }

    #[test]
    fn vocabulary_rejects_empty_result() {
        let docs = vec![doc(&["once"], 0, 0)];
        assert!(Vocabulary::build(&docs, 2, usize::MAX).is_err());
    }

    #[test]
    fn vocabulary_round_trips_through_disk() {
        let docs = vec![doc(&["b", "a", "b"], 0, 0)];
        let v = Vocabulary::build(&docs, 1, usize::MAX).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.tsv");
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(loaded.size(), v.size());
        for i in 1..v.size() as u32 {
            assert_eq!(loaded.word(i), v.word(i));
            assert_eq!(loaded.count(i), v.count(i));
        }
        assert_eq!(loaded.index_of("b"), Some(1));
    }

    #[test]
    fn encode_pads_truncates_and_maps_oov_to_pad() {
        let docs = vec![doc(&["a", "b"], 1, 7)];
        let v = Vocabulary::build(&docs, 1, usize::MAX).unwrap();

        let short = encode(&docs[0], &v, 4);
        assert_eq!(short.indices, vec![1, 2, 0, 0]);
        assert_eq!(short.true_length, 2);
        assert_eq!(short.label, 1);
        assert_eq!(short.doc_id, 7);

        let long = encode(&doc(&["b", "a", "b", "a", "b"], 0, 0), &v, 3);
        assert_eq!(long.indices, vec![2, 1, 2]);
        assert_eq!(long.true_length, 3);

        let oov = encode(&doc(&["x", "a"], 0, 0), &v, 3);
        assert_eq!(oov.indices, vec![0, 1, 0]);
        assert_eq!(oov.true_length, 2);
    }

    #[test]
    fn load_dataset_reads_tsv_pairs() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("train.tsv"), "pos\tGreat fun!\nneg\tDull and slow.\n").unwrap();
        fs::write(dir.path().join("test.tsv"), "neg\tSkip it\n").unwrap();
        let pair = load_dataset(dir.path()).unwrap();
        assert_eq!(pair.train.len(), 2);
        assert_eq!(pair.train[0].tokens, vec!["great", "fun"]);
        assert_eq!(pair.train[0].label, LABEL_POS);
        assert_eq!(pair.train[1].label, LABEL_NEG);
        assert_eq!(pair.train[1].doc_id, 1);
        assert_eq!(pair.test.len(), 1);
    }

    #[test]
    fn load_dataset_reads_directory_trees_in_sorted_order() {
        let dir = tempfile::tempdir().unwrap();
        for (split, class, name, text) in [
            ("train", "pos", "1_10.txt", "Wonderful."),
            ("train", "pos", "0_9.txt", "Loved it!"),
            ("train", "neg", "0_1.txt", "Terrible."),
            ("test", "pos", "0_8.txt", "Fine"),
            ("test", "neg", "0_2.txt", "Bad"),
        ] {
            let d = dir.path().join(split).join(class);
            fs::create_dir_all(&d).unwrap();
            fs::write(d.join(name), text).unwrap();
        }
        // A non-txt file is ignored.
        fs::write(dir.path().join("train/pos/notes.md"), "skip").unwrap();

        let pair = load_dataset(dir.path()).unwrap();
        assert_eq!(pair.train.len(), 3);
        assert_eq!(pair.train[0].tokens, vec!["terrible"]);
        assert_eq!(pair.train[0].label, LABEL_NEG);
        assert_eq!(pair.train[1].tokens, vec!["loved", "it"]);
        assert_eq!(pair.train[2].tokens, vec!["wonderful"]);
        assert_eq!(pair.test.len(), 2);
    }

    #[test]
    fn load_dataset_reports_bad_labels_with_location() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("train.tsv"), "pos\tok\nmaybe\thmm\n").unwrap();
        fs::write(dir.path().join("test.tsv"), "pos\tok\n").unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("maybe"), "unexpected message: {err}");
        assert!(err.contains(":2"), "location missing from: {err}");
    }

    #[test]
    fn load_dataset_rejects_missing_root_and_unknown_layout() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dataset(&dir.path().join("nope")).is_err());
        assert!(load_dataset(dir.path()).is_err());
    }

    #[test]
    fn load_dataset_rejects_empty_documents() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("train.tsv"), "pos\t!!!\n").unwrap();
        fs::write(dir.path().join("test.tsv"), "pos\tok\n").unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("no tokens"), "unexpected message: {err}");
    }

    #[test]
    fn encoded_corpus_round_trips_through_disk() {
        let docs = vec![
            PaddedDocument { indices: vec![1, 2, 0, 0], true_length: 2, label: 1, doc_id: 0 },
            PaddedDocument { indices: vec![3, 3, 1, 0], true_length: 3, label: 0, doc_id: 1 },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.bin");
        save_encoded(&path, &docs, 4, 4).unwrap();
        let (loaded, vocab_size) = load_encoded(&path).unwrap();
        assert_eq!(loaded, docs);
        assert_eq!(vocab_size, 4);
    }

    #[test]
    fn tokenized_corpus_round_trips_through_disk() {
        let docs = vec![doc(&["fine", "movie"], 1, 0), doc(&["dull", "plot", "twist"], 0, 1)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.tokens.tsv");
        save_tokenized(&path, &docs).unwrap();
        let loaded = load_tokenized(&path).unwrap();
        assert_eq!(loaded, docs);

        std::fs::write(&path, "maybe\tsome text\n").unwrap();
        let err = load_tokenized(&path).unwrap_err().to_string();
        assert!(err.contains("unknown label"), "{err}");
    }

    #[test]
    fn split_stats_match_hand_counts() {
        let docs = vec![doc(&["a"], 1, 0), doc(&["a", "b", "c"], 0, 1)];
        let s = split_stats(&docs);
        assert_eq!(s.documents, 2);
        assert_eq!(s.positive, 1);
        assert_eq!(s.negative, 1);
        assert!((s.avg_tokens - 2.0).abs() < 1e-12);
        assert_eq!(s.max_tokens, 3);
        assert_eq!(s.min_tokens, 1);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn encode_always_emits_exactly_length_indices(
                tokens in proptest::collection::vec("[a-d]{1,3}", 0..40),
                length in 1usize..32,
            ) {
                let train = vec![doc(&["a", "b", "c"], 0, 0)];
                let v = Vocabulary::build(&train, 1, usize::MAX).unwrap();
                let d = LabeledDocument { tokens, label: 0, doc_id: 0 };
                let e = encode(&d, &v, length);
                prop_assert_eq!(e.indices.len(), length);
                prop_assert!(e.true_length <= length);
                prop_assert!(e.indices[e.true_length..].iter().all(|&i| i == PAD_INDEX));
                prop_assert!(e.indices.iter().all(|&i| (i as usize) < v.size()));
            }

            #[test]
            fn vocabulary_is_a_bijection_over_its_indices(
                words in proptest::collection::vec("[a-f]{1,4}", 1..60),
            ) {
                let refs: Vec<&str> = words.iter().map(String::as_str).collect();
                let docs = vec![doc(&refs, 0, 0)];
                let v = Vocabulary::build(&docs, 1, usize::MAX).unwrap();
                for i in 1..v.size() as u32 {
                    prop_assert_eq!(v.index_of(v.word(i)), Some(i));
                }
                let total: u64 = (0..v.size() as u32).map(|i| v.count(i)).sum();
                prop_assert_eq!(total, words.len() as u64);
            }

            #[test]
            fn tokenize_emits_alphanumeric_tokens_and_is_idempotent(text in ".{0,200}") {
                for tok in tokenize(&text) {
                    prop_assert!(!tok.is_empty());
                    prop_assert!(tok.chars().all(|c| c.is_alphanumeric()));
                    prop_assert!(!tok.chars().any(|c| c.is_ascii_uppercase()));
                    // Tokens are already fully normalized.
                    prop_assert_eq!(tokenize(&tok), vec![tok.clone()]);
                }
            }
        }
    }
}
