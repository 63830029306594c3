//! Comparison systems: Multinomial Naive Bayes, a linear SVM over
//! bag-of-words counts, and NBSVM (a linear model over binary features
//! scaled by the Naive Bayes log-count ratio).
//!
//! All three share one sparse feature pipeline. Feature indices are
//! assigned in first-seen corpus order, so the space is deterministic
//! without any sorting of hash maps.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledDocument, LABEL_NEG, LABEL_POS, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::seeding;

pub const DEFAULT_SMOOTHING: f64 = 1.0;
pub const NBSVM_INTERPOLATION: f64 = 0.25;
pub const SVM_REG_GRID: [f64; 3] = [1e-4, 1e-3, 1e-2];
pub const SVM_HOLDOUT_FRACTION: f64 = 0.1;

/// Sparse document features: unigrams first, then (optionally) bigrams of
/// in-vocabulary adjacent words. Indices follow first appearance in the
/// corpus the space was built from.
#[derive(Debug, Clone, Default)]
pub struct FeatureSpace {
    unigrams: HashMap<String, u32>,
    bigrams: HashMap<(u32, u32), u32>,
}

impl FeatureSpace {
    pub fn build(docs: &[LabeledDocument], bigrams: bool) -> FeatureSpace {
        let mut space = FeatureSpace::default();
        for doc in docs {
            for token in &doc.tokens {
                if !space.unigrams.contains_key(token) {
                    space.unigrams.insert(token.clone(), space.unigrams.len() as u32);
                }
            }
        }
        if bigrams {
            let base = space.unigrams.len() as u32;
            for doc in docs {
                for pair in doc.tokens.windows(2) {
                    let key = (space.unigrams[&pair[0]], space.unigrams[&pair[1]]);
                    if !space.bigrams.contains_key(&key) {
                        space.bigrams.insert(key, base + space.bigrams.len() as u32);
                    }
                }
            }
        }
        space
    }

    pub fn num_features(&self) -> usize {
        self.unigrams.len() + self.bigrams.len()
    }

    pub fn has_bigrams(&self) -> bool {
        !self.bigrams.is_empty()
    }

    /// Maps tokens to sorted (index, value) pairs. Unknown words and pairs
    /// are dropped; `binarize` replaces counts with presence indicators.
    pub fn featurize(&self, tokens: &[String], binarize: bool) -> Vec<(u32, f64)> {
        let mut counts: HashMap<u32, f64> = HashMap::new();
        for token in tokens {
            if let Some(&i) = self.unigrams.get(token) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        if !self.bigrams.is_empty() {
            for pair in tokens.windows(2) {
                if let (Some(&a), Some(&b)) = (self.unigrams.get(&pair[0]), self.unigrams.get(&pair[1])) {
                    if let Some(&i) = self.bigrams.get(&(a, b)) {
                        *counts.entry(i).or_insert(0.0) += 1.0;
                    }
                }
            }
        }
        let mut out: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(i, c)| (i, if binarize { 1.0 } else { c }))
            .collect();
        out.sort_unstable_by_key(|&(i, _)| i);
        out
    }

    pub fn counts(&self, docs: &[LabeledDocument], binarize: bool) -> SparseCounts {
        SparseCounts {
            docs: docs.iter().map(|d| self.featurize(&d.tokens, binarize)).collect(),
            num_features: self.num_features(),
            labels: docs.iter().map(|d| d.label).collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut by_index: Vec<(&String, u32)> = self.unigrams.iter().map(|(w, &i)| (w, i)).collect();
        by_index.sort_unstable_by_key(|&(_, i)| i);
        let mut out = String::new();
        writeln!(out, "unigrams\t{}", by_index.len()).expect("string write");
        for (word, index) in by_index {
            writeln!(out, "{word}\t{index}").expect("string write");
        }
        let mut pairs: Vec<((u32, u32), u32)> = self.bigrams.iter().map(|(&k, &i)| (k, i)).collect();
        pairs.sort_unstable_by_key(|&(_, i)| i);
        writeln!(out, "bigrams\t{}", pairs.len()).expect("string write");
        for ((a, b), index) in pairs {
            writeln!(out, "{a}\t{b}\t{index}").expect("string write");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<FeatureSpace> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lines: Vec<&str> = text.lines().collect();
        let bad = |line: usize, message: &str| Error::ModelFormat {
            path: path.display().to_string(),
            message: format!("line {}: {message}", line + 1),
        };
        let header = |at: usize, name: &str| -> Result<usize> {
            match lines.get(at).and_then(|t| t.split_once('\t')) {
                Some((label, n)) if label == name => {
                    n.parse().map_err(|_| bad(at, "unreadable section length"))
                }
                _ => Err(bad(at, &format!("expected a {name} header"))),
            }
        };
        let mut space = FeatureSpace::default();
        let n_uni = header(0, "unigrams")?;
        for at in 1..=n_uni {
            let row = lines.get(at).ok_or_else(|| bad(at, "truncated unigram section"))?;
            let (word, index) = row.split_once('\t').ok_or_else(|| bad(at, "expected word<TAB>index"))?;
            let index: u32 = index.parse().map_err(|_| bad(at, "unreadable index"))?;
            space.unigrams.insert(word.to_string(), index);
        }
        let n_bi = header(n_uni + 1, "bigrams")?;
        for at in n_uni + 2..n_uni + 2 + n_bi {
            let row = lines.get(at).ok_or_else(|| bad(at, "truncated bigram section"))?;
            let mut parts = row.split('\t').map(|p| p.parse::<u32>());
            let mut next = || -> Result<u32> {
                parts
                    .next()
                    .and_then(|p| p.ok())
                    .ok_or_else(|| bad(at, "expected left<TAB>right<TAB>index"))
            };
            let (a, b, index) = (next()?, next()?, next()?);
            space.bigrams.insert((a, b), index);
        }
        Ok(space)
    }
}

/// Featurized corpus: one sorted (index, value) list per document.
/// Count-valued when built with `binarize = false`, presence-valued
/// otherwise; NBSVM later rescales presence values by the ratio vector.
#[derive(Debug, Clone)]
pub struct SparseCounts {
    pub docs: Vec<Vec<(u32, f64)>>,
    pub num_features: usize,
    pub labels: Vec<usize>,
}

impl SparseCounts {
    /// Shape checks shared by every trainer: indices in range, one label
    /// per doc, both classes present.
    fn validate_for_training(&self) -> Result<()> {
        if self.docs.len() != self.labels.len() {
            return Err(Error::Baseline(format!(
                "{} documents but {} labels",
                self.docs.len(),
                self.labels.len()
            )));
        }
        if self.docs.is_empty() {
            return Err(Error::Baseline("empty training corpus".into()));
        }
        for (doc, feats) in self.docs.iter().enumerate() {
            if let Some(&(i, _)) = feats.iter().find(|&&(i, _)| (i as usize) >= self.num_features) {
                return Err(Error::Baseline(format!(
                    "document {doc} holds feature {i} outside the space of {}",
                    self.num_features
                )));
            }
        }
        if let Some(&label) = self.labels.iter().find(|&&l| l >= NUM_CLASSES) {
            return Err(Error::Baseline(format!("label {label} out of range")));
        }
        let pos = self.labels.iter().filter(|&&l| l == LABEL_POS).count();
        if pos == 0 || pos == self.labels.len() {
            return Err(Error::Baseline("training corpus holds a single class".into()));
        }
        Ok(())
    }

    fn is_binary(&self) -> bool {
        self.docs.iter().all(|d| d.iter().all(|&(_, v)| v == 1.0))
    }
}

/// Multinomial Naive Bayes with additive smoothing.
#[derive(Debug, Clone)]
pub struct MnbModel {
    pub smoothing: f64,
    /// ln P(class), indexed [neg, pos].
    pub log_prior: [f64; 2],
    /// ln P(feature | class), dense per class.
    pub log_prob: [Vec<f64>; 2],
}

/// log P(w|c) = ln((count_{c,w} + smoothing) / (total_c + smoothing * V)).
pub fn train_mnb(counts: &SparseCounts, smoothing: f64) -> Result<MnbModel> {
    counts.validate_for_training()?;
    if !(smoothing > 0.0) {
        return Err(Error::Baseline(format!("smoothing must be positive, got {smoothing}")));
    }
    let v = counts.num_features;
    let mut sums = [vec![0.0f64; v], vec![0.0f64; v]];
    let mut totals = [0.0f64; 2];
    let mut class_docs = [0usize; 2];
    for (feats, &label) in counts.docs.iter().zip(&counts.labels) {
        class_docs[label] += 1;
        for &(i, value) in feats {
            sums[label][i as usize] += value;
            totals[label] += value;
        }
    }
    let n = counts.docs.len() as f64;
    let mut log_prob = [vec![0.0f64; v], vec![0.0f64; v]];
    for c in 0..2 {
        let denom = (totals[c] + smoothing * v as f64).ln();
        for w in 0..v {
            log_prob[c][w] = (sums[c][w] + smoothing).ln() - denom;
        }
    }
    Ok(MnbModel {
        smoothing,
        log_prior: [(class_docs[0] as f64 / n).ln(), (class_docs[1] as f64 / n).ln()],
        log_prob,
    })
}

impl MnbModel {
    /// ln P(class) + sum of count-weighted feature log-probabilities.
    /// Features outside the space are ignored.
    pub fn log_joint(&self, feats: &[(u32, f64)]) -> [f64; 2] {
        let mut scores = self.log_prior;
        for &(i, value) in feats {
            let i = i as usize;
            if i < self.log_prob[0].len() {
                scores[0] += value * self.log_prob[0][i];
                scores[1] += value * self.log_prob[1][i];
            }
        }
        scores
    }

    pub fn posterior(&self, feats: &[(u32, f64)]) -> [f64; 2] {
        let joint = self.log_joint(feats);
        let top = joint[0].max(joint[1]);
        let e = [(joint[0] - top).exp(), (joint[1] - top).exp()];
        let total = e[0] + e[1];
        [e[0] / total, e[1] / total]
    }

    /// Ties go to the negative class.
    pub fn predict(&self, feats: &[(u32, f64)]) -> usize {
        let joint = self.log_joint(feats);
        if joint[1] > joint[0] {
            LABEL_POS
        } else {
            LABEL_NEG
        }
    }

    pub fn save_text(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "kind\tmnb").expect("string write");
        writeln!(out, "smoothing\t{}", self.smoothing).expect("string write");
        writeln!(out, "prior\t{}\t{}", self.log_prior[0], self.log_prior[1]).expect("string write");
        for (name, table) in [("weights_neg", &self.log_prob[0]), ("weights_pos", &self.log_prob[1])] {
            writeln!(out, "{name}\t{}", table.len()).expect("string write");
            for (i, value) in table.iter().enumerate() {
                writeln!(out, "{i}\t{value}").expect("string write");
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load_text(path: &Path) -> Result<MnbModel> {
        let mut lines = TextModelReader::open(path)?;
        lines.expect_kind("mnb")?;
        let smoothing = lines.keyed_value("smoothing")?;
        let prior = lines.keyed_pair("prior")?;
        let neg = lines.dense_section("weights_neg")?;
        let pos = lines.dense_section("weights_pos")?;
        if neg.len() != pos.len() {
            return Err(lines.format_error("class tables differ in length"));
        }
        Ok(MnbModel { smoothing, log_prior: prior, log_prob: [neg, pos] })
    }
}

/// Naive Bayes log-count ratio over binarized features:
/// r = ln(p / |p|_1) - ln(q / |q|_1), p and q the smoothed per-class
/// presence counts. Computed as a difference of the two per-class log
/// terms, so swapping the classes negates r exactly.
pub fn nb_log_count_ratio(counts: &SparseCounts, smoothing: f64) -> Result<Vec<f64>> {
    counts.validate_for_training()?;
    if !(smoothing > 0.0) {
        return Err(Error::Baseline(format!("smoothing must be positive, got {smoothing}")));
    }
    if !counts.is_binary() {
        return Err(Error::Baseline("log-count ratio expects binarized features".into()));
    }
    let v = counts.num_features;
    let mut p = vec![smoothing; v];
    let mut q = vec![smoothing; v];
    for (feats, &label) in counts.docs.iter().zip(&counts.labels) {
        let table = if label == LABEL_POS { &mut p } else { &mut q };
        for &(i, value) in feats {
            table[i as usize] += value;
        }
    }
    let p_norm = p.iter().sum::<f64>().ln();
    let q_norm = q.iter().sum::<f64>().ln();
    Ok(p
        .iter()
        .zip(&q)
        .map(|(&pw, &qw)| (pw.ln() - p_norm) - (qw.ln() - q_norm))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Hinge,
    Logistic,
}

impl LossKind {
    fn name(self) -> &'static str {
        match self {
            LossKind::Hinge => "hinge",
            LossKind::Logistic => "logistic",
        }
    }

    fn parse(text: &str) -> Option<LossKind> {
        match text {
            "hinge" => Some(LossKind::Hinge),
            "logistic" => Some(LossKind::Logistic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearConfig {
    pub loss: LossKind,
    pub reg: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl LinearConfig {
    pub fn new(loss: LossKind, reg: f64, seed: u64) -> LinearConfig {
        LinearConfig { loss, reg, epochs: 20, seed }
    }
}

#[derive(Debug, Clone)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub loss: LossKind,
    pub reg: f64,
}

impl LinearModel {
    pub fn score(&self, feats: &[(u32, f64)]) -> f64 {
        let mut s = self.bias;
        for &(i, value) in feats {
            if (i as usize) < self.weights.len() {
                s += self.weights[i as usize] * value;
            }
        }
        s
    }

    /// Positive score means the positive class; ties (score 0) go negative.
    pub fn predict(&self, feats: &[(u32, f64)]) -> usize {
        if self.score(feats) > 0.0 {
            LABEL_POS
        } else {
            LABEL_NEG
        }
    }

    pub fn save_text(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "kind\tlinear").expect("string write");
        writeln!(out, "loss\t{}", self.loss.name()).expect("string write");
        writeln!(out, "reg\t{}", self.reg).expect("string write");
        writeln!(out, "bias\t{}", self.bias).expect("string write");
        write_sparse_weights(&mut out, "weights", &self.weights, self.weights.len());
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load_text(path: &Path) -> Result<LinearModel> {
        let mut lines = TextModelReader::open(path)?;
        lines.expect_kind("linear")?;
        let loss = lines.keyed_string("loss")?;
        let loss = LossKind::parse(&loss).ok_or_else(|| lines.format_error("unknown loss kind"))?;
        let reg = lines.keyed_value("reg")?;
        let bias = lines.keyed_value("bias")?;
        let weights = lines.sparse_section("weights")?;
        Ok(LinearModel { weights, bias, loss, reg })
    }
}

/// Stochastic subgradient descent on the L2-regularized objective
/// reg/2 |w|^2 + mean loss, learning rate 1/(reg * t). The regularizer
/// shrinks every weight each step; that is applied lazily through a
/// scale factor so each update stays proportional to the document's
/// nonzero count.
pub fn train_linear(counts: &SparseCounts, config: &LinearConfig) -> Result<LinearModel> {
    counts.validate_for_training()?;
    if !(config.reg > 0.0) || !config.reg.is_finite() {
        return Err(Error::Baseline(format!(
            "regularization strength must be positive and finite, got {}",
            config.reg
        )));
    }
    if config.epochs == 0 {
        return Err(Error::Baseline("linear training needs at least one epoch".into()));
    }

    let mut v = vec![0.0f64; counts.num_features];
    let mut scale = 1.0f64;
    let mut bias = 0.0f64;
    let mut t = 0u64;
    let shuffle_stage = seeding::stage_seed(config.seed, "linear-shuffle");
    let mut order: Vec<usize> = (0..counts.docs.len()).collect();
    for epoch in 0..config.epochs {
        let mut rng = seeding::item_rng(shuffle_stage, epoch as u64);
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
        for &doc in &order {
            t += 1;
            let eta = 1.0 / (config.reg * t as f64);
            scale *= 1.0 - eta * config.reg;
            if scale == 0.0 || scale.abs() < 1e-100 {
                for w in &mut v {
                    *w *= scale;
                }
                scale = 1.0;
            }

            let feats = &counts.docs[doc];
            let y = if counts.labels[doc] == LABEL_POS { 1.0 } else { -1.0 };
            let mut dot = 0.0;
            for &(i, value) in feats {
                dot += v[i as usize] * value;
            }
            let s = scale * dot + bias;
            if !s.is_finite() || !scale.is_finite() {
                return Err(Error::Baseline(format!("objective diverged at step {t}")));
            }
            // Subgradient magnitude on the loss term; zero skips the update.
            let g = match config.loss {
                LossKind::Hinge => {
                    if y * s < 1.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                LossKind::Logistic => 1.0 / (1.0 + (y * s).exp()),
            };
            if g != 0.0 {
                let step = eta * y * g;
                for &(i, value) in feats {
                    v[i as usize] += step * value / scale;
                }
                bias += step;
            }
        }
    }
    let weights: Vec<f64> = v.into_iter().map(|w| w * scale).collect();
    if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
        return Err(Error::Baseline(format!("objective diverged at step {t}")));
    }
    Ok(LinearModel { weights, bias, loss: config.loss, reg: config.reg })
}

/// Splits off a held-out slice, trains once per grid entry, and returns
/// (chosen reg, per-entry held-out accuracy). Ties go to the smaller reg;
/// the caller retrains on the full corpus with the winner.
pub fn tune_reg(
    counts: &SparseCounts,
    grid: &[f64],
    holdout_fraction: f64,
    config: &LinearConfig,
) -> Result<(f64, Vec<(f64, f64)>)> {
    counts.validate_for_training()?;
    if grid.is_empty() {
        return Err(Error::Baseline("empty regularization grid".into()));
    }
    if !(0.0..1.0).contains(&holdout_fraction) || holdout_fraction == 0.0 {
        return Err(Error::Baseline(format!("holdout fraction must lie in (0, 1), got {holdout_fraction}")));
    }
    let mut order: Vec<usize> = (0..counts.docs.len()).collect();
    let mut rng = seeding::stage_rng(config.seed, "reg-tune");
    rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
    let held = ((counts.docs.len() as f64 * holdout_fraction).round() as usize)
        .clamp(1, counts.docs.len() - 1);
    let (held_idx, train_idx) = order.split_at(held);
    let slice = |idx: &[usize]| SparseCounts {
        docs: idx.iter().map(|&i| counts.docs[i].clone()).collect(),
        num_features: counts.num_features,
        labels: idx.iter().map(|&i| counts.labels[i]).collect(),
    };
    let train = slice(train_idx);
    let held = slice(held_idx);

    let mut results = Vec::new();
    let mut best = (grid[0], -1.0f64);
    for &reg in grid {
        let model = train_linear(&train, &LinearConfig { reg, ..config.clone() })?;
        let correct = held
            .docs
            .iter()
            .zip(&held.labels)
            .filter(|(f, &l)| model.predict(f) == l)
            .count();
        let acc = correct as f64 / held.docs.len() as f64;
        results.push((reg, acc));
        if acc > best.1 {
            best = (reg, acc);
        }
    }
    Ok((best.0, results))
}

/// NBSVM: binary features scaled elementwise by the log-count ratio, a
/// hinge-loss linear model on top, and the trained weights interpolated
/// toward their mean magnitude.
#[derive(Debug, Clone)]
pub struct NbsvmModel {
    pub ratio: Vec<f64>,
    pub linear: LinearModel,
    pub interpolation: f64,
}

/// w' = (1 - beta) * mean|w| + beta * w, applied elementwise.
fn interpolate_weights(weights: &mut [f64], beta: f64) {
    if weights.is_empty() {
        return;
    }
    let mean_mag = weights.iter().map(|w| w.abs()).sum::<f64>() / weights.len() as f64;
    for w in weights {
        *w = (1.0 - beta) * mean_mag + beta * *w;
    }
}

pub fn train_nbsvm(binary: &SparseCounts, config: &LinearConfig) -> Result<NbsvmModel> {
    let ratio = nb_log_count_ratio(binary, DEFAULT_SMOOTHING)?;
    let scaled = SparseCounts {
        docs: binary
            .docs
            .iter()
            .map(|feats| feats.iter().map(|&(i, _)| (i, ratio[i as usize])).collect())
            .collect(),
        num_features: binary.num_features,
        labels: binary.labels.clone(),
    };
    let mut linear = train_linear(&scaled, config)?;
    interpolate_weights(&mut linear.weights, NBSVM_INTERPOLATION);
    // The bias scales with beta too; otherwise it would keep its original
    // magnitude against weights shrunk fourfold and swamp the blended
    // score. With it, the decision value is (1-beta) * mean|w| * (sum of
    // active ratios) + beta * (SVM score): an average of the NB and SVM
    // decisions.
    linear.bias *= NBSVM_INTERPOLATION;
    Ok(NbsvmModel { ratio, linear, interpolation: NBSVM_INTERPOLATION })
}

impl NbsvmModel {
    /// Scales a binary feature vector by the ratio before scoring.
    fn scaled(&self, binary_feats: &[(u32, f64)]) -> Vec<(u32, f64)> {
        binary_feats
            .iter()
            .filter(|&&(i, _)| (i as usize) < self.ratio.len())
            .map(|&(i, _)| (i, self.ratio[i as usize]))
            .collect()
    }

    pub fn score(&self, binary_feats: &[(u32, f64)]) -> f64 {
        self.linear.score(&self.scaled(binary_feats))
    }

    pub fn predict(&self, binary_feats: &[(u32, f64)]) -> usize {
        self.linear.predict(&self.scaled(binary_feats))
    }

    pub fn save_text(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "kind\tnbsvm").expect("string write");
        writeln!(out, "interpolation\t{}", self.interpolation).expect("string write");
        writeln!(out, "loss\t{}", self.linear.loss.name()).expect("string write");
        writeln!(out, "reg\t{}", self.linear.reg).expect("string write");
        writeln!(out, "bias\t{}", self.linear.bias).expect("string write");
        write_sparse_weights(&mut out, "ratio", &self.ratio, self.ratio.len());
        write_sparse_weights(&mut out, "weights", &self.linear.weights, self.linear.weights.len());
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load_text(path: &Path) -> Result<NbsvmModel> {
        let mut lines = TextModelReader::open(path)?;
        lines.expect_kind("nbsvm")?;
        let interpolation = lines.keyed_value("interpolation")?;
        let loss = lines.keyed_string("loss")?;
        let loss = LossKind::parse(&loss).ok_or_else(|| lines.format_error("unknown loss kind"))?;
        let reg = lines.keyed_value("reg")?;
        let bias = lines.keyed_value("bias")?;
        let ratio = lines.sparse_section("ratio")?;
        let weights = lines.sparse_section("weights")?;
        if ratio.len() != weights.len() {
            return Err(lines.format_error("ratio and weight tables differ in length"));
        }
        Ok(NbsvmModel { ratio, linear: LinearModel { weights, bias, loss, reg }, interpolation })
    }
}

/// Section header `name<TAB>len<TAB>nnz`, then one `index<TAB>value` row
/// per nonzero entry.
fn write_sparse_weights(out: &mut String, name: &str, values: &[f64], len: usize) {
    let nnz = values.iter().filter(|&&v| v != 0.0).count();
    writeln!(out, "{name}\t{len}\t{nnz}").expect("string write");
    for (i, &value) in values.iter().enumerate() {
        if value != 0.0 {
            writeln!(out, "{i}\t{value}").expect("string write");
        }
    }
}

/// Line-oriented reader for the text model dumps above.
struct TextModelReader {
    path: String,
    lines: std::vec::IntoIter<String>,
    line_no: usize,
}

impl TextModelReader {
    fn open(path: &Path) -> Result<TextModelReader> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(TextModelReader {
            path: path.display().to_string(),
            lines: text.lines().map(str::to_string).collect::<Vec<_>>().into_iter(),
            line_no: 0,
        })
    }

    fn format_error(&self, message: &str) -> Error {
        Error::ModelFormat {
            path: self.path.clone(),
            message: format!("line {}: {message}", self.line_no),
        }
    }

    fn next_line(&mut self) -> Result<String> {
        self.line_no += 1;
        self.lines.next().ok_or_else(|| self.format_error("truncated file"))
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<String>> {
        let line = self.next_line()?;
        let mut parts = line.split('\t');
        if parts.next() != Some(key) {
            return Err(self.format_error(&format!("expected `{key}`")));
        }
        Ok(parts.map(str::to_string).collect())
    }

    fn expect_kind(&mut self, kind: &str) -> Result<()> {
        let values = self.keyed("kind")?;
        if values.first().map(String::as_str) != Some(kind) {
            return Err(self.format_error(&format!("not a {kind} model file")));
        }
        Ok(())
    }

    fn keyed_string(&mut self, key: &str) -> Result<String> {
        self.keyed(key)?
            .into_iter()
            .next()
            .ok_or_else(|| self.format_error(&format!("`{key}` holds no value")))
    }

    fn keyed_value(&mut self, key: &str) -> Result<f64> {
        let text = self.keyed_string(key)?;
        text.parse().map_err(|_| self.format_error(&format!("unreadable `{key}` value")))
    }

    fn keyed_pair(&mut self, key: &str) -> Result<[f64; 2]> {
        let values = self.keyed(key)?;
        let parse = |i: usize| -> Result<f64> {
            values
                .get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| self.format_error(&format!("`{key}` needs two values")))
        };
        Ok([parse(0)?, parse(1)?])
    }

    /// `name<TAB>len` header then exactly `len` dense rows.
    fn dense_section(&mut self, name: &str) -> Result<Vec<f64>> {
        let header = self.keyed(name)?;
        let len: usize = header
            .first()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| self.format_error("unreadable section length"))?;
        let mut values = vec![0.0; len];
        for _ in 0..len {
            let line = self.next_line()?;
            let (index, value) = self.parse_row(&line, len)?;
            values[index] = value;
        }
        Ok(values)
    }

    /// `name<TAB>len<TAB>nnz` header then `nnz` rows; absent rows are zero.
    fn sparse_section(&mut self, name: &str) -> Result<Vec<f64>> {
        let header = self.keyed(name)?;
        let parse_at = |i: usize| -> Option<usize> { header.get(i).and_then(|v| v.parse().ok()) };
        let len = parse_at(0).ok_or_else(|| self.format_error("unreadable section length"))?;
        let nnz = parse_at(1).ok_or_else(|| self.format_error("unreadable nonzero count"))?;
        let mut values = vec![0.0; len];
        for _ in 0..nnz {
            let line = self.next_line()?;
            let (index, value) = self.parse_row(&line, len)?;
            values[index] = value;
        }
        Ok(values)
    }

    fn parse_row(&self, line: &str, len: usize) -> Result<(usize, f64)> {
        let (index, value) = line
            .split_once('\t')
            .ok_or_else(|| self.format_error("expected index<TAB>value"))?;
        let index: usize = index.parse().map_err(|_| self.format_error("unreadable index"))?;
        if index >= len {
            return Err(self.format_error("index outside the declared length"));
        }
        let value: f64 = value.parse().map_err(|_| self.format_error("unreadable value"))?;
        Ok((index, value))
    }
}
