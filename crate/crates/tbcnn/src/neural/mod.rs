//! The convolutional classifier: multichannel valid 1-D convolution over
//! embedded (optionally topic-fused) documents, ReLU, 1-max pooling,
//! inverted dropout, and a bias-free dense layer into softmax.
//!
//! Training uses hand-derived gradients. The backward pass exploits 1-max
//! pooling: only the argmax window of each filter carries gradient, so the
//! backward cost is a small fraction of the forward GEMMs.
//!
//! Documents enter as index sequences and are embedded on the fly from the
//! live (fine-tuned) table; materializing fused matrices up front would both
//! go stale after the first embedding update and need gigabytes at corpus
//! scale.

pub mod gradcheck;
pub mod ops;
pub mod optimizer;

use std::collections::HashMap;
use std::path::Path;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::corpus::{PaddedDocument, PAD_INDEX};
use crate::embedding::{EmbeddingMatrix, TopicVectorTable};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seeding;

pub use optimizer::{Optimizer, OptimizerKind};

pub const INIT_HALF_WIDTH: f64 = 0.01;
pub const DEFAULT_REGION_SIZES: [usize; 3] = [4, 5, 6];
pub const DEFAULT_FILTERS_PER_SIZE: usize = 100;

/// Convolution geometry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub region_sizes: Vec<usize>,
    pub filters_per_size: usize,
    pub input_width: usize,
}

impl ConvSpec {
    pub fn pooled_len(&self) -> usize {
        self.region_sizes.len() * self.filters_per_size
    }

    /// Σ over region sizes of F·(h·d + 1): filters plus one bias each.
    pub fn conv_param_count(&self) -> usize {
        self.region_sizes
            .iter()
            .map(|&h| self.filters_per_size * (h * self.input_width + 1))
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.region_sizes.is_empty() {
            return Err(Error::Config("at least one region size is required".into()));
        }
        if self.region_sizes.iter().any(|&h| h == 0) {
            return Err(Error::Config("region sizes must be at least 1".into()));
        }
        if self.filters_per_size == 0 {
            return Err(Error::Config("filters_per_size must be at least 1".into()));
        }
        if self.input_width == 0 {
            return Err(Error::Config("input width must be positive".into()));
        }
        Ok(())
    }
}

/// Training settings. Dropout masks derive from `shuffle_seed` per
/// (step, example), so a fixed seed replays identical masks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub optimizer: OptimizerKind,
    pub shuffle_seed: u64,
    pub fine_tune_embeddings: bool,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            batch_size: 50,
            epochs: 10,
            learning_rate: 1e-3,
            dropout_rate: 0.5,
            optimizer: OptimizerKind::Adam,
            shuffle_seed: 0,
            fine_tune_embeddings: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("learning_rate must be non-negative, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// One classifier input: fixed-length index sequence plus, in topic mode,
/// the document's dominant topic.
#[derive(Debug, Clone)]
pub struct CnnDoc {
    pub indices: Vec<u32>,
    pub topic: Option<usize>,
    pub label: usize,
    pub doc_id: usize,
}

impl CnnDoc {
    pub fn from_padded(doc: &PaddedDocument, topic: Option<usize>) -> CnnDoc {
        CnnDoc {
            indices: doc.indices.clone(),
            topic,
            label: doc.label,
            doc_id: doc.doc_id,
        }
    }
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

/// Gradient sums over a batch (divide by `examples` for means). Embedding
/// gradients stay sparse: only rows touched by the batch appear.
pub struct GradBatch<T: Scalar> {
    pub filters: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
    pub dense: Array2<T>,
    pub embedding_rows: HashMap<u32, Vec<T>>,
    pub examples: usize,
    pub loss_sum: f64,
    pub correct: usize,
}

impl<T: Scalar> GradBatch<T> {
    fn zeros_like(model: &CnnModel<T>) -> GradBatch<T> {
        GradBatch {
            filters: model.filters.iter().map(|f| Array2::zeros(f.dim())).collect(),
            biases: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            dense: Array2::zeros(model.dense.dim()),
            embedding_rows: HashMap::new(),
            examples: 0,
            loss_sum: 0.0,
            correct: 0,
        }
    }

    /// Divides every gradient sum by the number of examples.
    fn into_means(mut self) -> GradBatch<T> {
        let inv = T::from_f64(1.0 / self.examples as f64);
        for f in &mut self.filters {
            f.mapv_inplace(|v| v * inv);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|v| v * inv);
        }
        self.dense.mapv_inplace(|v| v * inv);
        for row in self.embedding_rows.values_mut() {
            for v in row {
                *v = *v * inv;
            }
        }
        self
    }

    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.examples as f64
    }

    pub fn all_finite(&self) -> bool {
        self.filters.iter().all(|f| f.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
            && self.dense.iter().all(|v| v.is_finite())
            && self.embedding_rows.values().all(|r| r.iter().all(|v| v.is_finite()))
    }
}

/// Reusable per-thread forward/backward buffers for one document length.
struct Scratch<T: Scalar> {
    x: Array2<T>,
    windows: Vec<Array2<T>>,
    maps: Vec<Array2<T>>,
    pool_raw: Vec<T>,
    argmax: Vec<usize>,
    fed: Vec<T>,
    mask_scale: Vec<T>,
    probs: Vec<T>,
    dx: Array2<T>,
}

impl<T: Scalar> Scratch<T> {
    fn new(model: &CnnModel<T>, doc_len: usize) -> Scratch<T> {
        let d = model.spec.input_width;
        let f = model.spec.filters_per_size;
        let p = model.spec.pooled_len();
        Scratch {
            x: Array2::zeros((doc_len, d)),
            windows: model
                .spec
                .region_sizes
                .iter()
                .map(|&h| Array2::zeros((doc_len - h + 1, h * d)))
                .collect(),
            maps: model
                .spec
                .region_sizes
                .iter()
                .map(|&h| Array2::zeros((doc_len - h + 1, f)))
                .collect(),
            pool_raw: vec![T::zero(); p],
            argmax: vec![0; p],
            fed: vec![T::zero(); p],
            mask_scale: vec![T::zero(); p],
            probs: vec![T::zero(); model.num_classes()],
            dx: Array2::zeros((doc_len, d)),
        }
    }
}

/// The classifier. `topic_table` present means TB mode (input width `2y`);
/// absent means plain word-only mode (width `y`).
pub struct CnnModel<T: Scalar> {
    pub embedding: Array2<T>,
    pub topic_table: Option<Array2<T>>,
    pub spec: ConvSpec,
    /// Per region size: filters flattened to `F x (h*input_width)`.
    pub filters: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
    /// `num_classes x pooled_len`, no bias.
    pub dense: Array2<T>,
    pub init_seed: u64,
}

impl<T: Scalar> CnnModel<T> {
    pub fn new(
        embedding: &EmbeddingMatrix<T>,
        topics: Option<&TopicVectorTable<T>>,
        region_sizes: &[usize],
        filters_per_size: usize,
        num_classes: usize,
        init_seed: u64,
    ) -> Result<CnnModel<T>> {
        let y = embedding.dim();
        if let Some(t) = topics {
            if t.dim() != y {
                return Err(Error::Config(format!(
                    "topic vectors of width {} do not match embeddings of width {y}",
                    t.dim()
                )));
            }
        }
        if num_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        let width = if topics.is_some() { 2 * y } else { y };
        let spec = ConvSpec {
            region_sizes: region_sizes.to_vec(),
            filters_per_size,
            input_width: width,
        };
        spec.validate()?;

        let mut emb = embedding.matrix().clone();
        emb.row_mut(0).fill(T::zero());

        let mut rng = seeding::stage_rng(init_seed, "cnn-init");
        let mut draw = |n: usize| -> Vec<T> {
            (0..n).map(|_| T::from_f64(rng.gen_range(-INIT_HALF_WIDTH..INIT_HALF_WIDTH))).collect()
        };
        let mut filters = Vec::new();
        let mut biases = Vec::new();
        for &h in region_sizes {
            filters.push(
                Array2::from_shape_vec((filters_per_size, h * width), draw(filters_per_size * h * width))
                    .expect("shape matches draw count"),
            );
            biases.push(Array1::from_vec(draw(filters_per_size)));
        }
        let dense = Array2::from_shape_vec(
            (num_classes, spec.pooled_len()),
            draw(num_classes * spec.pooled_len()),
        )
        .expect("shape matches draw count");

        Ok(CnnModel {
            embedding: emb,
            topic_table: topics.map(|t| t.matrix().clone()),
            spec,
            filters,
            biases,
            dense,
            init_seed,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.dense.nrows()
    }

    pub fn embed_dim(&self) -> usize {
        if self.topic_table.is_some() {
            self.spec.input_width / 2
        } else {
            self.spec.input_width
        }
    }

    /// Trainable parameter count: conv filters and biases, dense weights,
    /// and the embedding table.
    pub fn param_count(&self) -> usize {
        self.spec.conv_param_count()
            + self.dense.len()
            + self.embedding.len()
    }

    fn check_doc(&self, doc: &CnnDoc) -> Result<()> {
        let max_h = *self.spec.region_sizes.iter().max().expect("validated non-empty");
        if doc.indices.len() < max_h {
            return Err(Error::Config(format!(
                "document length {} is below the largest region size {max_h}",
                doc.indices.len()
            )));
        }
        if doc.label >= self.num_classes() {
            return Err(Error::Config(format!(
                "label {} out of range for {} classes",
                doc.label,
                self.num_classes()
            )));
        }
        match (&self.topic_table, doc.topic) {
            (Some(table), Some(t)) if t >= table.nrows() => Err(Error::Config(format!(
                "topic {t} out of range ({} topics)",
                table.nrows()
            ))),
            (Some(_), None) => Err(Error::Config("model expects a topic per document".into())),
            (None, Some(_)) => Err(Error::Config("word-only model got a document with a topic".into())),
            _ => Ok(()),
        }
    }

    /// Builds the input matrix: word embedding rows (zero for padding) with
    /// the topic vector appended in topic mode.
    fn assemble(&self, doc: &CnnDoc, x: &mut Array2<T>) -> Result<()> {
        let d = self.spec.input_width;
        let y = self.embed_dim();
        let emb = self.embedding.as_slice().expect("standard layout");
        let xs = x.as_slice_mut().expect("standard layout");
        for (i, &w) in doc.indices.iter().enumerate() {
            let w = w as usize;
            if w >= self.embedding.nrows() {
                return Err(Error::Config(format!(
                    "document {} holds index {w} outside the embedding table",
                    doc.doc_id
                )));
            }
            xs[i * d..i * d + y].copy_from_slice(&emb[w * y..(w + 1) * y]);
        }
        if let (Some(table), Some(t)) = (&self.topic_table, doc.topic) {
            let ts = table.as_slice().expect("standard layout");
            let row = &ts[t * y..(t + 1) * y];
            for i in 0..doc.indices.len() {
                xs[i * d + y..(i + 1) * d].copy_from_slice(row);
            }
        }
        Ok(())
    }

    /// Forward pass through the scratch buffers. In training mode dropout
    /// masks come from `mask_rng`; in inference `fed` is the plain ReLU
    /// output. Returns the loss.
    fn forward<R: Rng>(
        &self,
        doc: &CnnDoc,
        scratch: &mut Scratch<T>,
        dropout_rate: f64,
        mask_rng: Option<&mut R>,
    ) -> Result<f64> {
        self.assemble(doc, &mut scratch.x)?;
        let d = self.spec.input_width;
        let f_count = self.spec.filters_per_size;
        let xs = scratch.x.as_slice().expect("standard layout");

        for (r, &h) in self.spec.region_sizes.iter().enumerate() {
            let windows = &mut scratch.windows[r];
            let rows = windows.nrows();
            {
                let ws = windows.as_slice_mut().expect("standard layout");
                let span = h * d;
                for i in 0..rows {
                    ws[i * span..(i + 1) * span].copy_from_slice(&xs[i * d..(i + h) * d]);
                }
            }
            general_mat_mul(
                T::one(),
                windows,
                &self.filters[r].t(),
                T::zero(),
                &mut scratch.maps[r],
            );

            let maps = scratch.maps[r].as_slice().expect("standard layout");
            let bias = &self.biases[r];
            let base = r * f_count;
            for f in 0..f_count {
                scratch.pool_raw[base + f] = T::neg_infinity();
            }
            for i in 0..rows {
                let row = &maps[i * f_count..(i + 1) * f_count];
                for f in 0..f_count {
                    if row[f] > scratch.pool_raw[base + f] {
                        scratch.pool_raw[base + f] = row[f];
                        scratch.argmax[base + f] = i;
                    }
                }
            }
            for f in 0..f_count {
                scratch.pool_raw[base + f] = scratch.pool_raw[base + f] + bias[f];
            }
        }

        let p = self.spec.pooled_len();
        match mask_rng {
            Some(rng) if dropout_rate > 0.0 => {
                let scale = T::from_f64(1.0 / (1.0 - dropout_rate));
                for i in 0..p {
                    scratch.mask_scale[i] = if rng.gen::<f64>() < dropout_rate { T::zero() } else { scale };
                }
            }
            _ => scratch.mask_scale[..p].fill(T::one()),
        }
        for i in 0..p {
            let activated = scratch.pool_raw[i].max(T::zero());
            scratch.fed[i] = activated * scratch.mask_scale[i];
        }

        let c = self.num_classes();
        let dense = self.dense.as_slice().expect("standard layout");
        for class in 0..c {
            let row = &dense[class * p..(class + 1) * p];
            let mut acc = T::zero();
            for i in 0..p {
                acc = acc + row[i] * scratch.fed[i];
            }
            scratch.probs[class] = acc;
        }
        ops::softmax_in_place(&mut scratch.probs);
        Ok(ops::cross_entropy(ndarray::ArrayView1::from(&scratch.probs), doc.label).to_f64())
    }

    /// Accumulates this example's gradients into `grad`. Must run directly
    /// after `forward` on the same scratch.
    fn backward(&self, doc: &CnnDoc, scratch: &mut Scratch<T>, grad: &mut GradBatch<T>, fine_tune: bool) {
        let p = self.spec.pooled_len();
        let c = self.num_classes();
        let y = self.embed_dim();
        let d = self.spec.input_width;

        let mut dscores: Vec<T> = scratch.probs.clone();
        dscores[doc.label] = dscores[doc.label] - T::one();

        {
            let gd = grad.dense.as_slice_mut().expect("standard layout");
            for class in 0..c {
                let g = dscores[class];
                if g == T::zero() {
                    continue;
                }
                let row = &mut gd[class * p..(class + 1) * p];
                for i in 0..p {
                    row[i] = row[i] + g * scratch.fed[i];
                }
            }
        }

        let dense = self.dense.as_slice().expect("standard layout");
        if fine_tune {
            scratch.dx.fill(T::zero());
        }
        let f_count = self.spec.filters_per_size;
        for (r, &h) in self.spec.region_sizes.iter().enumerate() {
            let base = r * f_count;
            let windows = scratch.windows[r].as_slice().expect("standard layout");
            let span = h * d;
            let filters = self.filters[r].as_slice().expect("standard layout");
            let gfilters = grad.filters[r].as_slice_mut().expect("standard layout");
            let dxs = scratch.dx.as_slice_mut().expect("standard layout");
            for f in 0..f_count {
                let unit = base + f;
                // Chain rule through dense, dropout mask, then the ReLU gate.
                let mut g = T::zero();
                for class in 0..c {
                    g = g + dense[class * p + unit] * dscores[class];
                }
                g = g * scratch.mask_scale[unit];
                if g == T::zero() || scratch.pool_raw[unit] <= T::zero() {
                    continue;
                }
                grad.biases[r][f] = grad.biases[r][f] + g;
                let am = scratch.argmax[unit];
                let window = &windows[am * span..(am + 1) * span];
                let grow = &mut gfilters[f * span..(f + 1) * span];
                for i in 0..span {
                    grow[i] = grow[i] + g * window[i];
                }
                if fine_tune {
                    let frow = &filters[f * span..(f + 1) * span];
                    let dst = &mut dxs[am * d..am * d + span];
                    for i in 0..span {
                        dst[i] = dst[i] + g * frow[i];
                    }
                }
            }
        }

        if fine_tune {
            let dxs = scratch.dx.as_slice().expect("standard layout");
            for (i, &w) in doc.indices.iter().enumerate() {
                if w == PAD_INDEX {
                    continue;
                }
                let src = &dxs[i * d..i * d + y];
                if src.iter().all(|&v| v == T::zero()) {
                    continue;
                }
                let row = grad
                    .embedding_rows
                    .entry(w)
                    .or_insert_with(|| vec![T::zero(); y]);
                for j in 0..y {
                    row[j] = row[j] + src[j];
                }
            }
        }
    }

    /// Mean-cross-entropy gradients over a batch at a given global step.
    /// Dropout masks derive from `(config.shuffle_seed, step, position)` so
    /// repeated calls replay identical masks.
    pub fn compute_gradients(
        &self,
        batch: &[CnnDoc],
        config: &TrainConfig,
        step: usize,
    ) -> Result<GradBatch<T>> {
        if batch.is_empty() {
            return Err(Error::Config("gradient batch is empty".into()));
        }
        for doc in batch {
            self.check_doc(doc)?;
        }
        let doc_len = batch[0].indices.len();
        if batch.iter().any(|d| d.indices.len() != doc_len) {
            return Err(Error::Config("all documents in a batch must share one length".into()));
        }
        let mut scratch = Scratch::new(self, doc_len);
        let mut grad = GradBatch::zeros_like(self);
        let mask_stage = seeding::stage_seed(config.shuffle_seed, "dropout");
        for (pos, doc) in batch.iter().enumerate() {
            let mut rng = seeding::item_rng(seeding::item_seed(mask_stage, step as u64), pos as u64);
            let loss = self.forward(doc, &mut scratch, config.dropout_rate, Some(&mut rng))?;
            grad.loss_sum += loss;
            if argmax_tie_lowest(&scratch.probs) == doc.label {
                grad.correct += 1;
            }
            grad.examples += 1;
            self.backward(doc, &mut scratch, &mut grad, config.fine_tune_embeddings);
        }
        Ok(grad.into_means())
    }

    /// Mean loss of a batch with exactly the masks `compute_gradients`
    /// would draw at `step`; the probe used by finite-difference checks.
    pub fn batch_loss(&self, batch: &[CnnDoc], config: &TrainConfig, step: usize) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Config("loss batch is empty".into()));
        }
        for doc in batch {
            self.check_doc(doc)?;
        }
        let mut scratch = Scratch::new(self, batch[0].indices.len());
        let mask_stage = seeding::stage_seed(config.shuffle_seed, "dropout");
        let mut total = 0.0;
        for (pos, doc) in batch.iter().enumerate() {
            let mut rng = seeding::item_rng(seeding::item_seed(mask_stage, step as u64), pos as u64);
            total += self.forward(doc, &mut scratch, config.dropout_rate, Some(&mut rng))?;
        }
        Ok(total / batch.len() as f64)
    }

    /// Inference-mode prediction: label (ties toward the lower class) and
    /// the probability vector.
    pub fn predict(&self, doc: &CnnDoc) -> Result<(usize, Vec<T>)> {
        self.check_doc(doc)?;
        let mut scratch = Scratch::new(self, doc.indices.len());
        self.forward::<rand_chacha::ChaCha8Rng>(doc, &mut scratch, 0.0, None)?;
        Ok((argmax_tie_lowest(&scratch.probs), scratch.probs.clone()))
    }

    /// Predicts many documents of equal length, reusing one scratch.
    pub fn predict_batch(&self, docs: &[CnnDoc]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(docs.len());
        let mut scratch: Option<Scratch<T>> = None;
        for doc in docs {
            self.check_doc(doc)?;
            let scratch = match &mut scratch {
                Some(sc) if sc.x.nrows() == doc.indices.len() => sc,
                slot => slot.insert(Scratch::new(self, doc.indices.len())),
            };
            self.forward::<rand_chacha::ChaCha8Rng>(doc, scratch, 0.0, None)?;
            out.push(argmax_tie_lowest(&scratch.probs));
        }
        Ok(out)
    }

    /// Inference on an already-fused input matrix (the shape produced by
    /// the fusion stage); bypasses the live embedding table.
    pub fn predict_input(&self, input: ArrayView2<T>) -> Result<(usize, Vec<T>)> {
        let (rows, width) = input.dim();
        if width != self.spec.input_width {
            return Err(Error::Config(format!(
                "input width {width} does not match model width {}",
                self.spec.input_width
            )));
        }
        let mut pooled = Vec::with_capacity(self.spec.pooled_len());
        for (r, &h) in self.spec.region_sizes.iter().enumerate() {
            if h > rows {
                return Err(Error::Config(format!("input of {rows} rows is shorter than region {h}")));
            }
            for f in 0..self.spec.filters_per_size {
                let filter = self.filters[r]
                    .row(f)
                    .into_shape_with_order((h, self.spec.input_width))
                    .expect("filter row reshapes to its window");
                let map = ops::conv1d_forward(input, filter, self.biases[r][f])?;
                let activated = ops::relu(map.view());
                let (top, _) = ops::max_pool_1(activated.view())?;
                pooled.push(top);
            }
        }
        let probs = ops::dense_softmax(ndarray::ArrayView1::from(&pooled), self.dense.view());
        let mut probs = probs.to_vec();
        let label = argmax_tie_lowest(&probs);
        probs.shrink_to_fit();
        Ok((label, probs))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "kind": "cnn-checkpoint",
            "scalar": T::TAG,
            "mode": if self.topic_table.is_some() { "topic-fused" } else { "word-only" },
            "region_sizes": self.spec.region_sizes,
            "filters_per_size": self.spec.filters_per_size,
            "input_width": self.spec.input_width,
            "num_classes": self.num_classes(),
            "vocab_rows": self.embedding.nrows(),
            "embed_dim": self.embed_dim(),
            "topics": self.topic_table.as_ref().map(|t| t.nrows()),
            "init_seed": self.init_seed,
        });
        let mut sections = Vec::new();
        let flat = |a: &Array2<T>| a.iter().copied().collect::<Vec<T>>();
        sections.push(binio::Section::from_scalars("embedding", &flat(&self.embedding)));
        if let Some(t) = &self.topic_table {
            sections.push(binio::Section::from_scalars("topic_table", &flat(t)));
        }
        for (r, f) in self.filters.iter().enumerate() {
            sections.push(binio::Section::from_scalars(&format!("filters_{r}"), &flat(f)));
        }
        for (r, b) in self.biases.iter().enumerate() {
            sections.push(binio::Section::from_scalars(&format!("biases_{r}"), &b.to_vec()));
        }
        sections.push(binio::Section::from_scalars("dense", &flat(&self.dense)));
        binio::write_container(path, &meta, &sections)
    }

    pub fn load(path: &Path) -> Result<CnnModel<T>> {
        let c = binio::read_container(path)?;
        let bad = |message: String| Error::ModelFormat {
            path: path.display().to_string(),
            message,
        };
        let scalar = c.meta["scalar"].as_str().unwrap_or_default();
        if scalar != T::TAG {
            return Err(bad(format!("checkpoint stores {scalar}, asked to load as {}", T::TAG)));
        }
        let region_sizes: Vec<usize> = c.meta["region_sizes"]
            .as_array()
            .map(|a| a.iter().filter_map(|v| v.as_u64()).map(|v| v as usize).collect())
            .unwrap_or_default();
        let filters_per_size = c.meta["filters_per_size"].as_u64().unwrap_or(0) as usize;
        let input_width = c.meta["input_width"].as_u64().unwrap_or(0) as usize;
        let num_classes = c.meta["num_classes"].as_u64().unwrap_or(0) as usize;
        let vocab_rows = c.meta["vocab_rows"].as_u64().unwrap_or(0) as usize;
        let embed_dim = c.meta["embed_dim"].as_u64().unwrap_or(0) as usize;
        let spec = ConvSpec { region_sizes, filters_per_size, input_width };
        spec.validate()?;

        let shape2 = |name: &str, dim: (usize, usize)| -> Result<Array2<T>> {
            let flat: Vec<T> = c.section_scalars(name)?;
            Array2::from_shape_vec(dim, flat)
                .map_err(|_| bad(format!("section {name} does not match its declared shape")))
        };
        let embedding = shape2("embedding", (vocab_rows, embed_dim))?;
        let topic_table = match c.meta["topics"].as_u64() {
            Some(k) => Some(shape2("topic_table", (k as usize, embed_dim))?),
            None => None,
        };
        let mut filters = Vec::new();
        let mut biases = Vec::new();
        for (r, &h) in spec.region_sizes.iter().enumerate() {
            filters.push(shape2(&format!("filters_{r}"), (filters_per_size, h * input_width))?);
            biases.push(Array1::from_vec(c.section_scalars(&format!("biases_{r}"))?));
        }
        let dense = shape2("dense", (num_classes, spec.pooled_len()))?;
        Ok(CnnModel {
            embedding,
            topic_table,
            spec,
            filters,
            biases,
            dense,
            init_seed: c.meta["init_seed"].as_u64().unwrap_or(0),
        })
    }
}

/// Trains in place: `epochs` passes of shuffled mini-batches. History holds
/// one row per epoch with mean loss and training accuracy (measured with
/// dropout active, as seen by the optimizer).
pub fn train<T: Scalar>(
    model: &mut CnnModel<T>,
    docs: &[CnnDoc],
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    if docs.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut history = TrainHistory::default();
    if config.epochs == 0 {
        return Ok(history);
    }

    let r = model.spec.region_sizes.len();
    let mut slot_sizes: Vec<usize> = model.filters.iter().map(|f| f.len()).collect();
    slot_sizes.extend(model.biases.iter().map(|b| b.len()));
    slot_sizes.push(model.dense.len());
    slot_sizes.push(model.embedding.len());
    let emb_slot = slot_sizes.len() - 1;
    let dense_slot = emb_slot - 1;
    let mut opt = Optimizer::<T>::new(config.optimizer, config.learning_rate, &slot_sizes);

    let shuffle_stage = seeding::stage_seed(config.shuffle_seed, "shuffle");
    let y = model.embed_dim();
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        let start = std::time::Instant::now();
        let mut rng = seeding::item_rng(shuffle_stage, epoch as u64);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            step += 1;
            let batch: Vec<CnnDoc> = chunk.iter().map(|&i| docs[i].clone()).collect();
            let grads = model
                .compute_gradients(&batch, config, step)
                .map_err(|e| e.in_stage("cnn-train"))?;
            if !grads.all_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: batch_idx,
                    message: "gradient contains NaN or infinity".into(),
                });
            }
            loss_sum += grads.loss_sum;
            correct += grads.correct;

            opt.begin_step();
            for (slot, f) in model.filters.iter_mut().enumerate() {
                opt.update_slot(slot, f.as_slice_mut().expect("standard layout"),
                                grads.filters[slot].as_slice().expect("standard layout"));
            }
            for (i, b) in model.biases.iter_mut().enumerate() {
                opt.update_slot(r + i, b.as_slice_mut().expect("standard layout"),
                                grads.biases[i].as_slice().expect("standard layout"));
            }
            opt.update_slot(dense_slot, model.dense.as_slice_mut().expect("standard layout"),
                            grads.dense.as_slice().expect("standard layout"));
            if config.fine_tune_embeddings {
                // Row 0 (padding) stays pinned at zero.
                opt.update_rows(
                    emb_slot,
                    model.embedding.as_slice_mut().expect("standard layout"),
                    y,
                    |row| grads.embedding_rows.get(&(row as u32)).map(|v| v.as_slice()),
                    1,
                );
            }
        }
        history.epochs.push(EpochStats {
            epoch,
            mean_loss: loss_sum / docs.len() as f64,
            train_accuracy: correct as f64 / docs.len() as f64,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(history)
}

/// Writes the per-epoch log: `epoch<TAB>loss<TAB>train_acc`.
pub fn save_training_log(history: &TrainHistory, path: &Path) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::from("epoch\tloss\ttrain_acc\n");
    for e in &history.epochs {
        writeln!(out, "{}\t{:.6}\t{:.6}", e.epoch, e.mean_loss, e.train_accuracy).expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn argmax_tie_lowest<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests;
