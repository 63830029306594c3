//! Topic-augmented convolutional text classification.
//!
//! The pipeline: tokenize and encode a labeled corpus, fit an LDA topic model
//! by collapsed Gibbs sampling, turn each topic into a dense vector (mean of
//! its top keyword embeddings), concatenate that vector onto every word
//! embedding row, and classify the widened input with a one-layer 1-D CNN.
//! Classic baselines (multinomial naive Bayes, bag-of-words SVM, NBSVM) and
//! an experiment harness with a CLI round out the toolkit.
//!
//! Dense numeric code is generic over [`Scalar`]; counting code (corpus,
//! topic model, sparse baselines) stays on concrete types.

pub mod baselines;
pub mod binio;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod neural;
pub mod scalar;
pub mod seeding;
pub mod topic_model;

pub use error::{Error, Result};
pub use scalar::Scalar;

// Concrete entry points into the Scalar-generic dense core. The harness
// and CLI pin f64 so artifacts reproduce bitwise across runs; f32 halves
// memory for embedded callers that can live with noisier sums.
pub type Embedding32 = embedding::EmbeddingMatrix<f32>;
pub type Embedding64 = embedding::EmbeddingMatrix<f64>;
pub type TopicVectors32 = embedding::TopicVectorTable<f32>;
pub type TopicVectors64 = embedding::TopicVectorTable<f64>;
pub type Cnn32 = neural::CnnModel<f32>;
pub type Cnn64 = neural::CnnModel<f64>;
