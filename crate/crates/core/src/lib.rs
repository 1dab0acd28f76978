//! Core algorithms for mining problem reports and feature requests from user
//! comments (app reviews, tweets).
//!
//! The crate is `no_std` and only needs an allocator. Everything that touches
//! files, processes or the command line lives in the `feedback-miner` crate.
//!
//! Pipeline:
//! - [`corpus`]: labeled comments, stratified splits, folds, binary-relevance
//!   views and random undersampling.
//! - [`tokenizer`]: mention normalization, WordPiece and fixed-length framing.
//! - [`autodiff`]: dense tensors, a reverse-mode tape and an AdamW optimizer.
//! - [`encoder`]: a BERT-style transformer encoder with CLS pooling.
//! - [`classifier`]: per-label binary heads, checkpointed training and argmax
//!   fusion.
//! - [`hyperopt`]: cross-validated TPE search over the learning rate.
//! - [`metrics`]: confusion counts, per-class and macro reports.
#![no_std]

extern crate alloc;

pub mod autodiff;
pub mod classifier;
pub mod corpus;
pub mod encoder;
pub mod hyperopt;
pub mod metrics;
pub mod rng;
pub mod tokenizer;

pub use classifier::{
    BinaryModel, CommentClassifier, Prediction, TextEncoder, TrainConfig, TriClassifier,
};
pub use corpus::{BinaryTask, Corpus, FoldAssignment, Label, PerLabel, UserComment};
pub use encoder::{EncoderConfig, EncoderWeights, Preset};
pub use hyperopt::{SearchSpace, TpeConfig, Trial};
pub use metrics::{ClassReport, ConfusionCounts, Evaluation, EvaluationReport, ScoringMode};
pub use tokenizer::{EncodedInput, TokenizerConfig, Vocabulary};
