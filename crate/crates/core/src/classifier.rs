//! Binary-relevance classification: one fine-tuned encoder plus softmax head
//! per label, trained with periodic validation checkpointing, fused by argmax.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::autodiff::{
    adam_step, AdamConfig, Graph, NodeId, OptimizerState, ParamStore, Real, Tensor, TensorError,
};
use crate::corpus::{
    to_binary_task, undersample, BinaryTask, Corpus, CorpusError, Label, PerLabel,
};
use crate::encoder::{
    encoder_forward, pool, truncated_normal, Affine, EncoderConfig, EncoderError, EncoderWeights,
    INIT_STD,
};
use crate::rng::{derive_seed, mix64, rng_for};
use crate::tokenizer::{encode, EncodedInput, TokenizerConfig, Vocabulary};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifierError {
    #[error("training set for {0} is empty")]
    EmptyTrainingSet(Label),
    #[error("validation set for {0} is empty")]
    EmptyValidation(Label),
    #[error("non-finite loss while training {target} (epoch {epoch}, step {step}): {source}")]
    NonFiniteLoss {
        target: Label,
        epoch: usize,
        step: u64,
        source: TensorError,
    },
    #[error("invalid training config: {0}")]
    InvalidConfig(&'static str),
    #[error("incompatible model: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub const HEAD_DROPOUT: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Optimizer steps between validation passes; epoch ends always evaluate.
    pub eval_every: usize,
    pub seed: u64,
    pub undersample: bool,
    pub head_dropout: f64,
    /// Train only the heads on top of a fixed encoder.
    pub freeze_encoder: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            learning_rate: 1e-5,
            batch_size: 32,
            epochs: 2,
            eval_every: 50,
            seed: 0,
            undersample: true,
            head_dropout: HEAD_DROPOUT,
            freeze_encoder: false,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            weight_decay: adam.weight_decay,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.batch_size == 0 {
            return Err(ClassifierError::InvalidConfig(
                "batch_size must be at least 1",
            ));
        }
        if self.epochs == 0 {
            return Err(ClassifierError::InvalidConfig("epochs must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(ClassifierError::InvalidConfig(
                "eval_every must be at least 1",
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ClassifierError::InvalidConfig(
                "learning_rate must be positive",
            ));
        }
        if !(0.0..1.0).contains(&self.head_dropout) {
            return Err(ClassifierError::InvalidConfig(
                "head_dropout must lie in [0, 1)",
            ));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    /// Stable 64-bit digest of every field, recorded in checkpoints.
    pub fn digest(&self) -> u64 {
        [
            self.learning_rate.to_bits(),
            self.batch_size as u64,
            self.epochs as u64,
            self.eval_every as u64,
            self.seed,
            self.undersample as u64,
            self.head_dropout.to_bits(),
            self.freeze_encoder as u64,
            self.beta1.to_bits(),
            self.beta2.to_bits(),
            self.eps.to_bits(),
            self.weight_decay.to_bits(),
        ]
        .iter()
        .fold(0, |acc, &w| mix64(acc ^ w))
    }
}

/// Single-layer softmax head: dropout, then `hidden → 2` affine map.
/// Logit index 1 is the positive class.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryHead {
    pub dropout_p: f64,
    pub affine: Affine,
}

pub const HEAD_WEIGHT: &str = "head.weight";
pub const HEAD_BIAS: &str = "head.bias";

impl BinaryHead {
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        hidden: usize,
        dropout_p: f64,
        seed: u64,
    ) -> Result<Self, TensorError> {
        let mut rng = rng_for(seed, &[0x4EAD]);
        let weight = store.add(
            HEAD_WEIGHT,
            Tensor::new(
                [hidden, 2],
                truncated_normal(hidden * 2, INIT_STD, &mut rng),
            )?,
        )?;
        let bias = store.add(HEAD_BIAS, Tensor::zeros([2]))?;
        Ok(BinaryHead {
            dropout_p,
            affine: Affine { weight, bias },
        })
    }

    pub fn resolve<T: Real>(
        store: &ParamStore<T>,
        hidden: usize,
        dropout_p: f64,
    ) -> Result<Self, EncoderError> {
        let find = |name: &str, shape: &[usize]| {
            let id = store
                .find(name)
                .ok_or_else(|| EncoderError::MissingParam(name.into()))?;
            if store.value(id).shape() != shape {
                return Err(EncoderError::ParamShape {
                    name: name.into(),
                    expected: shape.to_vec(),
                    found: store.value(id).shape().to_vec(),
                });
            }
            Ok(id)
        };
        Ok(BinaryHead {
            dropout_p,
            affine: Affine {
                weight: find(HEAD_WEIGHT, &[hidden, 2])?,
                bias: find(HEAD_BIAS, &[2])?,
            },
        })
    }

    /// Record dropout → affine on `[batch, hidden]` pooled vectors; returns logits.
    pub fn logits<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        pooled: NodeId,
        training: bool,
    ) -> Result<NodeId, TensorError> {
        let x = g.dropout(pooled, self.dropout_p, training)?;
        let w = g.param(self.affine.weight);
        let b = g.param(self.affine.bias);
        g.affine(x, w, b)
    }
}

/// Class probabilities `[negative, positive]` for one pooled vector.
pub fn head_forward<T: Real>(
    pooled: &Tensor<T>,
    head: &BinaryHead,
    store: &ParamStore<T>,
    training: bool,
    seed: u64,
) -> Result<[T; 2], TensorError> {
    let hidden = store.value(head.affine.weight).shape()[0];
    if pooled.len() != hidden {
        return Err(TensorError::ShapeMismatch {
            op: "head_forward",
            left: pooled.shape().to_vec(),
            right: alloc::vec![hidden],
        });
    }
    let mut g = Graph::new(store, seed);
    let x = g.input(pooled.clone().reshape([1, hidden])?)?;
    let logits = head.logits(&mut g, x, training)?;
    let probs = g.softmax(logits)?;
    let p = g.value(probs).data();
    Ok([p[0], p[1]])
}

/// An encoder with one binary head in the same parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryModel<T> {
    pub encoder: EncoderWeights<T>,
    pub head: BinaryHead,
}

impl<T: Real> BinaryModel<T> {
    pub fn new(
        mut encoder: EncoderWeights<T>,
        head_dropout: f64,
        seed: u64,
    ) -> Result<Self, TensorError> {
        let hidden = encoder.config.hidden_size;
        let head = BinaryHead::register(&mut encoder.store, hidden, head_dropout, seed)?;
        Ok(BinaryModel { encoder, head })
    }

    pub fn from_store(
        cfg: &EncoderConfig,
        store: ParamStore<T>,
        head_dropout: f64,
    ) -> Result<Self, EncoderError> {
        let head = BinaryHead::resolve(&store, cfg.hidden_size, head_dropout)?;
        let encoder = EncoderWeights::from_store(cfg, store)?;
        Ok(BinaryModel { encoder, head })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.encoder.config
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.encoder.store
    }

    /// Record encoder → pool → head for a batch; returns `[batch, 2]` logits.
    pub fn logits(
        &self,
        g: &mut Graph<'_, T>,
        inputs: &[&EncodedInput],
        training: bool,
    ) -> Result<NodeId, EncoderError> {
        let mut pooled = Vec::with_capacity(inputs.len());
        for x in inputs {
            let trace = encoder_forward(g, &self.encoder.ids, &self.encoder.config, x, training)?;
            pooled.push(pool(g, &self.encoder.ids, trace.hidden)?);
        }
        let stacked = g.stack_rows(&pooled)?;
        Ok(self.head.logits(g, stacked, training)?)
    }

    /// Positive-class probability in evaluation mode.
    pub fn positive_probability(&self, x: &EncodedInput) -> Result<T, EncoderError> {
        let mut g = Graph::new(self.store(), 0);
        let logits = self.logits(&mut g, &[x], false)?;
        let probs = g.softmax(logits)?;
        Ok(g.value(probs).data()[1])
    }

    fn positive_probability_from_pooled(&self, pooled: &Tensor<T>) -> Result<T, TensorError> {
        head_forward(pooled, &self.head, self.store(), false, 0).map(|p| p[1])
    }
}

/// Vocabulary plus tokenizer settings: turns raw text into encoder input.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoder {
    pub vocab: Vocabulary,
    pub config: TokenizerConfig,
}

impl TextEncoder {
    pub fn new(vocab: Vocabulary, config: TokenizerConfig) -> Self {
        TextEncoder { vocab, config }
    }

    pub fn encode(&self, text: &str) -> EncodedInput {
        encode(text, &self.vocab, &self.config)
    }

    /// Check that every id this tokenizer can emit fits the encoder.
    pub fn check_compatible(&self, cfg: &EncoderConfig) -> Result<(), ClassifierError> {
        self.config
            .validate()
            .map_err(|e| ClassifierError::Incompatible(alloc::format!("{e}")))?;
        if self.vocab.len() > cfg.vocab_size {
            return Err(ClassifierError::Incompatible(alloc::format!(
                "vocabulary has {} tokens but the encoder embeds {}",
                self.vocab.len(),
                cfg.vocab_size
            )));
        }
        if self.config.max_len > cfg.max_positions {
            return Err(ClassifierError::Incompatible(alloc::format!(
                "sequence length {} exceeds encoder max_positions {}",
                self.config.max_len,
                cfg.max_positions
            )));
        }
        Ok(())
    }
}

/// One validation pass during training.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ValidationRecord {
    pub epoch: usize,
    pub step: u64,
    pub accuracy: f64,
}

/// The best snapshot of a binary training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: BinaryModel<T>,
    pub target: Label,
    pub val_accuracy: f64,
    pub step: u64,
    pub config_digest: u64,
    pub history: Vec<ValidationRecord>,
    pub train_size: usize,
    pub val_size: usize,
}

enum Features<T> {
    Encoded(Vec<EncodedInput>),
    Pooled(Vec<Tensor<T>>),
}

impl<T: Real> Features<T> {
    fn build(
        model: &BinaryModel<T>,
        text: &TextEncoder,
        task: &BinaryTask,
        frozen: bool,
    ) -> Result<Self, EncoderError> {
        let encoded: Vec<EncodedInput> = task
            .items
            .iter()
            .map(|(c, _)| text.encode(&c.text))
            .collect();
        if !frozen {
            return Ok(Features::Encoded(encoded));
        }
        let pooled = encoded
            .iter()
            .map(|x| model.encoder.embed(x))
            .collect::<Result<_, _>>()?;
        Ok(Features::Pooled(pooled))
    }

    fn logits(
        &self,
        model: &BinaryModel<T>,
        g: &mut Graph<'_, T>,
        batch: &[usize],
        training: bool,
    ) -> Result<NodeId, EncoderError> {
        match self {
            Features::Encoded(xs) => {
                let inputs: Vec<&EncodedInput> = batch.iter().map(|&i| &xs[i]).collect();
                model.logits(g, &inputs, training)
            }
            Features::Pooled(ps) => {
                let rows = batch
                    .iter()
                    .map(|&i| g.input(ps[i].clone()))
                    .collect::<Result<Vec<_>, _>>()?;
                let stacked = g.stack_rows(&rows)?;
                Ok(model.head.logits(g, stacked, training)?)
            }
        }
    }

    fn positive_probability(&self, model: &BinaryModel<T>, i: usize) -> Result<T, EncoderError> {
        match self {
            Features::Encoded(xs) => model.positive_probability(&xs[i]),
            Features::Pooled(ps) => Ok(model.positive_probability_from_pooled(&ps[i])?),
        }
    }
}

fn accuracy<T: Real>(
    model: &BinaryModel<T>,
    feats: &Features<T>,
    task: &BinaryTask,
) -> Result<f64, EncoderError> {
    let half = T::lit(0.5);
    let mut correct = 0usize;
    for (i, (_, positive)) in task.items.iter().enumerate() {
        let predicted = feats.positive_probability(model, i)? >= half;
        correct += usize::from(predicted == *positive);
    }
    Ok(correct as f64 / task.len() as f64)
}

/// Fine-tune a copy of `base` plus a fresh head on one binary task.
///
/// Undersampling, when enabled, touches only the training side. Validation
/// accuracy is measured every `eval_every` optimizer steps and at each epoch
/// end; the snapshot with the highest accuracy is returned, earliest on ties.
pub fn train_binary<T: Real>(
    task: &BinaryTask,
    val: &BinaryTask,
    cfg: &TrainConfig,
    base: &EncoderWeights<T>,
    text: &TextEncoder,
    seed: u64,
) -> Result<Checkpoint<T>, ClassifierError> {
    cfg.validate()?;
    text.check_compatible(&base.config)?;
    let target = task.target;
    let train = if cfg.undersample && !task.is_empty() {
        undersample(task, derive_seed(seed, &[0x0DE5]))?
    } else {
        task.clone()
    };
    if train.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet(target));
    }
    if val.is_empty() {
        return Err(ClassifierError::EmptyValidation(target));
    }

    let mut model = BinaryModel::new(base.clone(), cfg.head_dropout, derive_seed(seed, &[0x4EAD]))?;
    model.encoder.set_trainable(!cfg.freeze_encoder);
    let train_feats = Features::build(&model, text, &train, cfg.freeze_encoder)?;
    let val_feats = Features::build(&model, text, val, cfg.freeze_encoder)?;
    let labels: Vec<usize> = train.items.iter().map(|(_, p)| usize::from(*p)).collect();

    let mut opt = OptimizerState::new(cfg.adam(), model.store());
    let mut history = Vec::new();
    let mut best: Option<(f64, u64, ParamStore<T>)> = None;
    let mut step = 0u64;
    let mut last_eval = None;

    let mut evaluate = |model: &BinaryModel<T>,
                        epoch: usize,
                        step: u64,
                        last_eval: &mut Option<u64>|
     -> Result<(), ClassifierError> {
        if *last_eval == Some(step) {
            return Ok(());
        }
        *last_eval = Some(step);
        let acc = accuracy(model, &val_feats, val)?;
        history.push(ValidationRecord {
            epoch,
            step,
            accuracy: acc,
        });
        if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
            best = Some((acc, step, model.store().clone()));
        }
        Ok(())
    };

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng_for(seed, &[0x5EED, epoch as u64]));
        for batch in order.chunks(cfg.batch_size) {
            let batch_labels: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let grads = {
                let mut g = Graph::new(model.store(), derive_seed(seed, &[0xD0, step]));
                let wrap = |source: TensorError| ClassifierError::NonFiniteLoss {
                    target,
                    epoch,
                    step,
                    source,
                };
                let logits =
                    train_feats
                        .logits(&model, &mut g, batch, true)
                        .map_err(|e| match e {
                            EncoderError::Tensor(t @ TensorError::NonFinite(_)) => wrap(t),
                            other => other.into(),
                        })?;
                let loss = g.cross_entropy(logits, &batch_labels).map_err(wrap)?;
                g.backward(loss)?
            };
            model.encoder.store.accumulate(&grads);
            adam_step(&mut model.encoder.store, &mut opt)?;
            step += 1;
            if step.is_multiple_of(cfg.eval_every as u64) {
                evaluate(&model, epoch, step, &mut last_eval)?;
            }
        }
        evaluate(&model, epoch, step, &mut last_eval)?;
    }

    let (val_accuracy, best_step, store) = best.expect("at least one evaluation per epoch");
    let mut model = BinaryModel::from_store(&base.config, store, cfg.head_dropout)?;
    model.encoder.set_trainable(true);
    Ok(Checkpoint {
        model,
        target,
        val_accuracy,
        step: best_step,
        config_digest: cfg.digest(),
        history,
        train_size: train.len(),
        val_size: val.len(),
    })
}

/// Argmax over per-label positive probabilities. Ties go to the label that
/// comes first in canonical order.
pub fn fuse(probs: &PerLabel<f64>) -> Label {
    let mut best = Label::ProblemReport;
    for label in Label::ALL {
        if probs[label] > probs[best] {
            best = label;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Prediction {
    /// Positive-class probability of each binary model.
    pub probs: PerLabel<f64>,
    pub label: Label,
}

impl Prediction {
    pub fn from_probs(probs: PerLabel<f64>) -> Self {
        Prediction {
            label: fuse(&probs),
            probs,
        }
    }
}

/// Anything that maps a comment to per-label probabilities and a label.
pub trait CommentClassifier {
    fn predict(&self, text: &str) -> Result<Prediction, ClassifierError>;

    fn predict_batch(&self, texts: &[&str]) -> Result<Vec<Prediction>, ClassifierError> {
        texts.iter().map(|t| self.predict(t)).collect()
    }
}

/// Predicts one label for everything, with certainty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantClassifier(pub Label);

impl CommentClassifier for ConstantClassifier {
    fn predict(&self, _text: &str) -> Result<Prediction, ClassifierError> {
        Ok(Prediction::from_probs(PerLabel::from_fn(|l| {
            if l == self.0 {
                1.0
            } else {
                0.0
            }
        })))
    }
}

/// Three binary models sharing one tokenizer, fused by argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct TriClassifier<T> {
    pub models: PerLabel<BinaryModel<T>>,
    pub text: TextEncoder,
}

impl<T: Real> TriClassifier<T> {
    pub fn new(
        models: PerLabel<BinaryModel<T>>,
        text: TextEncoder,
    ) -> Result<Self, ClassifierError> {
        for (_, m) in models.iter() {
            text.check_compatible(m.config())?;
        }
        Ok(TriClassifier { models, text })
    }

    pub fn predict_encoded(&self, x: &EncodedInput) -> Result<Prediction, ClassifierError> {
        let mut probs = PerLabel([0.0; 3]);
        for (label, model) in self.models.iter() {
            probs[label] = model.positive_probability(x)?.as_f64();
        }
        Ok(Prediction::from_probs(probs))
    }
}

impl<T: Real> CommentClassifier for TriClassifier<T> {
    fn predict(&self, text: &str) -> Result<Prediction, ClassifierError> {
        self.predict_encoded(&self.text.encode(text))
    }
}

/// Result of [`train_tri`]: the fused classifier plus per-label run details.
#[derive(Debug, Clone, PartialEq)]
pub struct TriTraining<T> {
    pub classifier: TriClassifier<T>,
    pub checkpoints: PerLabel<Checkpoint<T>>,
}

/// Train the three binary-relevance models. Label `i` (canonical order) uses
/// seed `cfg.seed + i`.
pub fn train_tri<T: Real>(
    train: &Corpus,
    val: &Corpus,
    cfg: &TrainConfig,
    base: &EncoderWeights<T>,
    text: &TextEncoder,
) -> Result<TriTraining<T>, ClassifierError> {
    train_tri_with(cfg, |label| {
        train_binary(
            &to_binary_task(train, label),
            &to_binary_task(val, label),
            cfg,
            base,
            text,
            cfg.seed.wrapping_add(label.index() as u64),
        )
    })
    .and_then(|checkpoints| {
        let models = PerLabel::from_fn(|l| checkpoints[l].model.clone());
        Ok(TriTraining {
            classifier: TriClassifier::new(models, text.clone())?,
            checkpoints,
        })
    })
}

fn train_tri_with<T: Real>(
    cfg: &TrainConfig,
    mut run: impl FnMut(Label) -> Result<Checkpoint<T>, ClassifierError>,
) -> Result<PerLabel<Checkpoint<T>>, ClassifierError> {
    cfg.validate()?;
    let [a, b, c] = Label::ALL;
    Ok(PerLabel([run(a)?, run(b)?, run(c)?]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UserComment;
    use crate::encoder::{init_encoder, Preset};
    use crate::tokenizer::{CLS, PAD, SEP, UNK};
    use alloc::format;

    #[test]
    fn defaults_match_the_reference_setup() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate, 1e-5);
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.epochs, 2);
        assert_eq!(c.head_dropout, 0.3);
        assert_eq!(c.eval_every, 50);
        c.validate().unwrap();
    }

    #[test]
    fn head_forward_examples() {
        let mut store = ParamStore::<f64>::new();
        let head = BinaryHead::register(&mut store, 4, 0.3, 1).unwrap();
        for id in [head.affine.weight, head.affine.bias] {
            store
                .get_mut(id)
                .value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 0.0);
        }
        let pooled = Tensor::from_f64([4], &[0.3, -0.2, 0.9, 0.1]).unwrap();
        assert_eq!(
            head_forward(&pooled, &head, &store, false, 0).unwrap(),
            [0.5, 0.5]
        );

        // Logits (2, -2) through a bias-only head.
        store
            .get_mut(head.affine.bias)
            .value
            .data_mut()
            .copy_from_slice(&[2.0, -2.0]);
        let p = head_forward(&pooled, &head, &store, false, 0).unwrap();
        let e2 = libm::exp(2.0);
        let expected = e2 / (e2 + 1.0 / e2);
        assert!((p[0] - expected).abs() < 1e-12);
        assert!((p[0] - 0.982).abs() < 1e-3);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);

        let wrong = Tensor::from_f64([3], &[0.0; 3]).unwrap();
        assert!(head_forward(&wrong, &head, &store, false, 0).is_err());
    }

    #[test]
    fn head_eval_is_deterministic_training_is_seeded() {
        let mut store = ParamStore::<f32>::new();
        let head = BinaryHead::register(&mut store, 8, 0.3, 2).unwrap();
        let pooled = Tensor::full([8], 0.5f32);
        let a = head_forward(&pooled, &head, &store, false, 1).unwrap();
        assert_eq!(a, head_forward(&pooled, &head, &store, false, 2).unwrap());
        let t = head_forward(&pooled, &head, &store, true, 7).unwrap();
        assert_eq!(t, head_forward(&pooled, &head, &store, true, 7).unwrap());
    }

    #[test]
    fn fusion_rule() {
        assert_eq!(fuse(&PerLabel([0.9, 0.2, 0.3])), Label::ProblemReport);
        assert_eq!(fuse(&PerLabel([0.5, 0.5, 0.4])), Label::ProblemReport);
        assert_eq!(fuse(&PerLabel([0.1, 0.5, 0.5])), Label::FeatureRequest);
        assert_eq!(fuse(&PerLabel([0.1, 0.2, 0.95])), Label::Irrelevant);
    }

    #[test]
    fn config_validation() {
        for bad in [
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                epochs: 0,
                ..Default::default()
            },
            TrainConfig {
                eval_every: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                bad.validate(),
                Err(ClassifierError::InvalidConfig(_))
            ));
        }
        assert_ne!(
            TrainConfig::default().digest(),
            TrainConfig {
                seed: 1,
                ..Default::default()
            }
            .digest()
        );
    }

    fn tiny_setup() -> (EncoderWeights<f32>, TextEncoder) {
        let words = [
            "crash", "bug", "add", "please", "love", "great", "app", "the",
        ];
        let vocab = Vocabulary::from_tokens([PAD, UNK, CLS, SEP].into_iter().chain(words)).unwrap();
        let mut cfg = Preset::Toy.config();
        cfg.vocab_size = vocab.len();
        let text = TextEncoder::new(
            vocab,
            TokenizerConfig {
                max_len: 8,
                ..Default::default()
            },
        );
        (init_encoder(&cfg, 1).unwrap(), text)
    }

    fn tiny_corpus(n: usize) -> Corpus {
        let texts = [
            (Label::ProblemReport, "crash bug the app"),
            (Label::FeatureRequest, "please add the app"),
            (Label::Irrelevant, "love great app"),
        ];
        let comments = (0..n)
            .map(|i| {
                let (l, t) = texts[i % 3];
                UserComment::new(format!("c{i}"), t, "en", l)
            })
            .collect();
        Corpus::new("tiny", "en", comments).unwrap()
    }

    #[test]
    fn best_checkpoint_dominates_history_and_runs_repeat() {
        let (base, text) = tiny_setup();
        let corpus = tiny_corpus(12);
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            batch_size: 4,
            epochs: 3,
            eval_every: 2,
            ..Default::default()
        };
        let task = to_binary_task(&corpus, Label::ProblemReport);
        let a = train_binary(&task, &task, &cfg, &base, &text, 3).unwrap();
        assert!(a.history.iter().all(|r| a.val_accuracy >= r.accuracy));
        let first_best = a
            .history
            .iter()
            .find(|r| r.accuracy == a.val_accuracy)
            .unwrap();
        assert_eq!(first_best.step, a.step);
        // 8 undersampled items, batches of 4 → 2 steps/epoch, evaluations at
        // steps 2, 4, 6 (each also an epoch end).
        assert_eq!(a.train_size, 8);
        assert_eq!(
            a.history.iter().map(|r| r.step).collect::<Vec<_>>(),
            [2, 4, 6]
        );
        let b = train_binary(&task, &task, &cfg, &base, &text, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_sets_are_rejected() {
        let (base, text) = tiny_setup();
        let corpus = tiny_corpus(6);
        let task = to_binary_task(&corpus, Label::Irrelevant);
        let empty = BinaryTask {
            target: Label::Irrelevant,
            items: Vec::new(),
        };
        let cfg = TrainConfig::default();
        assert_eq!(
            train_binary(&empty, &task, &cfg, &base, &text, 0),
            Err(ClassifierError::EmptyTrainingSet(Label::Irrelevant))
        );
        assert_eq!(
            train_binary(&task, &empty, &cfg, &base, &text, 0),
            Err(ClassifierError::EmptyValidation(Label::Irrelevant))
        );
    }

    #[test]
    fn train_tri_returns_one_checkpoint_per_label() {
        let (base, text) = tiny_setup();
        let corpus = tiny_corpus(9);
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            batch_size: 3,
            epochs: 1,
            freeze_encoder: true,
            undersample: false,
            ..Default::default()
        };
        let out = train_tri(&corpus, &corpus, &cfg, &base, &text).unwrap();
        for (label, ck) in out.checkpoints.iter() {
            assert_eq!(ck.target, label);
            assert_eq!(ck.train_size, 9);
            assert_eq!(ck.val_size, 9);
        }
        let p = out.classifier.predict("crash bug").unwrap();
        assert_eq!(p.label, fuse(&p.probs));
        assert!(p.probs.0.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(
            out.classifier.predict("").unwrap(),
            out.classifier.predict("").unwrap()
        );
    }

    #[test]
    fn incompatible_tokenizer_is_rejected() {
        let (base, mut text) = tiny_setup();
        text.config.max_len = 257;
        let corpus = tiny_corpus(6);
        let task = to_binary_task(&corpus, Label::Irrelevant);
        assert!(matches!(
            train_binary(&task, &task, &TrainConfig::default(), &base, &text, 0),
            Err(ClassifierError::Incompatible(_))
        ));
    }
}
