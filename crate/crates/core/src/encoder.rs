//! BERT-style transformer encoder with CLS pooling.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::str::FromStr;

use rand_distr::StandardNormal;

use crate::autodiff::{Graph, NodeId, ParamId, ParamStore, Real, Tensor, TensorError};
use crate::rng::rng_for;
use crate::tokenizer::EncodedInput;

/// Additive bias applied to attention scores of padded key positions.
pub const MASK_BIAS: f64 = -1e9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EncoderError {
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("token id {id} outside vocabulary of size {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },
    #[error("sequence length {len} exceeds max_positions {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("malformed input: {0}")]
    MalformedInput(&'static str),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("parameter `{name}` has shape {found:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub num_heads: usize,
    pub ffn_size: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub type_vocab_size: usize,
    /// Dropout inside the encoder (embeddings and sublayer outputs).
    pub dropout_p: f64,
    pub layer_norm_eps: f64,
    pub cased: bool,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: &str| Err(EncoderError::InvalidConfig(m.to_string()));
        if self.num_layers == 0 {
            return bad("num_layers must be positive");
        }
        if self.num_heads == 0
            || self.hidden_size == 0
            || !self.hidden_size.is_multiple_of(self.num_heads)
        {
            return bad("hidden_size must be a positive multiple of num_heads");
        }
        if self.ffn_size == 0
            || self.vocab_size == 0
            || self.max_positions == 0
            || self.type_vocab_size == 0
        {
            return bad("sizes must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout_p must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads
    }

    /// Closed-form number of scalars in the encoder (pooler included).
    pub fn parameter_count(&self) -> usize {
        let (h, f) = (self.hidden_size, self.ffn_size);
        let embeddings = (self.vocab_size + self.max_positions + self.type_vocab_size) * h + 2 * h;
        let layer = 4 * (h * h + h) + 2 * h + (h * f + f) + (f * h + h) + 2 * h;
        embeddings + self.num_layers * layer + h * h + h
    }
}

/// Named architecture presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    EnglishBase,
    ItalianBase,
    MultilingualBase,
    Toy,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::EnglishBase,
        Preset::ItalianBase,
        Preset::MultilingualBase,
        Preset::Toy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::EnglishBase => "english-base",
            Preset::ItalianBase => "italian-base",
            Preset::MultilingualBase => "multilingual-base",
            Preset::Toy => "toy",
        }
    }

    pub fn config(self) -> EncoderConfig {
        let base = |vocab_size, cased| EncoderConfig {
            num_layers: 12,
            hidden_size: 768,
            num_heads: 12,
            ffn_size: 3072,
            vocab_size,
            max_positions: 512,
            type_vocab_size: 2,
            dropout_p: 0.1,
            layer_norm_eps: 1e-12,
            cased,
        };
        match self {
            // bert-base-uncased
            Preset::EnglishBase => base(30_522, false),
            // dbmdz/bert-base-italian-cased
            Preset::ItalianBase => base(31_102, true),
            // bert-base-multilingual-uncased
            Preset::MultilingualBase => base(105_879, false),
            Preset::Toy => EncoderConfig {
                num_layers: 2,
                hidden_size: 32,
                num_heads: 2,
                ffn_size: 64,
                vocab_size: 100,
                max_positions: 256,
                type_vocab_size: 2,
                dropout_p: 0.1,
                layer_norm_eps: 1e-12,
                cased: false,
            },
        }
    }
}

impl FromStr for Preset {
    type Err = EncoderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| EncoderError::UnknownPreset(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norm {
    pub gain: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerIds {
    pub query: Affine,
    pub key: Affine,
    pub value: Affine,
    pub output: Affine,
    pub attention_norm: Norm,
    pub ffn_inner: Affine,
    pub ffn_output: Affine,
    pub ffn_norm: Norm,
}

/// Handles to the encoder's parameters inside a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderIds {
    pub word: ParamId,
    pub position: ParamId,
    pub segment: ParamId,
    pub embedding_norm: Norm,
    pub layers: Vec<LayerIds>,
    pub pooler: Affine,
}

enum Init {
    Normal,
    Zeros,
    Ones,
}

/// Every encoder parameter name with its shape and initializer, in
/// registration order.
fn manifest(cfg: &EncoderConfig) -> Vec<(String, Vec<usize>, Init)> {
    let (h, f) = (cfg.hidden_size, cfg.ffn_size);
    let mut m = Vec::new();
    let affine = |m: &mut Vec<(String, Vec<usize>, Init)>, name: String, i: usize, o: usize| {
        m.push((format!("{name}.weight"), alloc::vec![i, o], Init::Normal));
        m.push((format!("{name}.bias"), alloc::vec![o], Init::Zeros));
    };
    let norm = |m: &mut Vec<(String, Vec<usize>, Init)>, name: String| {
        m.push((format!("{name}.gain"), alloc::vec![h], Init::Ones));
        m.push((format!("{name}.bias"), alloc::vec![h], Init::Zeros));
    };
    m.push((
        "embeddings.word.weight".into(),
        alloc::vec![cfg.vocab_size, h],
        Init::Normal,
    ));
    m.push((
        "embeddings.position.weight".into(),
        alloc::vec![cfg.max_positions, h],
        Init::Normal,
    ));
    m.push((
        "embeddings.segment.weight".into(),
        alloc::vec![cfg.type_vocab_size, h],
        Init::Normal,
    ));
    norm(&mut m, "embeddings.norm".into());
    for l in 0..cfg.num_layers {
        for part in ["query", "key", "value", "output"] {
            affine(&mut m, format!("layer.{l}.attention.{part}"), h, h);
        }
        norm(&mut m, format!("layer.{l}.attention.norm"));
        affine(&mut m, format!("layer.{l}.ffn.inner"), h, f);
        affine(&mut m, format!("layer.{l}.ffn.output"), f, h);
        norm(&mut m, format!("layer.{l}.ffn.norm"));
    }
    affine(&mut m, "pooler".into(), h, h);
    m
}

/// Truncated normal (two standard deviations), scaled by `std`.
pub(crate) fn truncated_normal<T: Real>(n: usize, std: f64, rng: &mut impl rand::Rng) -> Vec<T> {
    (0..n)
        .map(|_| loop {
            let z: f64 = rng.sample(StandardNormal);
            if z.abs() <= 2.0 {
                break T::lit(z * std);
            }
        })
        .collect()
}

pub const INIT_STD: f64 = 0.02;

impl EncoderIds {
    fn resolve<T: Real>(store: &ParamStore<T>, cfg: &EncoderConfig) -> Result<Self, EncoderError> {
        let find = |name: &str| -> Result<ParamId, EncoderError> {
            store
                .find(name)
                .ok_or_else(|| EncoderError::MissingParam(name.to_string()))
        };
        let affine = |name: &str| -> Result<Affine, EncoderError> {
            Ok(Affine {
                weight: find(&format!("{name}.weight"))?,
                bias: find(&format!("{name}.bias"))?,
            })
        };
        let norm = |name: &str| -> Result<Norm, EncoderError> {
            Ok(Norm {
                gain: find(&format!("{name}.gain"))?,
                bias: find(&format!("{name}.bias"))?,
            })
        };
        for (name, shape, _) in manifest(cfg) {
            let id = find(&name)?;
            let found = store.value(id).shape();
            if found != shape.as_slice() {
                return Err(EncoderError::ParamShape {
                    name,
                    expected: shape,
                    found: found.to_vec(),
                });
            }
        }
        let layers = (0..cfg.num_layers)
            .map(|l| {
                Ok(LayerIds {
                    query: affine(&format!("layer.{l}.attention.query"))?,
                    key: affine(&format!("layer.{l}.attention.key"))?,
                    value: affine(&format!("layer.{l}.attention.value"))?,
                    output: affine(&format!("layer.{l}.attention.output"))?,
                    attention_norm: norm(&format!("layer.{l}.attention.norm"))?,
                    ffn_inner: affine(&format!("layer.{l}.ffn.inner"))?,
                    ffn_output: affine(&format!("layer.{l}.ffn.output"))?,
                    ffn_norm: norm(&format!("layer.{l}.ffn.norm"))?,
                })
            })
            .collect::<Result<_, EncoderError>>()?;
        Ok(EncoderIds {
            word: find("embeddings.word.weight")?,
            position: find("embeddings.position.weight")?,
            segment: find("embeddings.segment.weight")?,
            embedding_norm: norm("embeddings.norm")?,
            layers,
            pooler: affine("pooler")?,
        })
    }

    /// All parameter ids owned by the encoder.
    pub fn all(&self) -> Vec<ParamId> {
        let mut v = alloc::vec![
            self.word,
            self.position,
            self.segment,
            self.embedding_norm.gain,
            self.embedding_norm.bias
        ];
        for l in &self.layers {
            for a in [l.query, l.key, l.value, l.output, l.ffn_inner, l.ffn_output] {
                v.extend([a.weight, a.bias]);
            }
            for n in [l.attention_norm, l.ffn_norm] {
                v.extend([n.gain, n.bias]);
            }
        }
        v.extend([self.pooler.weight, self.pooler.bias]);
        v
    }
}

/// Node handles produced by a recorded forward pass.
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    /// `[L, hidden]` final hidden states.
    pub hidden: NodeId,
    /// Attention probabilities `[L, L]`, layer-major then head.
    pub attention: Vec<NodeId>,
}

fn check_input(cfg: &EncoderConfig, x: &EncodedInput) -> Result<(), EncoderError> {
    let len = x.ids.len();
    if x.mask.len() != len || x.segments.len() != len || len == 0 {
        return Err(EncoderError::MalformedInput(
            "ids, mask and segments must share a positive length",
        ));
    }
    if len > cfg.max_positions {
        return Err(EncoderError::SequenceTooLong {
            len,
            max: cfg.max_positions,
        });
    }
    if let Some(&id) = x.ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(EncoderError::IdOutOfRange {
            id,
            vocab_size: cfg.vocab_size,
        });
    }
    if x.segments
        .iter()
        .any(|&s| s as usize >= cfg.type_vocab_size)
    {
        return Err(EncoderError::MalformedInput("segment id out of range"));
    }
    Ok(())
}

/// Record the encoder forward pass for `x` onto `g`.
pub fn encoder_forward<T: Real>(
    g: &mut Graph<'_, T>,
    ids: &EncoderIds,
    cfg: &EncoderConfig,
    x: &EncodedInput,
    training: bool,
) -> Result<EncoderTrace, EncoderError> {
    check_input(cfg, x)?;
    let len = x.ids.len();
    let eps = T::lit(cfg.layer_norm_eps);
    let p = cfg.dropout_p;

    let word = g.param(ids.word);
    let position = g.param(ids.position);
    let segment = g.param(ids.segment);
    let positions: Vec<u32> = (0..len as u32).collect();
    let e = g.embedding(word, &x.ids)?;
    let pe = g.embedding(position, &positions)?;
    let se = g.embedding(segment, &x.segments)?;
    let sum = g.add(e, pe)?;
    let sum = g.add(sum, se)?;
    let mut h = norm(g, sum, ids.embedding_norm, eps)?;
    h = g.dropout(h, p, training)?;

    let mask_bias = Tensor::new(
        [len],
        x.mask
            .iter()
            .map(|&m| if m == 1 { T::zero() } else { T::lit(MASK_BIAS) })
            .collect(),
    )?;
    let mask_bias = g.input(mask_bias)?;
    let head_dim = cfg.head_dim();
    let scale = T::lit(1.0 / libm::sqrt(head_dim as f64));
    let mut attention = Vec::with_capacity(cfg.num_layers * cfg.num_heads);

    for layer in &ids.layers {
        let q = affine(g, h, layer.query)?;
        let k = affine(g, h, layer.key)?;
        let v = affine(g, h, layer.value)?;
        let mut contexts = Vec::with_capacity(cfg.num_heads);
        for head in 0..cfg.num_heads {
            let start = head * head_dim;
            let qh = g.slice_cols(q, start, head_dim)?;
            let kh = g.slice_cols(k, start, head_dim)?;
            let vh = g.slice_cols(v, start, head_dim)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale)?;
            let scores = g.add_row(scores, mask_bias)?;
            let probs = g.softmax(scores)?;
            attention.push(probs);
            contexts.push(g.matmul(probs, vh)?);
        }
        let ctx = g.concat_cols(&contexts)?;
        let attn = affine(g, ctx, layer.output)?;
        let attn = g.dropout(attn, p, training)?;
        let res = g.add(h, attn)?;
        h = norm(g, res, layer.attention_norm, eps)?;

        let inner = affine(g, h, layer.ffn_inner)?;
        let inner = g.gelu(inner)?;
        let out = affine(g, inner, layer.ffn_output)?;
        let out = g.dropout(out, p, training)?;
        let res = g.add(h, out)?;
        h = norm(g, res, layer.ffn_norm, eps)?;
    }
    Ok(EncoderTrace {
        hidden: h,
        attention,
    })
}

/// `tanh(hidden[0] · W + b)`: the pooled CLS vector as a `[1, hidden]` node.
pub fn pool<T: Real>(
    g: &mut Graph<'_, T>,
    ids: &EncoderIds,
    hidden: NodeId,
) -> Result<NodeId, EncoderError> {
    let cls = g.select_row(hidden, 0)?;
    let z = affine(g, cls, ids.pooler)?;
    Ok(g.tanh(z)?)
}

fn affine<T: Real>(g: &mut Graph<'_, T>, x: NodeId, a: Affine) -> Result<NodeId, TensorError> {
    let w = g.param(a.weight);
    let b = g.param(a.bias);
    g.affine(x, w, b)
}

fn norm<T: Real>(g: &mut Graph<'_, T>, x: NodeId, n: Norm, eps: T) -> Result<NodeId, TensorError> {
    let gain = g.param(n.gain);
    let bias = g.param(n.bias);
    g.layer_norm(x, gain, bias, eps)
}

/// Encoder parameters together with their configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights<T> {
    pub config: EncoderConfig,
    pub store: ParamStore<T>,
    pub ids: EncoderIds,
}

/// Fresh weights: truncated normal (std 0.02) matrices, zero biases, unit
/// layer-norm gains.
pub fn init_encoder<T: Real>(
    cfg: &EncoderConfig,
    seed: u64,
) -> Result<EncoderWeights<T>, EncoderError> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    let mut rng = rng_for(seed, &[0xE4C0]);
    for (name, shape, init) in manifest(cfg) {
        let n = shape.iter().product();
        let data = match init {
            Init::Normal => truncated_normal(n, INIT_STD, &mut rng),
            Init::Zeros => alloc::vec![T::zero(); n],
            Init::Ones => alloc::vec![T::one(); n],
        };
        store.add(name, Tensor::new(shape, data)?)?;
    }
    let ids = EncoderIds::resolve(&store, cfg)?;
    Ok(EncoderWeights {
        config: cfg.clone(),
        store,
        ids,
    })
}

impl<T: Real> EncoderWeights<T> {
    /// Wrap an existing store (for example one read from a checkpoint).
    /// Extra parameters are allowed; every encoder parameter must be present
    /// with the shape `cfg` implies.
    pub fn from_store(cfg: &EncoderConfig, store: ParamStore<T>) -> Result<Self, EncoderError> {
        cfg.validate()?;
        let ids = EncoderIds::resolve(&store, cfg)?;
        Ok(EncoderWeights {
            config: cfg.clone(),
            store,
            ids,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.ids
            .all()
            .iter()
            .map(|&id| self.store.value(id).len())
            .sum()
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        for id in self.ids.all() {
            self.store.set_trainable(id, trainable);
        }
    }

    /// Hidden states `[L, hidden]` for one input.
    pub fn forward(
        &self,
        x: &EncodedInput,
        training: bool,
        seed: u64,
    ) -> Result<Tensor<T>, EncoderError> {
        let mut g = Graph::new(&self.store, seed);
        let trace = encoder_forward(&mut g, &self.ids, &self.config, x, training)?;
        Ok(g.value(trace.hidden).clone())
    }

    /// Attention probability matrices (layer-major, then head).
    pub fn attention(&self, x: &EncodedInput) -> Result<Vec<Tensor<T>>, EncoderError> {
        let mut g = Graph::new(&self.store, 0);
        let trace = encoder_forward(&mut g, &self.ids, &self.config, x, false)?;
        Ok(trace
            .attention
            .iter()
            .map(|&n| g.value(n).clone())
            .collect())
    }

    /// Pool precomputed hidden states.
    pub fn pool(&self, hidden: &Tensor<T>) -> Result<Tensor<T>, EncoderError> {
        let mut g = Graph::new(&self.store, 0);
        let h = g.input(hidden.clone())?;
        let pooled = pool(&mut g, &self.ids, h)?;
        Ok(g.value(pooled).clone().reshape([self.config.hidden_size])?)
    }

    /// Pooled CLS vector for one input in evaluation mode.
    pub fn embed(&self, x: &EncodedInput) -> Result<Tensor<T>, EncoderError> {
        let mut g = Graph::new(&self.store, 0);
        let trace = encoder_forward(&mut g, &self.ids, &self.config, x, false)?;
        let pooled = pool(&mut g, &self.ids, trace.hidden)?;
        Ok(g.value(pooled).clone().reshape([self.config.hidden_size])?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(ids: &[u32], real: usize) -> EncodedInput {
        EncodedInput {
            ids: ids.to_vec(),
            mask: (0..ids.len()).map(|i| u8::from(i < real)).collect(),
            segments: alloc::vec![0; ids.len()],
        }
    }

    #[test]
    fn toy_parameter_count_matches_closed_form() {
        let cfg = Preset::Toy.config();
        let w = init_encoder::<f32>(&cfg, 1).unwrap();
        // Independently tallied: embeddings (100 + 256 + 2) * 32 + norm 64;
        // per layer 4 * (32*32 + 32) + 64 + (32*64 + 64) + (64*32 + 32) + 64;
        // pooler 32*32 + 32.
        let embeddings = (100 + 256 + 2) * 32 + 2 * 32;
        let layer = 4 * (32 * 32 + 32) + 2 * 32 + (32 * 64 + 64) + (64 * 32 + 32) + 2 * 32;
        let pooler = 32 * 32 + 32;
        let expected = embeddings + 2 * layer + pooler;
        assert_eq!(w.store.num_elements(), expected);
        assert_eq!(w.num_parameters(), expected);
        assert_eq!(cfg.parameter_count(), expected);
    }

    #[test]
    fn english_base_shapes_and_size() {
        let cfg = Preset::EnglishBase.config();
        assert_eq!(cfg.parameter_count(), 109_482_240);
        let rel = (cfg.parameter_count() as f64 - 109e6).abs() / 109e6;
        assert!(rel < 0.05);
        let q = manifest(&cfg)
            .into_iter()
            .find(|(n, _, _)| n == "layer.0.attention.query.weight")
            .unwrap();
        assert_eq!(q.1, alloc::vec![768, 768]);
    }

    #[test]
    fn presets_resolve_by_name() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
            p.config().validate().unwrap();
        }
        assert!("large".parse::<Preset>().is_err());
        assert!(Preset::ItalianBase.config().cased);
    }

    #[test]
    fn init_is_seeded_and_validated() {
        let cfg = Preset::Toy.config();
        let a = init_encoder::<f32>(&cfg, 5).unwrap();
        assert_eq!(a, init_encoder::<f32>(&cfg, 5).unwrap());
        assert_ne!(a.store, init_encoder::<f32>(&cfg, 6).unwrap().store);
        let bad = EncoderConfig {
            num_heads: 3,
            ..cfg.clone()
        };
        assert!(matches!(
            init_encoder::<f32>(&bad, 0),
            Err(EncoderError::InvalidConfig(_))
        ));
        let bad = EncoderConfig {
            num_layers: 0,
            ..cfg
        };
        assert!(matches!(
            init_encoder::<f32>(&bad, 0),
            Err(EncoderError::InvalidConfig(_))
        ));
        let limit = 2.0 * INIT_STD as f32 + 1e-7;
        let word = a.store.value(a.ids.word);
        assert!(word.data().iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn forward_shape_and_errors() {
        let cfg = Preset::Toy.config();
        let w = init_encoder::<f32>(&cfg, 2).unwrap();
        let x = input(&[2, 7, 3, 0, 0, 0], 3);
        let h = w.forward(&x, false, 0).unwrap();
        assert_eq!(h.shape(), &[6, 32]);
        assert!(matches!(
            w.forward(&input(&[2, 100, 3], 3), false, 0),
            Err(EncoderError::IdOutOfRange { id: 100, .. })
        ));
        let long = input(&alloc::vec![1; 257], 257);
        assert!(matches!(
            w.forward(&long, false, 0),
            Err(EncoderError::SequenceTooLong { len: 257, max: 256 })
        ));
        assert_eq!(h, w.forward(&x, false, 99).unwrap());
    }

    #[test]
    fn padded_keys_get_no_attention() {
        let cfg = Preset::Toy.config();
        let w = init_encoder::<f32>(&cfg, 3).unwrap();
        let x = input(&[2, 9, 8, 3, 0, 0, 0, 0], 4);
        for probs in w.attention(&x).unwrap() {
            for q in 0..8 {
                for k in 4..8 {
                    assert!(probs.row(q)[k] < 1e-6);
                }
            }
        }
    }

    #[test]
    fn pool_examples() {
        let cfg = Preset::Toy.config();
        let mut w = init_encoder::<f64>(&cfg, 4).unwrap();
        let x = input(&[2, 11, 12, 3, 0, 0], 4);
        let hidden = w.forward(&x, false, 0).unwrap();
        let pooled = w.pool(&hidden).unwrap();
        assert_eq!(pooled.shape(), &[32]);
        assert!(pooled.data().iter().all(|v| v.abs() < 1.0));

        let mut perturbed = hidden.clone();
        perturbed.data_mut()[5 * 32..6 * 32]
            .iter_mut()
            .for_each(|v| *v += 3.0);
        assert_eq!(w.pool(&perturbed).unwrap(), pooled);

        for id in [w.ids.pooler.weight, w.ids.pooler.bias] {
            w.store
                .get_mut(id)
                .value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 0.0);
        }
        assert!(w.pool(&hidden).unwrap().data().iter().all(|&v| v == 0.0));
    }
}
