//! Single-model checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "FMCK" | u32 version | u64 header length | header JSON | f32 payload | u32 CRC-32 of payload
//! ```
//!
//! The header holds the encoder config, a manifest of every parameter
//! (name, shape, byte offset into the payload, in payload order) and free-form
//! metadata.

use std::fs;
use std::path::{Path, PathBuf};

use feedback_miner_core::autodiff::{ParamStore, Real, Tensor};
use feedback_miner_core::encoder::EncoderError;
use feedback_miner_core::{EncoderConfig, EncoderWeights};
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 4] = b"FMCK";
pub const VERSION: u32 = 1;
const PREFIX: usize = 4 + 4 + 8;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint is truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checkpoint checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint config does not match the requested one: {0}")]
    ConfigMismatch(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub config: EncoderConfig,
    pub params: Vec<ParamEntry>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl Header {
    fn payload_len(&self) -> usize {
        self.params
            .iter()
            .map(|p| p.shape.iter().product::<usize>() * 4)
            .sum()
    }
}

/// Serialize a parameter store as 32-bit floats.
pub fn encode<T: Real>(
    config: &EncoderConfig,
    store: &ParamStore<T>,
    metadata: serde_json::Value,
) -> Vec<u8> {
    let mut params = Vec::new();
    let mut payload = Vec::new();
    for (_, p) in store.iter() {
        params.push(ParamEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            offset: payload.len(),
        });
        for v in p.value.data() {
            payload.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    let header = serde_json::to_vec(&Header {
        config: config.clone(),
        params,
        metadata,
    })
    .expect("header serializes");
    let mut out = Vec::with_capacity(PREFIX + header.len() + payload.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out
}

pub fn decode(bytes: &[u8]) -> Result<(Header, ParamStore<f32>), CheckpointError> {
    if bytes.len() < PREFIX {
        return Err(if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            CheckpointError::BadMagic
        } else {
            CheckpointError::Truncated {
                expected: PREFIX,
                found: bytes.len(),
            }
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header_end = PREFIX
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or(CheckpointError::Truncated {
            expected: PREFIX.saturating_add(header_len),
            found: bytes.len(),
        })?;
    let header: Header = serde_json::from_slice(&bytes[PREFIX..header_end])
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    let payload_len = header.payload_len();
    let expected = header_end + payload_len + 4;
    if bytes.len() != expected {
        return Err(CheckpointError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let payload = &bytes[header_end..header_end + payload_len];
    let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().unwrap());
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }

    let mut store = ParamStore::new();
    let mut cursor = 0;
    for p in &header.params {
        if p.offset != cursor {
            return Err(CheckpointError::Header(format!(
                "parameter {} has offset {} but {} was expected",
                p.name, p.offset, cursor
            )));
        }
        let n: usize = p.shape.iter().product();
        let values = payload[cursor..cursor + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        cursor += 4 * n;
        let tensor = Tensor::new(p.shape.clone(), values)
            .map_err(|e| CheckpointError::Header(e.to_string()))?;
        store
            .add(&p.name, tensor)
            .map_err(|e| CheckpointError::Header(e.to_string()))?;
    }
    Ok((header, store))
}

pub fn save<T: Real>(
    path: &Path,
    config: &EncoderConfig,
    store: &ParamStore<T>,
    metadata: serde_json::Value,
) -> Result<(), CheckpointError> {
    fs::write(path, encode(config, store, metadata)).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: &Path) -> Result<(Header, ParamStore<f32>), CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}

pub fn save_encoder<T: Real>(
    path: &Path,
    weights: &EncoderWeights<T>,
) -> Result<(), CheckpointError> {
    save(
        path,
        &weights.config,
        &weights.store,
        serde_json::json!({ "kind": "encoder" }),
    )
}

/// Load encoder weights, checking the stored config against `expected`
/// when one is given.
pub fn load_encoder(
    path: &Path,
    expected: Option<&EncoderConfig>,
) -> Result<EncoderWeights<f32>, CheckpointError> {
    let (header, store) = load(path)?;
    if let Some(want) = expected {
        check_config(&header.config, want)?;
    }
    Ok(EncoderWeights::from_store(&header.config, store)?)
}

pub fn check_config(found: &EncoderConfig, want: &EncoderConfig) -> Result<(), CheckpointError> {
    if found == want {
        return Ok(());
    }
    let mut diffs = Vec::new();
    let mut cmp = |name: &str, a: String, b: String| {
        if a != b {
            diffs.push(format!("{name}: file {a}, requested {b}"));
        }
    };
    cmp(
        "num_layers",
        found.num_layers.to_string(),
        want.num_layers.to_string(),
    );
    cmp(
        "hidden_size",
        found.hidden_size.to_string(),
        want.hidden_size.to_string(),
    );
    cmp(
        "num_heads",
        found.num_heads.to_string(),
        want.num_heads.to_string(),
    );
    cmp(
        "ffn_size",
        found.ffn_size.to_string(),
        want.ffn_size.to_string(),
    );
    cmp(
        "vocab_size",
        found.vocab_size.to_string(),
        want.vocab_size.to_string(),
    );
    cmp(
        "max_positions",
        found.max_positions.to_string(),
        want.max_positions.to_string(),
    );
    cmp(
        "type_vocab_size",
        found.type_vocab_size.to_string(),
        want.type_vocab_size.to_string(),
    );
    cmp(
        "dropout_p",
        found.dropout_p.to_string(),
        want.dropout_p.to_string(),
    );
    cmp(
        "layer_norm_eps",
        found.layer_norm_eps.to_string(),
        want.layer_norm_eps.to_string(),
    );
    cmp("cased", found.cased.to_string(), want.cased.to_string());
    Err(CheckpointError::ConfigMismatch(diffs.join(", ")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use feedback_miner_core::encoder::init_encoder;
    use feedback_miner_core::Preset;

    fn toy() -> EncoderWeights<f32> {
        init_encoder(&Preset::Toy.config(), 4).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let w = toy();
        let bytes = encode(&w.config, &w.store, serde_json::json!({"note": "x"}));
        let (header, store) = decode(&bytes).unwrap();
        assert_eq!(header.config, w.config);
        assert_eq!(header.metadata["note"], "x");
        for ((_, a), (_, b)) in w.store.iter().zip(store.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value.shape(), b.value.shape());
            assert!(a
                .value
                .data()
                .iter()
                .zip(b.value.data())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(
            encode(&header.config, &store, header.metadata.clone()),
            bytes
        );
    }

    #[test]
    fn corruption_is_detected() {
        let w = toy();
        let bytes = encode(&w.config, &w.store, serde_json::Value::Null);
        assert!(matches!(
            decode(&bytes[..bytes.len() - 100]),
            Err(CheckpointError::Truncated { .. })
        ));
        assert!(matches!(
            decode(&bytes[..10]),
            Err(CheckpointError::Truncated { .. })
        ));
        let mut flipped = bytes.clone();
        let i = flipped.len() - 50;
        flipped[i] ^= 0x40;
        assert!(matches!(
            decode(&flipped),
            Err(CheckpointError::Checksum { .. })
        ));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(decode(&magic), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn config_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.ckpt");
        let w = toy();
        save_encoder(&path, &w).unwrap();
        assert_eq!(load_encoder(&path, Some(&w.config)).unwrap(), w);
        let mut big = w.config.clone();
        big.hidden_size = 768;
        let err = load_encoder(&path, Some(&big)).unwrap_err();
        assert!(
            err.to_string()
                .contains("hidden_size: file 32, requested 768"),
            "{err}"
        );
    }
}
