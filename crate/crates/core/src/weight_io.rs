//! `GCUW` weight files and deterministic synthetic weights.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "GCUW" | u32 version = 1
//! u32 n_mfcc | u32 channels | u32 n_blocks | u32 layers_per_block | u32 kernel_size
//! f32 payload: input_proj W, b; per layer: W_f, b_f, W_g, b_g, W_r, b_r
//! u64 FNV-1a of the payload bytes
//! ```
//!
//! Weight tensors are `out × in × kernel` row-major.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gcu_net::{ModelConfig, WeightSet};

pub const MAGIC: &[u8; 4] = b"GCUW";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 5 * 4;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Number of `f32` values in the payload for `cfg`.
pub fn payload_len(cfg: &ModelConfig) -> usize {
    let c = cfg.channels;
    let input = cfg.n_mfcc * c + c;
    let per_layer = 2 * (c * c * cfg.kernel_size + c) + c * c + c;
    input + cfg.total_layers() * per_layer
}

pub fn encode_weights(w: &WeightSet, cfg: &ModelConfig) -> Result<Vec<u8>> {
    cfg.validate()?;
    w.check_against(cfg)?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * payload_len(cfg) + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [
        cfg.n_mfcc,
        cfg.channels,
        cfg.n_blocks,
        cfg.layers_per_block,
        cfg.kernel_size,
    ] {
        let v = u32::try_from(v).map_err(|_| Error::InvalidConfig(format!("{v} does not fit in u32")))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for conv in w.convs() {
        for v in conv.weight.iter().chain(&conv.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let checksum = fnv1a64(&out[HEADER_LEN..]);
    out.extend_from_slice(&checksum.to_le_bytes());
    Ok(out)
}

pub fn decode_weights(bytes: &[u8]) -> Result<(ModelConfig, WeightSet)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedFile {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(Error::BadMagic {
            expected: *MAGIC,
            found: magic,
        });
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != FORMAT_VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let cfg = ModelConfig {
        n_mfcc: u32_at(8) as usize,
        channels: u32_at(12) as usize,
        n_blocks: u32_at(16) as usize,
        layers_per_block: u32_at(20) as usize,
        kernel_size: u32_at(24) as usize,
    };
    cfg.validate()?;
    let payload_bytes = payload_len(&cfg)
        .checked_mul(4)
        .ok_or_else(|| Error::InvalidConfig("payload size overflows".into()))?;
    let expected = HEADER_LEN + payload_bytes + 8;
    if bytes.len() < expected {
        return Err(Error::TruncatedFile {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::TrailingData {
            expected,
            found: bytes.len(),
        });
    }
    let payload = &bytes[HEADER_LEN..HEADER_LEN + payload_bytes];
    let stored = u64::from_le_bytes(bytes[expected - 8..].try_into().unwrap());
    let computed = fnv1a64(payload);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let mut w = WeightSet::zeros(&cfg);
    for conv in w.convs_mut() {
        for v in conv.weight.iter_mut().chain(conv.bias.iter_mut()) {
            *v = values.next().expect("payload length checked");
        }
    }
    w.check_against(&cfg)?;
    Ok((cfg, w))
}

pub fn write_weights(w: &WeightSet, cfg: &ModelConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_weights(w, cfg)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<(ModelConfig, WeightSet)> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes)
}

/// Payload checksum stored in an encoded weight file.
pub fn stored_checksum(bytes: &[u8]) -> Option<u64> {
    let tail = bytes.len().checked_sub(8)?;
    Some(u64::from_le_bytes(bytes[tail..].try_into().ok()?))
}

/// splitmix64 (Steele, Lea & Flood), the stream behind [`synth_weights`].
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
    pub const MIX1: u64 = 0xBF58_476D_1CE4_E5B9;
    pub const MIX2: u64 = 0x94D0_49BB_1331_11EB;

    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(Self::GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(Self::MIX1);
        z = (z ^ (z >> 27)).wrapping_mul(Self::MIX2);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Largest `f32` not above `s`.
fn f32_floor(s: f64) -> f32 {
    let f = s as f32;
    if f as f64 > s {
        f32::from_bits(f.to_bits() - 1)
    } else {
        f
    }
}

/// Uniform weights in `[-s, s]`, `s = 1/sqrt(fan_in)` per tensor (biases
/// share their tensor's bound). Values are drawn in file order from one
/// splitmix64 stream seeded with `seed`.
pub fn synth_weights(cfg: &ModelConfig, seed: u64) -> WeightSet {
    let mut rng = SplitMix64::new(seed);
    let mut w = WeightSet::zeros(cfg);
    for conv in w.convs_mut() {
        let bound = 1.0 / (conv.fan_in() as f64).sqrt();
        let limit = f32_floor(bound);
        for v in conv.weight.iter_mut().chain(conv.bias.iter_mut()) {
            let u = rng.next_f64();
            *v = (((2.0 * u - 1.0) * bound) as f32).clamp(-limit, limit);
        }
    }
    w
}
