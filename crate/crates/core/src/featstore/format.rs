//! `BRF1` feature files: magic, three little-endian `u32` dims (C, H, W),
//! then `C·H·W` little-endian IEEE-754 `f32` values.

use std::fs;
use std::path::Path;

use super::{FeatureError, FeatureMap};

pub const FEATURE_MAGIC: &[u8; 4] = b"BRF1";
const HEADER_LEN: usize = 16;

pub fn encode_feature_map(f: &FeatureMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + f.data().len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    for d in [f.channels(), f.height(), f.width()] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in f.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_feature_map(bytes: &[u8]) -> Result<FeatureMap, FeatureError> {
    if bytes.len() < 4 {
        return Err(FeatureError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if &magic != FEATURE_MAGIC {
        return Err(FeatureError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(FeatureError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
    let (c, h, w) = (dim(0), dim(1), dim(2));
    let n = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| FeatureError::Invalid(format!("dimensions {c}×{h}×{w} overflow")))?;
    let expected = HEADER_LEN + n * 4;
    if bytes.len() < expected {
        return Err(FeatureError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FeatureError::Invalid(format!(
            "{} trailing bytes after payload",
            bytes.len() - expected
        )));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    FeatureMap::new(c, h, w, data)
}

pub fn write_feature_map(f: &FeatureMap, path: impl AsRef<Path>) -> Result<(), FeatureError> {
    let path = path.as_ref();
    fs::write(path, encode_feature_map(f)).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_feature_map(path: impl AsRef<Path>) -> Result<FeatureMap, FeatureError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_feature_map(&bytes)
}
