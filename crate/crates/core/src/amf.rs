//! Activation Map File (AMF) reader and writer.
//!
//! Layout, all integers little-endian:
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `"U1AM"`                |
//! | 4      | 4    | version (u32, = 1)            |
//! | 8      | 4    | H (u32)                       |
//! | 12     | 4    | W (u32)                       |
//! | 16     | 4    | C (u32)                       |
//! | 20     | 1    | nonneg (0/1)                  |
//! | 21     | 3    | reserved (zero)               |
//! | 24     | 4·HWC| f32 payload, row → col → chan |

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::activation::ActivationMap;
use crate::error::{Error, Result};

pub const AMF_MAGIC: [u8; 4] = *b"U1AM";
pub const AMF_VERSION: u32 = 1;
pub const AMF_HEADER_LEN: usize = 24;

pub fn load_activation_map(path: impl AsRef<Path>) -> Result<ActivationMap> {
    let bytes = fs::read(path)?;
    decode_activation_map(&bytes)
}

pub fn save_activation_map(map: &ActivationMap, path: impl AsRef<Path>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode_activation_map(map))?;
    Ok(())
}

pub fn encode_activation_map(map: &ActivationMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(AMF_HEADER_LEN + map.values().len() * 4);
    out.extend_from_slice(&AMF_MAGIC);
    out.extend_from_slice(&AMF_VERSION.to_le_bytes());
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    out.extend_from_slice(&(map.channels() as u32).to_le_bytes());
    out.push(u8::from(map.nonneg()));
    out.extend_from_slice(&[0u8; 3]);
    for v in map.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_activation_map(bytes: &[u8]) -> Result<ActivationMap> {
    if bytes.len() < AMF_HEADER_LEN {
        return Err(Error::Truncated {
            expected: AMF_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != AMF_MAGIC {
        return Err(Error::BadMagic {
            expected: AMF_MAGIC,
            found: magic,
        });
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != AMF_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let (height, width, channels) = (u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize);
    if height == 0 || width == 0 || channels == 0 {
        return Err(Error::ZeroDimension {
            height,
            width,
            channels,
        });
    }
    let nonneg = match bytes[20] {
        0 => false,
        1 => true,
        other => {
            return Err(Error::MalformedMap(format!(
                "nonneg byte must be 0 or 1, got {other}"
            )))
        }
    };
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(channels))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::MalformedMap("dimensions overflow".into()))?;
    let payload = &bytes[AMF_HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::Truncated {
            expected,
            actual: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    ActivationMap::new(height, width, channels, values, nonneg)
}
