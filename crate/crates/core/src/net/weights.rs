//! Weight file: `STWT` magic, `u32` version, `u32`-length-prefixed JSON
//! header, then every parameter as a little-endian `f64` in layout order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::model::{ArchDescriptor, NetworkParams};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"STWT";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    arch: ArchDescriptor,
    seed: u64,
    param_count: usize,
}

pub fn encode_params<T: Real>(params: &NetworkParams<T>) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        arch: params.arch.clone(),
        seed: params.seed,
        param_count: params.len(),
    })
    .expect("header serializes");
    let mut out = Vec::with_capacity(12 + header.len() + 8 * params.len());
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for v in &params.values {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    out
}

pub fn decode_params<T: Real>(bytes: &[u8], path: &Path) -> Result<NetworkParams<T>> {
    let bad = |msg: String| Error::format(path, msg);
    let word = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
            .ok_or_else(|| bad("truncated header".into()))
    };
    if bytes.get(..4) != Some(WEIGHTS_MAGIC.as_slice()) {
        return Err(bad("not a weight file (bad magic)".into()));
    }
    let version = word(4)?;
    if version != WEIGHTS_VERSION {
        return Err(bad(format!("unsupported weight file version {version}, expected {WEIGHTS_VERSION}")));
    }
    let len = word(8)? as usize;
    let json = bytes.get(12..12 + len).ok_or_else(|| bad("truncated header".into()))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| bad(format!("header: {e}")))?;
    let body = &bytes[12 + len..];
    if body.len() != 8 * header.param_count {
        return Err(bad(format!(
            "header declares {} parameters but file holds {} bytes of values",
            header.param_count,
            body.len()
        )));
    }
    let values: Vec<T> = body
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    NetworkParams::from_values(&header.arch, header.seed, values).map_err(|e| bad(e.to_string()))
}

pub fn save_params<T: Real>(params: &NetworkParams<T>, path: &Path) -> Result<()> {
    std::fs::write(path, encode_params(params)).map_err(|e| Error::io(path, e))
}

pub fn load_params<T: Real>(path: &Path) -> Result<NetworkParams<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_params(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = NetworkParams::<f32>::init(&ArchDescriptor::default(), 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.stwt");
        save_params(&p, &path).unwrap();
        let q: NetworkParams<f32> = load_params(&path).unwrap();
        assert_eq!(p, q);
        assert_eq!(q.seed, 42);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"STWT");
    }

    #[test]
    fn rejects_version_and_shape_mismatch() {
        let p = NetworkParams::<f64>::init(&ArchDescriptor::default(), 1).unwrap();
        let path = Path::new("w.stwt");
        let mut bytes = encode_params(&p);
        bytes[4] = 9;
        assert!(matches!(decode_params::<f64>(&bytes, path), Err(Error::Format { .. })));

        let mut short = encode_params(&p);
        short.truncate(short.len() - 8);
        assert!(decode_params::<f64>(&short, path).is_err());

        // Header claims a different architecture than the values fit.
        let other = NetworkParams::<f64>::init(
            &ArchDescriptor {
                encoder_dims: vec![4, 8],
                ..ArchDescriptor::default()
            },
            1,
        )
        .unwrap();
        let mut mixed = encode_params(&other);
        let n = 12 + u32::from_le_bytes(mixed[8..12].try_into().unwrap()) as usize;
        mixed.truncate(n);
        mixed.extend(p.values.iter().flat_map(|v| v.to_le_bytes()));
        assert!(decode_params::<f64>(&mixed, path).is_err());
        assert!(decode_params::<f64>(b"NOPE", path).is_err());
    }
}
