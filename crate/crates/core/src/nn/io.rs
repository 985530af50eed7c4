//! Binary weight files: `LFW1` magic, u16 version, u32 tensor count, then per
//! tensor a u16 name length, UTF-8 name, u8 rank, u32 dims and little-endian
//! f32 values, followed by a CRC32 of everything before it.

use std::fs;
use std::path::Path;

use super::net::Parameterized;
use super::tensor::{Scalar, Tensor};
use super::NnError;

pub const MAGIC: &[u8; 4] = b"LFW1";
pub const WEIGHT_FORMAT_VERSION: u16 = 1;

pub fn encode_weights<T: Scalar>(tensors: &[(&str, &Tensor<T>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&WEIGHT_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| NnError::Format("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<Vec<(String, Tensor<f32>)>, NnError> {
    if bytes.len() < 6 {
        return Err(NnError::ChecksumMismatch);
    }
    if &bytes[..4] != MAGIC {
        return Err(NnError::BadMagic);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != WEIGHT_FORMAT_VERSION {
        return Err(NnError::VersionMismatch {
            found: version,
            expected: WEIGHT_FORMAT_VERSION,
        });
    }
    if bytes.len() < 14 {
        return Err(NnError::ChecksumMismatch);
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().expect("4 bytes")) {
        return Err(NnError::ChecksumMismatch);
    }
    let mut r = Reader { buf: body, pos: 6 };
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let name_len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| NnError::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.take(1)?[0] as usize;
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n: usize = dims.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| NnError::Format("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        out.push((name, Tensor::new(dims, data)?));
    }
    if r.pos != body.len() {
        return Err(NnError::Format("trailing bytes after last tensor".into()));
    }
    Ok(out)
}

pub fn save_weights<T: Scalar>(path: impl AsRef<Path>, tensors: &[(&str, &Tensor<T>)]) -> Result<(), NnError> {
    fs::write(path, encode_weights(tensors))?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor<f32>)>, NnError> {
    decode_weights(&fs::read(path)?)
}

pub fn save_module<M: Parameterized<f32>>(module: &M, path: impl AsRef<Path>) -> Result<(), NnError> {
    save_weights(path, &module.named_params())
}

/// Replaces every parameter of `module` with the same-named tensor from
/// `tensors`; shapes must agree exactly.
pub fn load_into<M: Parameterized<f32>>(module: &mut M, tensors: Vec<(String, Tensor<f32>)>) -> Result<(), NnError> {
    let names: Vec<&'static str> = module.named_params().iter().map(|(n, _)| *n).collect();
    if tensors.len() != names.len() {
        return Err(NnError::Format(format!(
            "expected {} tensors, found {}",
            names.len(),
            tensors.len()
        )));
    }
    let mut slots = module.params_mut();
    for (name, slot) in names.iter().zip(slots.iter_mut()) {
        let t = tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| NnError::MissingTensor(name.to_string()))?;
        if t.shape() != slot.shape() {
            return Err(NnError::ShapeMismatch {
                expected: slot.shape().to_vec(),
                actual: t.shape().to_vec(),
            });
        }
    }
    for (name, slot) in names.iter().zip(slots) {
        let t = tensors.iter().find(|(n, _)| n == name).expect("checked above");
        *slot = t.1.clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{NetConfig, PolicyNet};

    fn small_cfg() -> NetConfig {
        NetConfig {
            in_height: 12,
            in_width: 16,
            conv1_channels: 2,
            conv2_channels: 2,
            hidden1: 4,
            hidden2: 4,
            ..NetConfig::default()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let net = PolicyNet::<f32>::new(small_cfg(), 5);
        let bytes = encode_weights(&net.named_params());
        let mut other = PolicyNet::<f32>::new(small_cfg(), 6);
        load_into(&mut other, decode_weights(&bytes).unwrap()).unwrap();
        assert_eq!(net, other);
    }

    #[test]
    fn truncation_fails_checksum() {
        let net = PolicyNet::<f32>::new(small_cfg(), 5);
        let bytes = encode_weights(&net.named_params());
        for cut in [bytes.len() - 1, bytes.len() / 2, 20, 3] {
            assert!(matches!(decode_weights(&bytes[..cut]), Err(NnError::ChecksumMismatch)), "cut {cut}");
        }
    }

    #[test]
    fn bumped_version_is_rejected() {
        let net = PolicyNet::<f32>::new(small_cfg(), 5);
        let mut bytes = encode_weights(&net.named_params());
        bytes[4] += 1;
        assert!(matches!(decode_weights(&bytes), Err(NnError::VersionMismatch { found: 2, .. })));
    }

    #[test]
    fn flipped_payload_bit_is_detected() {
        let net = PolicyNet::<f32>::new(small_cfg(), 5);
        let mut bytes = encode_weights(&net.named_params());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x10;
        assert!(matches!(decode_weights(&bytes), Err(NnError::ChecksumMismatch)));
    }

    #[test]
    fn wrong_architecture_is_a_shape_error() {
        let net = PolicyNet::<f32>::new(small_cfg(), 5);
        let tensors = decode_weights(&encode_weights(&net.named_params())).unwrap();
        let mut bigger = PolicyNet::<f32>::new(NetConfig { hidden1: 5, ..small_cfg() }, 0);
        assert!(matches!(load_into(&mut bigger, tensors), Err(NnError::ShapeMismatch { .. })));
    }
}
