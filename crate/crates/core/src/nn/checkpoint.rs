//! Binary tensor container shared by model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SBSR" | version u16 | count u32 |
//!   { name_len u16 | name utf8 | ndim u8 | dims u32 × ndim | data f32 × Π dims } × count
//! ```

use std::collections::HashMap;
use std::path::Path;

use super::network::NetworkParams;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SBSR";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor<f32>,
}

pub fn encode_tensors(tensors: &[NamedTensor]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(
        &u32::try_from(tensors.len())
            .map_err(|_| too_large("tensor count"))?
            .to_le_bytes(),
    );
    for t in tensors {
        let name = t.name.as_bytes();
        out.extend_from_slice(
            &u16::try_from(name.len())
                .map_err(|_| too_large("tensor name"))?
                .to_le_bytes(),
        );
        out.extend_from_slice(name);
        let shape = t.tensor.shape();
        out.push(u8::try_from(shape.len()).map_err(|_| too_large("tensor rank"))?);
        for &d in shape {
            out.extend_from_slice(
                &u32::try_from(d)
                    .map_err(|_| too_large("tensor dimension"))?
                    .to_le_bytes(),
            );
        }
        for v in t.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn too_large(what: &str) -> Error {
    Error::format(
        "checkpoint",
        format!("{what} exceeds the format's field width"),
    )
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::format("checkpoint", "bad magic"));
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            "checkpoint",
            format!("unsupported version {version}"),
        ));
    }
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::format("checkpoint", "tensor name is not UTF-8"))?
            .to_owned();
        let ndim = r.take(1)?[0] as usize;
        let shape = (0..ndim)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| too_large("tensor"))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let tensor = Tensor::from_vec(&shape, data)
            .map_err(|e| Error::format("checkpoint", format!("tensor {name}: {e}")))?;
        tensors.push(NamedTensor { name, tensor });
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            "checkpoint",
            "trailing bytes after last tensor",
        ));
    }
    Ok(tensors)
}

pub fn write_tensors(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    std::fs::write(path, encode_tensors(tensors)?).map_err(|e| Error::io(path, e))
}

pub fn read_tensors(path: &Path) -> Result<Vec<NamedTensor>> {
    decode_tensors(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format("checkpoint", "truncated file")),
        }
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Flattens a network into tensors named `{prefix}.{param}`.
pub fn network_tensors(prefix: &str, net: &NetworkParams<f32>) -> Vec<NamedTensor> {
    net.params()
        .iter()
        .map(|p| NamedTensor {
            name: format!("{prefix}.{}", p.name),
            tensor: Tensor::from_vec(&p.shape, p.data.to_vec())
                .expect("parameter shapes are consistent"),
        })
        .collect()
}

/// Rebuilds a network from tensors named `{prefix}.{param}`.
pub fn network_from_tensors(
    prefix: &str,
    tensors: &HashMap<&str, &Tensor<f32>>,
) -> Result<NetworkParams<f32>> {
    let mut net = NetworkParams::<f32>::zeros();
    let reference = NetworkParams::<f32>::zeros();
    for (slot, p) in net.params_mut().into_iter().zip(reference.params()) {
        let name = format!("{prefix}.{}", p.name);
        let t = tensors
            .get(name.as_str())
            .ok_or_else(|| Error::format("checkpoint", format!("missing tensor {name}")))?;
        if t.shape() != p.shape.as_slice() {
            return Err(Error::ShapeMismatch {
                op: "checkpoint load",
                expected: p.shape.clone(),
                actual: t.shape().to_vec(),
            });
        }
        slot.copy_from_slice(t.data());
    }
    Ok(net)
}
