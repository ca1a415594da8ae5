//! Named-tensor checkpoints.
//!
//! Little-endian layout: `FOGC`, version `u32 = 1`, tensor count `u32`; per
//! tensor a `u16` name length, the UTF-8 name, rank `u8`, each dimension as
//! `u32`, then `f32` values row-major; finally a `u32` CRC-32 of every
//! preceding byte. Tied kernels are stored once under the encoder name.

use std::fs;
use std::path::Path;

use super::{Classifier, EncoderDecoder};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"FOGC";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(tensors: &[(String, &Tensor<f32>)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        let len = u16::try_from(name.len()).map_err(|_| Error::invalid(format!("tensor name {name} too long")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(u8::try_from(t.rank()).map_err(|_| Error::invalid("tensor rank exceeds 255"))?);
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| Error::invalid("tensor dimension exceeds u32"))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend(t.data().iter().flat_map(|v| v.to_le_bytes()));
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<(String, Tensor<f32>)>> {
    let fail = |offset: usize, message: String| Error::Format {
        offset: offset as u64,
        message,
    };
    if bytes.len() < 4 || bytes[..4] != CHECKPOINT_MAGIC {
        return Err(fail(0, "bad magic, expected FOGC".into()));
    }
    if bytes.len() < 16 {
        return Err(fail(bytes.len(), "checkpoint truncated".into()));
    }
    let body_len = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_len..].try_into().expect("4 bytes"));
    let actual = crc32fast::hash(&bytes[..body_len]);
    if stored != actual {
        return Err(fail(
            body_len,
            format!("CRC mismatch: stored {stored:08x}, computed {actual:08x}"),
        ));
    }
    let mut r = Reader {
        bytes: &bytes[..body_len],
        pos: 4,
    };
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(fail(4, format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32("tensor count")?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = u16::from_le_bytes(r.take(2, "name length")?.try_into().expect("2 bytes")) as usize;
        let at = r.pos;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| fail(at, "tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.take(1, "rank")?[0] as usize;
        let shape = (0..rank)
            .map(|_| r.u32("dimension").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let at = r.pos;
        let n: usize = shape.iter().product();
        let raw = r.take(n * 4, "values")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::from_vec(&shape, data).map_err(|e| fail(at, format!("tensor {name}: {e}")))?;
        out.push((name, t));
    }
    if r.pos != body_len {
        return Err(fail(r.pos, "trailing bytes before CRC".into()));
    }
    Ok(out)
}

pub fn save_encoder_decoder(path: &Path, ed: &EncoderDecoder<f32>) -> Result<()> {
    fs::write(path, encode_checkpoint(&ed.named_params())?)?;
    Ok(())
}

pub fn load_encoder_decoder(path: &Path) -> Result<EncoderDecoder<f32>> {
    EncoderDecoder::from_named(decode_checkpoint(&fs::read(path)?)?)
}

pub fn save_classifier(path: &Path, clf: &Classifier<f32>) -> Result<()> {
    fs::write(path, encode_checkpoint(&clf.named_params())?)?;
    Ok(())
}

pub fn load_classifier(path: &Path) -> Result<Classifier<f32>> {
    Classifier::from_named(decode_checkpoint(&fs::read(path)?)?)
}
