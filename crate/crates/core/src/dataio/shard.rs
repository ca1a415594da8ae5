//! Binary dataset shards of `(noisy, clean)` map pairs.
//!
//! Little-endian layout: `FOGD`, version `u32 = 1`, count `u64`, then per
//! sample a `u16` id length, the UTF-8 id, `t` as `u32`, winner as `u8`
//! (0 = A, 1 = B), and X then Y as `66*32*32` `f32` values each.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gamestate::{apply_fog, compute_visibility, encode_frame, FeatureMap, Frame, Side, UnitTypeTable, MAP_LEN};

pub const SHARD_MAGIC: [u8; 4] = *b"FOGD";
pub const SHARD_VERSION: u32 = 1;

/// A noisy map `x`, its clean counterpart `y` and the game outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSample {
    pub x: FeatureMap,
    pub y: FeatureMap,
    pub winner: Side,
    pub replay_id: String,
    pub t_seconds: u32,
}

/// `y = encode_frame`, `x = apply_fog(y, compute_visibility)` per frame.
pub fn build_samples(frames: &[Frame], table: &UnitTypeTable) -> Result<Vec<DatasetSample>> {
    frames
        .par_iter()
        .map(|f| {
            let y = encode_frame(f, table)?;
            let x = apply_fog(&y, &compute_visibility(f, table));
            Ok(DatasetSample {
                x,
                y,
                winner: f.winner,
                replay_id: f.replay_id.clone(),
                t_seconds: f.t_seconds,
            })
        })
        .collect()
}

fn put_map<W: Write>(w: &mut W, map: &FeatureMap, buf: &mut Vec<u8>) -> std::io::Result<()> {
    buf.clear();
    buf.extend(map.as_slice().iter().flat_map(|v| v.to_le_bytes()));
    w.write_all(buf)
}

pub fn write_shard_to<W: Write>(samples: &[DatasetSample], mut w: W) -> Result<()> {
    w.write_all(&SHARD_MAGIC)?;
    w.write_all(&SHARD_VERSION.to_le_bytes())?;
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(MAP_LEN * 4);
    for s in samples {
        let id = s.replay_id.as_bytes();
        let len = u16::try_from(id.len())
            .map_err(|_| Error::invalid(format!("replay id of {} bytes exceeds u16", id.len())))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(id)?;
        w.write_all(&s.t_seconds.to_le_bytes())?;
        w.write_all(&[s.winner.index() as u8])?;
        put_map(&mut w, &s.x, &mut buf)?;
        put_map(&mut w, &s.y, &mut buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_shard(samples: &[DatasetSample], path: &Path) -> Result<()> {
    write_shard_to(samples, BufWriter::new(File::create(path)?))
}

/// Reader that knows its byte position for error reporting.
struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn bytes(&mut self, out: &mut [u8], what: &str) -> Result<()> {
        match self.inner.read_exact(out) {
            Ok(()) => {
                self.offset += out.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => Err(Error::Format {
                offset: self.offset,
                message: format!("truncated while reading {what}"),
            }),
            Err(e) => Err(e.into()),
        }
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.bytes(&mut b, what)?;
        Ok(b)
    }

    fn map(&mut self, what: &str, buf: &mut [u8]) -> Result<FeatureMap> {
        self.bytes(buf, what)?;
        let values = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        FeatureMap::from_vec(values)
    }

    fn fail(&self, at: u64, message: impl Into<String>) -> Error {
        Error::Format {
            offset: at,
            message: message.into(),
        }
    }
}

pub fn read_shard_from<R: Read>(reader: R) -> Result<Vec<DatasetSample>> {
    let mut c = Cursor {
        inner: reader,
        offset: 0,
    };
    let magic: [u8; 4] = c.array("magic")?;
    if magic != SHARD_MAGIC {
        return Err(c.fail(0, format!("bad magic {magic:?}, expected FOGD")));
    }
    let version = u32::from_le_bytes(c.array("version")?);
    if version != SHARD_VERSION {
        return Err(c.fail(4, format!("unsupported shard version {version}")));
    }
    let count = u64::from_le_bytes(c.array("sample count")?);
    let mut samples = Vec::new();
    let mut buf = vec![0u8; MAP_LEN * 4];
    for k in 0..count {
        let len = u16::from_le_bytes(c.array("replay id length")?) as usize;
        let at = c.offset;
        let mut id = vec![0u8; len];
        c.bytes(&mut id, "replay id")?;
        let replay_id = String::from_utf8(id).map_err(|_| c.fail(at, format!("sample {k}: replay id is not UTF-8")))?;
        let t_seconds = u32::from_le_bytes(c.array("t")?);
        let at = c.offset;
        let winner = match c.array::<1>("winner")?[0] {
            0 => Side::A,
            1 => Side::B,
            w => return Err(c.fail(at, format!("sample {k}: winner byte {w} is not 0 or 1"))),
        };
        let x = c.map("X", &mut buf)?;
        let y = c.map("Y", &mut buf)?;
        samples.push(DatasetSample {
            x,
            y,
            winner,
            replay_id,
            t_seconds,
        });
    }
    let mut extra = [0u8; 1];
    if c.inner.read(&mut extra)? != 0 {
        return Err(c.fail(c.offset, "trailing bytes after last sample"));
    }
    Ok(samples)
}

pub fn read_shard(path: &Path) -> Result<Vec<DatasetSample>> {
    read_shard_from(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gamestate::UnitInstance;

    fn sample_frames() -> Vec<Frame> {
        let u = |type_id: usize, x, y| UnitInstance {
            type_id,
            owner: Side::of_type(type_id),
            x,
            y,
        };
        vec![
            Frame {
                replay_id: "a".into(),
                t_seconds: 6,
                units: vec![u(1, 100, 100), u(35, 150, 120), u(36, 3900, 3900)],
                winner: Side::B,
            },
            Frame {
                replay_id: "b".into(),
                t_seconds: 9,
                units: vec![u(40, 3000, 3000)],
                winner: Side::A,
            },
        ]
    }

    #[test]
    fn fog_hides_far_enemies() {
        let s = build_samples(&sample_frames(), &UnitTypeTable::builtin()).unwrap();
        assert_eq!(s[0].x.get(35, 0, 1), 1.0);
        assert_eq!(s[0].x.get(36, 30, 30), 0.0);
        assert_eq!(s[0].y.get(36, 30, 30), 1.0);
        assert_eq!(s[1].x.total(), 0.0);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = build_samples(&sample_frames(), &UnitTypeTable::builtin()).unwrap();
        let mut buf = Vec::new();
        write_shard_to(&s, &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 2 * (2 + 1 + 4 + 1 + 2 * MAP_LEN * 4));
        assert_eq!(read_shard_from(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn corrupt_magic_at_offset_zero() {
        let mut buf = Vec::new();
        write_shard_to(&[], &mut buf).unwrap();
        buf[0] = b'X';
        assert!(matches!(read_shard_from(buf.as_slice()), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn truncation_reports_offset() {
        let s = build_samples(&sample_frames(), &UnitTypeTable::builtin()).unwrap();
        let mut buf = Vec::new();
        write_shard_to(&s, &mut buf).unwrap();
        buf.truncate(100);
        match read_shard_from(buf.as_slice()) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 24),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_version_rejected() {
        let mut buf = Vec::new();
        write_shard_to(&[], &mut buf).unwrap();
        buf[4] = 2;
        assert!(matches!(read_shard_from(buf.as_slice()), Err(Error::Format { offset: 4, .. })));
    }
}
