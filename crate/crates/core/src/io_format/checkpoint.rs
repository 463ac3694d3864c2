use std::path::Path;

use super::config::{config_to_text, parse_config};
use crate::error::{Error, Result};
use crate::model::{ModelParams, TrainConfig, TrainMode};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CLCCCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub mode: TrainMode,
    pub config: TrainConfig,
    pub params: ModelParams<f32>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

/// Layout: magic, version, mode name, config text, tensor count, then per
/// tensor its name, rank, dims and little-endian f32 values.
pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_str(&mut out, ck.mode.name());
    put_str(&mut out, &config_to_text(&ck.config));
    put_u32(&mut out, ck.params.specs().len() as u32);
    for (i, spec) in ck.params.specs().iter().enumerate() {
        put_str(&mut out, &spec.name);
        put_u32(&mut out, spec.dims.len() as u32);
        for &d in &spec.dims {
            put_u32(&mut out, d as u32);
        }
        for v in ck.params.tensor(i) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Format {
            offset: self.bytes.len() as u64,
            message: format!("truncated checkpoint: missing {what}"),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("four bytes")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let at = self.pos;
        let n = self.u32(what)? as usize;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Format { offset: at as u64, message: format!("{what} is not UTF-8") })
    }

    fn fail(&self, at: usize, message: impl Into<String>) -> Error {
        Error::Format { offset: at as u64, message: message.into() }
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(r.fail(0, "bad magic"));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion(format!("checkpoint version {version}")));
    }
    let mode_at = r.pos;
    let mode = TrainMode::parse(&r.string("mode")?).map_err(|e| r.fail(mode_at, e.to_string()))?;
    let cfg_at = r.pos;
    let config = parse_config(&r.string("config")?, TrainConfig::default()).map_err(|e| r.fail(cfg_at, e.to_string()))?;

    let layout = ModelParams::<f32>::init(config.shape.clone(), 0)?;
    let count_at = r.pos;
    let count = r.u32("tensor count")? as usize;
    if count != layout.specs().len() {
        return Err(r.fail(count_at, format!("expected {} tensors, found {count}", layout.specs().len())));
    }
    let mut data = Vec::with_capacity(layout.len());
    for spec in layout.specs() {
        let at = r.pos;
        let name = r.string("tensor name")?;
        let rank = r.u32("tensor rank")? as usize;
        let dims = (0..rank).map(|_| r.u32("tensor dims").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if name != spec.name || dims != spec.dims {
            return Err(r.fail(at, format!("tensor {name} {dims:?} does not match expected {} {:?}", spec.name, spec.dims)));
        }
        let payload = r.take(4 * spec.len(), "tensor data")?;
        data.extend(payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("four bytes"))));
    }
    if r.pos != bytes.len() {
        return Err(r.fail(r.pos, "trailing bytes after last tensor"));
    }
    let params = ModelParams::from_flat(config.shape.clone(), data)?;
    Ok(Checkpoint { mode, config, params })
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ck)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelShape;

    fn sample() -> Checkpoint {
        let config = TrainConfig {
            shape: ModelShape { input_size: 16, conv_channels: vec![4, 6], proj_hidden: 5, proj_dim: 3 },
            seed: 12,
            ..TrainConfig::default()
        };
        let params = ModelParams::init(config.shape.clone(), 4).unwrap();
        Checkpoint { mode: TrainMode::ClccWb, config, params }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let bytes = encode_checkpoint(&ck);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.mode, ck.mode);
        assert_eq!(back.config, ck.config);
        assert_eq!(back.params.flat(), ck.params.flat());
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = encode_checkpoint(&sample());
        let mut bad = bytes.clone();
        bad[0] = b'x';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format { offset: 0, .. })));
        let mut bad = bytes.clone();
        bad[8] = 2;
        assert!(matches!(decode_checkpoint(&bad), Err(Error::UnsupportedVersion(_))));
        assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 3]), Err(Error::Format { .. })));
        let mut long = bytes.clone();
        long.push(1);
        assert!(matches!(decode_checkpoint(&long), Err(Error::Format { .. })));
    }
}
