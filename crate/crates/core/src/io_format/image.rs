use std::path::Path;

use crate::color_math::RawImage;
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: &[u8; 8] = b"CLCCIMG1";
const MAGIC_FAMILY: &[u8; 7] = b"CLCCIMG";
pub const IMAGE_HEADER_LEN: usize = 20;

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format { offset: offset as u64, message: message.into() }
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let b = bytes
        .get(offset..offset + 4)
        .ok_or_else(|| format_err(bytes.len(), format!("truncated header: missing {what}")))?;
    Ok(u32::from_le_bytes(b.try_into().expect("four bytes")))
}

/// Header, then interleaved RGB as little-endian f32. Values are rounded
/// to f32.
pub fn encode_image(img: &RawImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(IMAGE_HEADER_LEN + 4 * img.data().len());
    out.extend_from_slice(IMAGE_MAGIC);
    for v in [img.width() as u32, img.height() as u32, 3u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in img.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_image(bytes: &[u8]) -> Result<RawImage> {
    if bytes.len() < IMAGE_MAGIC.len() {
        return Err(format_err(bytes.len(), "truncated magic"));
    }
    let magic = &bytes[..8];
    if magic != IMAGE_MAGIC {
        if &magic[..7] == MAGIC_FAMILY {
            return Err(Error::UnsupportedVersion(String::from_utf8_lossy(magic).into_owned()));
        }
        return Err(format_err(0, "bad magic"));
    }
    let width = read_u32(bytes, 8, "width")? as usize;
    let height = read_u32(bytes, 12, "height")? as usize;
    let channels = read_u32(bytes, 16, "channel count")?;
    if channels != 3 {
        return Err(format_err(16, format!("expected 3 channels, found {channels}")));
    }
    let n = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(3))
        .ok_or_else(|| format_err(8, "image dimensions overflow"))?;
    let expected = n
        .checked_mul(4)
        .and_then(|b| b.checked_add(IMAGE_HEADER_LEN))
        .ok_or_else(|| format_err(8, "image dimensions overflow"))?;
    if bytes.len() < expected {
        return Err(format_err(bytes.len(), format!("truncated payload: expected {expected} bytes")));
    }
    if bytes.len() > expected {
        return Err(format_err(expected, "trailing bytes after payload"));
    }
    let mut data = Vec::with_capacity(n);
    for (i, chunk) in bytes[IMAGE_HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("four bytes"));
        if !v.is_finite() || v < 0.0 {
            return Err(format_err(IMAGE_HEADER_LEN + 4 * i, format!("invalid pixel value {v}")));
        }
        data.push(v as f64);
    }
    RawImage::new(width, height, data)
}

pub fn write_image(path: &Path, img: &RawImage) -> Result<()> {
    std::fs::write(path, encode_image(img)).map_err(|e| Error::io(path, e))
}

pub fn read_image(path: &Path) -> Result<RawImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}
