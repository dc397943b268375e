//! Binary feature images: `FIMG`, a little-endian `u32` version, `H`, `W`,
//! `A`, then `H·W·A` little-endian `f32` values, row-major with channels
//! fastest.

use std::path::Path;

use crate::error::{Error, Result};
use crate::renderer::FeatureImage;

pub const FIMG_MAGIC: &[u8; 4] = b"FIMG";
pub const FIMG_VERSION: u32 = 1;
pub const FIMG_HEADER_LEN: usize = 20;

/// Values are stored as `f32`; anything not exactly representable is
/// rounded to nearest.
pub fn fimg_to_bytes(img: &FeatureImage) -> Result<Vec<u8>> {
    if !img.data.iter().all(|v| v.is_finite()) {
        return Err(Error::Validation(vec!["feature image contains non-finite values".into()]));
    }
    if img.data.len() != img.height * img.width * img.channels {
        return Err(Error::ShapeMismatch("feature image data does not match its dimensions".into()));
    }
    let dim = |d: usize| {
        u32::try_from(d).map_err(|_| Error::Validation(vec![format!("dimension {d} does not fit in u32")]))
    };
    let mut out = Vec::with_capacity(FIMG_HEADER_LEN + 4 * img.data.len());
    out.extend_from_slice(FIMG_MAGIC);
    out.extend_from_slice(&FIMG_VERSION.to_le_bytes());
    for d in [img.height, img.width, img.channels] {
        out.extend_from_slice(&dim(d)?.to_le_bytes());
    }
    for v in &img.data {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn fimg_from_bytes(bytes: &[u8]) -> Result<FeatureImage> {
    if bytes.len() < 4 || &bytes[..4] != FIMG_MAGIC {
        return Err(Error::MagicMismatch);
    }
    if bytes.len() < FIMG_HEADER_LEN {
        return Err(Error::TruncatedPayload {
            expected: FIMG_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4-byte slice"));
    let version = word(1);
    if version != FIMG_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let (h, w, a) = (word(2) as usize, word(3) as usize, word(4) as usize);
    let expected = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(a))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Validation(vec!["feature image dimensions overflow".into()]))?;
    let payload = &bytes[FIMG_HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
        .collect();
    if !data.iter().all(|v| v.is_finite()) {
        return Err(Error::Validation(vec!["feature image contains non-finite values".into()]));
    }
    FeatureImage::from_data(h, w, a, data)
}

pub fn write_fimg(img: &FeatureImage, path: &Path) -> Result<()> {
    super::write_bytes(path, fimg_to_bytes(img)?)
}

pub fn read_fimg(path: &Path) -> Result<FeatureImage> {
    fimg_from_bytes(&super::read_bytes(path)?)
}
