//! 8-bit previews of three feature channels as binary PPM.

use std::path::Path;

use crate::error::{Error, Result};
use crate::renderer::FeatureImage;

/// Channels `(0, 1, 2)`, or channel 0 repeated for images with fewer than
/// three channels.
pub fn default_channel_map(channels: usize) -> [usize; 3] {
    if channels >= 3 {
        [0, 1, 2]
    } else {
        [0, 0, 0]
    }
}

/// Maps `[lo, hi]` linearly onto `0..=255`, clamping outside, rounding half
/// away from zero.
pub fn quantize(v: f64, lo: f64, hi: f64) -> u8 {
    let scaled = (v - lo) / (hi - lo) * 255.0;
    scaled.clamp(0.0, 255.0).round() as u8
}

pub fn preview_bytes(img: &FeatureImage, channel_map: [usize; 3], lo: f64, hi: f64) -> Result<Vec<u8>> {
    if let Some(&channel) = channel_map.iter().find(|c| **c >= img.channels) {
        return Err(Error::BadChannel {
            channel,
            channels: img.channels,
        });
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Validation(vec![format!("preview range [{lo}, {hi}] is empty")]));
    }
    let header = format!("P6\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + 3 * img.width * img.height);
    out.extend_from_slice(header.as_bytes());
    for px in img.data.chunks_exact(img.channels) {
        for c in channel_map {
            out.push(quantize(px[c], lo, hi));
        }
    }
    Ok(out)
}

pub fn write_preview(img: &FeatureImage, path: &Path, channel_map: [usize; 3], lo: f64, hi: f64) -> Result<()> {
    super::write_bytes(path, preview_bytes(img, channel_map, lo, hi)?)
}
