//! File formats: scene descriptions, feature images and previews.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

mod fimg;
mod preview;
mod scene;

pub use fimg::{fimg_from_bytes, fimg_to_bytes, read_fimg, write_fimg, FIMG_HEADER_LEN, FIMG_MAGIC, FIMG_VERSION};
pub use preview::{default_channel_map, preview_bytes, quantize, write_preview};
pub use scene::{load_depth_query, load_scene, save_scene, DepthQuery, SceneFile, INPUT_CAMERA};

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| with_path(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| with_path(path, e))
}

fn write_bytes(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| with_path(path, e))
}

fn with_path(path: &Path, e: std::io::Error) -> Error {
    std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into()
}
