use std::path::{Path, PathBuf};

use anyhow::Context;
use fundus_core::imageprep::{load_png, normalize, rescale_pixels, save_float_raster, save_png};
use fundus_core::FrameTransform;
use serde::{Deserialize, Serialize};

use super::{list, plain, Outcome};
use crate::manifest::{JobManifest, ManifestError};
use crate::summary::RunSummary;

/// Where a normalized image came from: the original size and the map from
/// original pixel coordinates into the `size x size` frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameFile {
    pub height: usize,
    pub width: usize,
    pub size: usize,
    pub transform: FrameTransform,
}

impl FrameFile {
    pub fn path(dir: &Path, stem: &str) -> PathBuf {
        dir.join(format!("{stem}.frame.json"))
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub(super) fn run(m: &JobManifest) -> Result<RunSummary, ManifestError> {
    let size = m.params.frame;
    let items = list(&m.input, &[".png"])?;
    Ok(plain(m.task, items, |stem, path| {
        let img = load_png(path)?;
        let (norm, transform) = normalize(&img, size)?;
        let png = format!("{stem}.png");
        let raw = format!("{stem}.f32");
        save_png(m.output.join(&png), &norm)?;
        save_float_raster(m.output.join(&raw), &rescale_pixels(&norm))?;
        let frame = FrameFile {
            height: img.height(),
            width: img.width(),
            size,
            transform,
        };
        let frame_path = FrameFile::path(&m.output, stem);
        std::fs::write(&frame_path, serde_json::to_string_pretty(&frame)? + "\n")?;
        Ok(Outcome::default()
            .value("scale", transform.scale_x)
            .output(png)
            .output(raw)
            .output(format!("{stem}.json"))
            .output(format!("{stem}.frame.json")))
    }))
}
