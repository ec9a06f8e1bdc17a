use anyhow::{bail, ensure};
use fundus_core::imageprep::{load_float_raster, save_png};
use fundus_core::lesionmasks::{argmax_mask, denormalize_mask, detachment_mask, flip_merge};
use fundus_core::{FrameTransform, Raster, MASK_BACKGROUND};
use serde::Deserialize;

use super::grid::csv_rows;
use super::{list, pair, plain, FrameFile, Outcome};
use crate::manifest::{JobManifest, ManifestError};
use crate::summary::RunSummary;

#[derive(Deserialize)]
struct ScoreRow {
    image: String,
    score: f64,
    height: usize,
    width: usize,
}

pub(super) fn detach(m: &JobManifest) -> Result<RunSummary, ManifestError> {
    let threshold = m.params.threshold;
    let items = csv_rows::<ScoreRow>(&m.input, |r| &r.image);
    Ok(plain(m.task, items, |name, row| {
        ensure!((0.0..=1.0).contains(&row.score), "score {} is not a probability", row.score);
        ensure!(row.height > 0 && row.width > 0, "empty image size {}x{}", row.height, row.width);
        let positive = row.score >= threshold;
        let mask = if positive {
            detachment_mask(row.height, row.width)
        } else {
            Raster::filled(row.height, row.width, 1, MASK_BACKGROUND)
        };
        let png = format!("{name}.png");
        save_png(m.output.join(&png), &mask)?;
        Ok(Outcome::default()
            .value("score", row.score)
            .value("positive", if positive { 1.0 } else { 0.0 })
            .output(png))
    }))
}

/// Transform from original coordinates into a `h x w` map predicted on the
/// normalized frame, rescaling when the map size differs from the frame.
fn map_transform(frame: &FrameFile, h: usize, w: usize) -> anyhow::Result<FrameTransform> {
    if h == frame.size && w == frame.size {
        return Ok(frame.transform);
    }
    if frame.size < 2 || h < 2 || w < 2 {
        bail!("cannot rescale a {}x{} map to the {} frame", h, w, frame.size);
    }
    let side = (frame.size - 1) as f64;
    let rescale = FrameTransform::scale((w - 1) as f64 / side, (h - 1) as f64 / side);
    Ok(frame.transform.then(&rescale))
}

pub(super) fn tta_merge(m: &JobManifest) -> Result<RunSummary, ManifestError> {
    let flipped = m.flipped.as_ref().expect("validated");
    let items = pair(list(&m.input, &[".f32"])?, list(flipped, &[".f32"])?, "original", "flipped");
    Ok(plain(m.task, items, |stem, (original, flipped)| {
        let merged = flip_merge(&load_float_raster(original)?, &load_float_raster(flipped)?)?;
        let mut mask = argmax_mask(&merged)?;
        let mut note = None;
        if let Some(dir) = &m.frames {
            let frame = FrameFile::load(&FrameFile::path(dir, stem))?;
            let t = map_transform(&frame, mask.height(), mask.width())?;
            mask = denormalize_mask(&mask, &t, frame.height, frame.width)?;
            note = Some(format!("mapped to {}x{}", frame.height, frame.width));
        }
        let png = format!("{stem}.png");
        save_png(m.output.join(&png), &mask)?;
        let fraction = mask.foreground_count() as f64 / (mask.height() * mask.width()) as f64;
        let mut o = Outcome::default().value("lesion_fraction", fraction).output(png);
        o.note = note;
        Ok(o)
    }))
}
