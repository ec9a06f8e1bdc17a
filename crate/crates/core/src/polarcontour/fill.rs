//! Scanline fill of a closed polygon into a binary mask.

use super::ContourError;
use crate::geom::{Point, PointSet};
use crate::imageprep::Raster;
use crate::{MASK_BACKGROUND, MASK_FOREGROUND};

const AREA_EPS: f64 = 1e-12;
const ON_EDGE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Rasterized {
    pub mask: Raster<u8>,
    /// Set when the polygon has zero area; the mask is then all background.
    pub degenerate: bool,
}

/// Signed shoelace area; positive for clockwise order in image coordinates.
pub fn shoelace_area(points: &[Point]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| {
            let (a, b) = (points[i], points[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

/// Fills the closed polygon through `points` into an `h x w` mask.
///
/// A pixel is foreground (0) when its center lies inside the polygon
/// (even-odd rule) or exactly on one of its edges; everything else is 255.
pub fn rasterize_contour(points: &PointSet, h: usize, w: usize) -> Result<Rasterized, ContourError> {
    let pts = points.points();
    if pts.len() < 3 {
        return Err(ContourError::TooFewPoints(pts.len()));
    }
    if pts.iter().any(|p| !p.is_finite()) {
        return Err(ContourError::NonFinite("polygon vertices"));
    }
    let mut mask = Raster::filled(h, w, 1, MASK_BACKGROUND);
    if shoelace_area(pts).abs() < AREA_EPS {
        return Ok(Rasterized {
            mask,
            degenerate: true,
        });
    }

    let edges: Vec<(Point, Point)> = (0..pts.len()).map(|i| (pts[i], pts[(i + 1) % pts.len()])).collect();
    let fill_span = |mask: &mut Raster<u8>, y: usize, x0: f64, x1: f64| {
        let lo = x0.ceil().max(0.0);
        let hi = x1.floor().min(w as f64 - 1.0);
        if lo <= hi {
            for x in lo as usize..=hi as usize {
                mask.set(y, x, 0, MASK_FOREGROUND);
            }
        }
    };

    let mut crossings = Vec::new();
    for y in 0..h {
        let yc = y as f64;
        crossings.clear();
        for &(a, b) in &edges {
            if (a.y <= yc && yc < b.y) || (b.y <= yc && yc < a.y) {
                crossings.push(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for pair in crossings.chunks_exact(2) {
            fill_span(&mut mask, y, pair[0], pair[1]);
        }
    }

    // pixel centers lying exactly on an edge belong to the polygon
    for &(a, b) in &edges {
        if a.y == b.y {
            if a.y.fract() == 0.0 && a.y >= 0.0 && a.y < h as f64 {
                fill_span(&mut mask, a.y as usize, a.x.min(b.x), a.x.max(b.x));
            }
            continue;
        }
        let y_lo = a.y.min(b.y).ceil().max(0.0);
        let y_hi = a.y.max(b.y).floor().min(h as f64 - 1.0);
        if y_lo > y_hi {
            continue;
        }
        for y in y_lo as usize..=y_hi as usize {
            let x = a.x + (y as f64 - a.y) * (b.x - a.x) / (b.y - a.y);
            let xr = x.round();
            if (x - xr).abs() < ON_EDGE_EPS && xr >= 0.0 && xr < w as f64 {
                mask.set(y, xr as usize, 0, MASK_FOREGROUND);
            }
        }
    }

    Ok(Rasterized {
        mask,
        degenerate: false,
    })
}
