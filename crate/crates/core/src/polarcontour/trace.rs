//! Moore-neighbor boundary tracing of a single-region mask.

use std::collections::VecDeque;

use super::ContourError;
use crate::geom::{Point, PointSet};
use crate::imageprep::Raster;
use crate::MASK_FOREGROUND;

/// Moore neighborhood as `(dx, dy)`, clockwise on screen starting at west.
const NEIGHBORS: [(i64, i64); 8] = [
    (-1, 0),  // W
    (-1, -1), // NW
    (0, -1),  // N
    (1, -1),  // NE
    (1, 0),   // E
    (1, 1),   // SE
    (0, 1),   // S
    (-1, 1),  // SW
];

struct Grid<'a> {
    mask: &'a Raster<u8>,
}

impl Grid<'_> {
    fn is_fg(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.mask.width()
            && (y as usize) < self.mask.height()
            && self.mask.get(y as usize, x as usize, 0) == MASK_FOREGROUND
    }
}

/// Traces the boundary of the single foreground region (value 0) of a mask.
///
/// Returns the boundary pixels ordered clockwise from the top-most, left-most
/// foreground pixel, together with the centroid of all foreground pixels.
/// Pixel `(row, col)` maps to the point `(col, row)`.
pub fn extract_contour(mask: &Raster<u8>) -> Result<(PointSet, Point), ContourError> {
    if mask.channels() != 1 {
        return Err(ContourError::Channels(mask.channels()));
    }
    if !mask.is_binary() {
        return Err(ContourError::NotBinary);
    }
    let grid = Grid { mask };
    let (components, start, centroid) = label_components(mask);
    match components {
        0 => return Err(ContourError::EmptyMask),
        1 => {}
        n => return Err(ContourError::MultipleComponents(n)),
    }
    let boundary = moore_trace(&grid, start);
    let points = boundary
        .into_iter()
        .map(|(x, y)| Point::new(x as f64, y as f64))
        .collect();
    Ok((points, centroid))
}

/// Counts 4-connected foreground components; also returns the first
/// foreground pixel in row-major order and the foreground centroid.
fn label_components(mask: &Raster<u8>) -> (usize, (i64, i64), Point) {
    let (h, w) = (mask.height(), mask.width());
    let mut seen = vec![false; h * w];
    let mut components = 0;
    let mut start = (0, 0);
    let (mut sx, mut sy, mut count) = (0.0, 0.0, 0usize);
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if seen[y * w + x] || mask.get(y, x, 0) != MASK_FOREGROUND {
                continue;
            }
            if components == 0 {
                start = (x as i64, y as i64);
            }
            components += 1;
            seen[y * w + x] = true;
            queue.push_back((x, y));
            while let Some((cx, cy)) = queue.pop_front() {
                sx += cx as f64;
                sy += cy as f64;
                count += 1;
                let mut visit = |nx: usize, ny: usize| {
                    if !seen[ny * w + nx] && mask.get(ny, nx, 0) == MASK_FOREGROUND {
                        seen[ny * w + nx] = true;
                        queue.push_back((nx, ny));
                    }
                };
                if cx > 0 {
                    visit(cx - 1, cy);
                }
                if cx + 1 < w {
                    visit(cx + 1, cy);
                }
                if cy > 0 {
                    visit(cx, cy - 1);
                }
                if cy + 1 < h {
                    visit(cx, cy + 1);
                }
            }
        }
    }
    let centroid = if count > 0 {
        Point::new(sx / count as f64, sy / count as f64)
    } else {
        Point::default()
    };
    (components, start, centroid)
}

fn direction_index(dx: i64, dy: i64) -> usize {
    NEIGHBORS
        .iter()
        .position(|&d| d == (dx, dy))
        .expect("backtrack pixel is a Moore neighbor")
}

/// Moore tracing with Jacob's stopping rule: stop when the first move out of
/// the start pixel is about to be repeated.
fn moore_trace(grid: &Grid<'_>, start: (i64, i64)) -> Vec<(i64, i64)> {
    let mut contour = vec![start];
    let mut current = start;
    // start is top-most then left-most, so its west neighbor is background
    let mut backtrack = 0usize;
    let mut first_move: Option<((i64, i64), (i64, i64))> = None;

    loop {
        let found = (1..=8).map(|i| (backtrack + i) % 8).find_map(|d| {
            let (dx, dy) = NEIGHBORS[d];
            let next = (current.0 + dx, current.1 + dy);
            grid.is_fg(next.0, next.1).then_some((d, next))
        });
        let Some((d, next)) = found else {
            // isolated pixel
            break;
        };
        match first_move {
            None => first_move = Some((current, next)),
            Some(m) if m == (current, next) => break,
            Some(_) => {}
        }
        let (bx, by) = NEIGHBORS[(d + 7) % 8];
        let back_pixel = (current.0 + bx, current.1 + by);
        backtrack = direction_index(back_pixel.0 - next.0, back_pixel.1 - next.1);
        current = next;
        contour.push(current);
    }
    if contour.len() > 1 && contour.last() == Some(&start) {
        contour.pop();
    }
    contour
}
