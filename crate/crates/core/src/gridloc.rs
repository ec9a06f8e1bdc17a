//! Grid-cell localization of the optic-disc center.
//!
//! The normalized frame is split into a `G x G` grid. The cell containing the
//! center carries probability 1 and the center's offset from the cell's
//! top-left corner, in cell units; every other cell is zero.
//!
//! Cell `(j, k)` is row `j` (y) and column `k` (x). Cells are stored
//! row-major and serialize to a `G x G x 3` float raster with channels
//! `(p, dx, dy)`.

use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::imageprep::Raster;

pub const DEFAULT_GRID: usize = 10;
/// Probability clamp used before taking logs.
pub const CLS_EPS: f64 = 1e-7;
pub const POSITIVE_WEIGHT: f64 = 0.75;
pub const NEGATIVE_WEIGHT: f64 = 0.25;
/// Weight of the classification term in the total loss.
pub const CLS_LOSS_WEIGHT: f64 = 2.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GridError {
    #[error("center ({x}, {y}) is outside the {width}x{height} frame")]
    OutsideFrame { x: f64, y: f64, width: usize, height: usize },
    #[error("grid size must be at least 1")]
    ZeroGrid,
    #[error("frame must be non-empty, got {height}x{width}")]
    EmptyFrame { height: usize, width: usize },
    #[error("batch sizes differ ({truth} truth vs {pred} predicted)")]
    BatchMismatch { truth: usize, pred: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("grid shapes differ at batch item {index} ({truth} vs {pred})")]
    ShapeMismatch { index: usize, truth: usize, pred: usize },
    #[error("grid raster must be GxGx3, got {height}x{width}x{channels}")]
    RasterShape { height: usize, width: usize, channels: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub p: f64,
    pub dx: f64,
    pub dy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridTarget {
    g: usize,
    frame_h: usize,
    frame_w: usize,
    cells: Vec<GridCell>,
}

/// How the displacement loss weights each cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DisplacementWeight {
    /// Only the ground-truth object cell counts (weight = truth `p`).
    #[default]
    ObjectIndicator,
    /// Weight each cell by its ground-truth `dy`.
    LiteralDy,
}

impl GridTarget {
    pub fn zeros(g: usize, frame_h: usize, frame_w: usize) -> Self {
        Self {
            g,
            frame_h,
            frame_w,
            cells: vec![GridCell::default(); g * g],
        }
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn frame(&self) -> (usize, usize) {
        (self.frame_h, self.frame_w)
    }

    pub fn cells(&self) -> &[GridCell] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [GridCell] {
        &mut self.cells
    }

    pub fn cell(&self, j: usize, k: usize) -> GridCell {
        self.cells[j * self.g + k]
    }

    pub fn cell_mut(&mut self, j: usize, k: usize) -> &mut GridCell {
        &mut self.cells[j * self.g + k]
    }

    pub fn cell_size(&self) -> (f64, f64) {
        (
            self.frame_h as f64 / self.g as f64,
            self.frame_w as f64 / self.g as f64,
        )
    }

    /// `G x G x 3` raster with channels `(p, dx, dy)`.
    pub fn to_raster(&self) -> Raster<f32> {
        Raster::from_fn(self.g, self.g, 3, |j, k, c| {
            let cell = self.cell(j, k);
            [cell.p, cell.dx, cell.dy][c] as f32
        })
    }

    pub fn from_raster(r: &Raster<f32>, frame_h: usize, frame_w: usize) -> Result<Self, GridError> {
        if r.height() != r.width() || r.channels() != 3 || r.height() == 0 {
            return Err(GridError::RasterShape {
                height: r.height(),
                width: r.width(),
                channels: r.channels(),
            });
        }
        if frame_h == 0 || frame_w == 0 {
            return Err(GridError::EmptyFrame {
                height: frame_h,
                width: frame_w,
            });
        }
        let cells = r
            .data()
            .chunks_exact(3)
            .map(|c| GridCell {
                p: f64::from(c[0]),
                dx: f64::from(c[1]),
                dy: f64::from(c[2]),
            })
            .collect();
        Ok(Self {
            g: r.height(),
            frame_h,
            frame_w,
            cells,
        })
    }
}

/// Index of the cell containing coordinate `c` along an axis of `size`
/// pixels split in `g` cells, and the offset inside it in cell units.
fn locate(c: f64, size: usize, g: usize) -> (usize, f64) {
    // c * g / size avoids the inexact cell width (29.9 for 299 / 10)
    let t = c * g as f64 / size as f64;
    let idx = (t.floor() as usize).min(g - 1);
    (idx, t - idx as f64)
}

pub fn encode_center(center: Point, frame_h: usize, frame_w: usize, g: usize) -> Result<GridTarget, GridError> {
    if g == 0 {
        return Err(GridError::ZeroGrid);
    }
    if frame_h == 0 || frame_w == 0 {
        return Err(GridError::EmptyFrame {
            height: frame_h,
            width: frame_w,
        });
    }
    let inside = center.x >= 0.0 && center.y >= 0.0 && center.x < frame_w as f64 && center.y < frame_h as f64;
    if !inside {
        return Err(GridError::OutsideFrame {
            x: center.x,
            y: center.y,
            width: frame_w,
            height: frame_h,
        });
    }
    let (k, dx) = locate(center.x, frame_w, g);
    let (j, dy) = locate(center.y, frame_h, g);
    let mut grid = GridTarget::zeros(g, frame_h, frame_w);
    *grid.cell_mut(j, k) = GridCell { p: 1.0, dx, dy };
    Ok(grid)
}

/// Center from the most probable cell; ties go to the first cell in
/// row-major order.
pub fn decode_center(grid: &GridTarget) -> Point {
    let mut best = 0;
    for (i, cell) in grid.cells.iter().enumerate() {
        if cell.p > grid.cells[best].p {
            best = i;
        }
    }
    let (j, k) = (best / grid.g, best % grid.g);
    let cell = grid.cells[best];
    Point::new(
        (k as f64 + cell.dx) * grid.frame_w as f64 / grid.g as f64,
        (j as f64 + cell.dy) * grid.frame_h as f64 / grid.g as f64,
    )
}

fn check_batch(truth: &[GridTarget], pred: &[GridTarget]) -> Result<(), GridError> {
    if truth.len() != pred.len() {
        return Err(GridError::BatchMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(GridError::EmptyBatch);
    }
    for (index, (t, p)) in truth.iter().zip(pred).enumerate() {
        if t.cells.len() != p.cells.len() {
            return Err(GridError::ShapeMismatch {
                index,
                truth: t.g,
                pred: p.g,
            });
        }
    }
    Ok(())
}

fn clamp_p(p: f64) -> f64 {
    p.clamp(CLS_EPS, 1.0 - CLS_EPS)
}

fn paired_cells<'a>(truth: &'a [GridTarget], pred: &'a [GridTarget]) -> impl Iterator<Item = (&'a GridCell, &'a GridCell)> {
    truth.iter().zip(pred).flat_map(|(t, p)| t.cells.iter().zip(&p.cells))
}

/// Class-weighted cross entropy over all cells, averaged over the batch:
/// `-(1/m) sum [0.75 c ln p + 0.25 (1 - c) ln(1 - p)]`.
pub fn loss_cls(truth: &[GridTarget], pred: &[GridTarget]) -> Result<f64, GridError> {
    check_batch(truth, pred)?;
    let sum: f64 = paired_cells(truth, pred)
        .map(|(t, p)| {
            let q = clamp_p(p.p);
            POSITIVE_WEIGHT * t.p * q.ln() + NEGATIVE_WEIGHT * (1.0 - t.p) * (1.0 - q).ln()
        })
        .sum();
    Ok(-sum / truth.len() as f64)
}

fn disp_weight(t: &GridCell, weighting: DisplacementWeight) -> f64 {
    match weighting {
        DisplacementWeight::ObjectIndicator => t.p,
        DisplacementWeight::LiteralDy => t.dy,
    }
}

/// Squared displacement error, `(1/m) sum [(x - x')^2 + (y - y')^2] w`.
pub fn loss_disp(truth: &[GridTarget], pred: &[GridTarget], weighting: DisplacementWeight) -> Result<f64, GridError> {
    check_batch(truth, pred)?;
    let sum: f64 = paired_cells(truth, pred)
        .map(|(t, p)| ((t.dx - p.dx).powi(2) + (t.dy - p.dy).powi(2)) * disp_weight(t, weighting))
        .sum();
    Ok(sum / truth.len() as f64)
}

/// `2 * loss_cls + loss_disp` with the indicator weighting.
pub fn loss_total(truth: &[GridTarget], pred: &[GridTarget]) -> Result<f64, GridError> {
    loss_total_with(truth, pred, DisplacementWeight::ObjectIndicator)
}

pub fn loss_total_with(truth: &[GridTarget], pred: &[GridTarget], weighting: DisplacementWeight) -> Result<f64, GridError> {
    Ok(CLS_LOSS_WEIGHT * loss_cls(truth, pred)? + loss_disp(truth, pred, weighting)?)
}

/// Partials of [`loss_total`] with respect to every predicted `p`, `dx`, `dy`,
/// stored in the matching slots of one grid per batch item. The partial in
/// `p` is zero where the prediction lies outside the clamp interval.
pub fn grad_loss_total(truth: &[GridTarget], pred: &[GridTarget]) -> Result<Vec<GridTarget>, GridError> {
    grad_loss_total_with(truth, pred, DisplacementWeight::ObjectIndicator)
}

pub fn grad_loss_total_with(
    truth: &[GridTarget],
    pred: &[GridTarget],
    weighting: DisplacementWeight,
) -> Result<Vec<GridTarget>, GridError> {
    check_batch(truth, pred)?;
    let inv_m = 1.0 / truth.len() as f64;
    Ok(truth
        .iter()
        .zip(pred)
        .map(|(t, p)| {
            let cells = t
                .cells
                .iter()
                .zip(&p.cells)
                .map(|(tc, pc)| {
                    let dp = if pc.p > CLS_EPS && pc.p < 1.0 - CLS_EPS {
                        -inv_m * (POSITIVE_WEIGHT * tc.p / pc.p - NEGATIVE_WEIGHT * (1.0 - tc.p) / (1.0 - pc.p))
                    } else {
                        0.0
                    };
                    let w = disp_weight(tc, weighting);
                    GridCell {
                        p: CLS_LOSS_WEIGHT * dp,
                        dx: -2.0 * inv_m * (tc.dx - pc.dx) * w,
                        dy: -2.0 * inv_m * (tc.dy - pc.dy) * w,
                    }
                })
                .collect();
            GridTarget { cells, ..p.clone() }
        })
        .collect())
}
