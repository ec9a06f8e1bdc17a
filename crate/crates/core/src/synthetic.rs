//! Synthetic shapes used as fixtures by tests, benchmarks and CLI demos.

use crate::geom::{Point, PointSet};
use crate::imageprep::Raster;
use crate::{MASK_BACKGROUND, MASK_FOREGROUND};

/// Rotated ellipse with semi-axes `a` (along the rotated x axis) and `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: Point,
    pub a: f64,
    pub b: f64,
    pub rotation: f64,
}

impl Ellipse {
    pub fn circle(center: Point, r: f64) -> Self {
        Self {
            center,
            a: r,
            b: r,
            rotation: 0.0,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        let (s, c) = self.rotation.sin_cos();
        let (dx, dy) = (p.x - self.center.x, p.y - self.center.y);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }

    /// Distance from the center to the boundary along direction `theta`.
    pub fn radius_at(&self, theta: f64) -> f64 {
        let phi = theta - self.rotation;
        let (s, c) = phi.sin_cos();
        self.a * self.b / ((self.b * c).powi(2) + (self.a * s).powi(2)).sqrt()
    }

    /// Boundary points at `k` equally spaced polar angles about the center.
    pub fn polar_points(&self, k: usize) -> PointSet {
        (0..k)
            .map(|i| {
                let theta = std::f64::consts::TAU * i as f64 / k as f64;
                let r = self.radius_at(theta);
                Point::new(self.center.x + r * theta.cos(), self.center.y + r * theta.sin())
            })
            .collect()
    }

    /// Binary mask with pixel centers inside the ellipse set to 0.
    pub fn mask(&self, h: usize, w: usize) -> Raster<u8> {
        Raster::from_fn(h, w, 1, |y, x, _| {
            if self.contains(Point::new(x as f64, y as f64)) {
                MASK_FOREGROUND
            } else {
                MASK_BACKGROUND
            }
        })
    }
}
