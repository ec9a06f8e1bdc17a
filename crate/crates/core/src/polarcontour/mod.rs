//! Polar boundary model of the optic disc.
//!
//! The boundary radius around a center is a trigonometric polynomial
//!
//! ```text
//! r(theta) = sum_k beta_k * cos(theta)^c_k * sin(theta)^s_k
//! ```
//!
//! over every exponent pair `(c_k, s_k)` in `{0..=N} x {0..=N}`, enumerated
//! row-major (`k = c * (N + 1) + s`). `0^0` is taken as 1 so the constant
//! term is defined at every angle.
//!
//! Angles follow image coordinates: `theta = atan2(y - cy, x - cx)` with the
//! y axis pointing down, normalized to `[0, 2pi)`. A positive angle therefore
//! turns clockwise on screen.
//!
//! For `N >= 2` the columns of the design matrix are linearly dependent
//! (`cos^2 + sin^2 = 1`), so `X^T X` is singular. Fits use the minimum-norm
//! least-squares solution through the SVD, with singular values below
//! `1e-10 * sigma_max` treated as zero.

mod fill;
mod trace;

pub use fill::{rasterize_contour, shoelace_area, Rasterized};
pub use trace::extract_contour;

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geom::{Point, PointSet};

/// Default maximum exponent of the basis.
pub const DEFAULT_N: u32 = 5;
/// Default number of equally spaced reconstruction angles.
pub const DEFAULT_K: usize = 72;
/// Relative cutoff under which singular values are dropped.
pub const SVD_RELATIVE_CUTOFF: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum ContourError {
    #[error("point {index} coincides with the center; its angle is undefined")]
    DegenerateAngle { index: usize },
    #[error("non-finite input ({0})")]
    NonFinite(&'static str),
    #[error("at least one polar sample is required")]
    NoSamples,
    #[error("angle and radius lists differ in length ({angles} vs {radii})")]
    SampleLength { angles: usize, radii: usize },
    #[error("negative radius {radius} at sample {index}")]
    NegativeRadius { index: usize, radius: f64 },
    #[error("coefficient vector has {actual} entries, basis needs {expected}")]
    BasisMismatch { expected: usize, actual: usize },
    #[error("reconstruction needs at least 3 angles, got {0}")]
    TooFewAngles(usize),
    #[error("polygon needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("mask has {0} separate 4-connected foreground regions, expected one")]
    MultipleComponents(usize),
    #[error("mask is not binary (values other than 0 and 255)")]
    NotBinary,
    #[error("mask must have a single channel, got {0}")]
    Channels(usize),
    #[error("least-squares solve failed: {0}")]
    Solve(&'static str),
}

/// Exponent pairs `(c_k, s_k)` of the basis, row-major over `{0..=N}^2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisSpec {
    n: u32,
    pairs: Vec<(u32, u32)>,
}

impl BasisSpec {
    pub fn new(n: u32) -> Self {
        let pairs = (0..=n).flat_map(|c| (0..=n).map(move |s| (c, s))).collect();
        Self { n, pairs }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    /// `(N + 1)^2`.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Writes `cos(theta)^c_k * sin(theta)^s_k` for every k into `row`.
    pub fn eval_into(&self, theta: f64, row: &mut [f64]) {
        debug_assert_eq!(row.len(), self.len());
        let m = self.n as usize + 1;
        let (sin, cos) = theta.sin_cos();
        let mut cos_pow = vec![1.0; m];
        let mut sin_pow = vec![1.0; m];
        for e in 1..m {
            cos_pow[e] = cos_pow[e - 1] * cos;
            sin_pow[e] = sin_pow[e - 1] * sin;
        }
        for (slot, &(c, s)) in row.iter_mut().zip(&self.pairs) {
            *slot = cos_pow[c as usize] * sin_pow[s as usize];
        }
    }

    pub fn eval(&self, theta: f64) -> Vec<f64> {
        let mut row = vec![0.0; self.len()];
        self.eval_into(theta, &mut row);
        row
    }
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self::new(DEFAULT_N)
    }
}

pub fn basis_exponents(n: u32) -> BasisSpec {
    BasisSpec::new(n)
}

/// Angle/radius samples of a contour around its center.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarSamples {
    angles: Vec<f64>,
    radii: Vec<f64>,
}

impl PolarSamples {
    pub fn new(angles: Vec<f64>, radii: Vec<f64>) -> Result<Self, ContourError> {
        if angles.len() != radii.len() {
            return Err(ContourError::SampleLength {
                angles: angles.len(),
                radii: radii.len(),
            });
        }
        if angles.is_empty() {
            return Err(ContourError::NoSamples);
        }
        if angles.iter().chain(&radii).any(|v| !v.is_finite()) {
            return Err(ContourError::NonFinite("polar samples"));
        }
        if let Some((index, &radius)) = radii.iter().enumerate().find(|(_, r)| **r < 0.0) {
            return Err(ContourError::NegativeRadius { index, radius });
        }
        Ok(Self { angles, radii })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// Normalizes an angle into `[0, 2pi)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Angle in `[0, 2pi)` of `p` seen from `center`, image y axis downward.
pub fn polar_angle(center: Point, p: Point) -> f64 {
    normalize_angle((p.y - center.y).atan2(p.x - center.x))
}

pub fn contour_to_polar(points: &PointSet, center: Point) -> Result<PolarSamples, ContourError> {
    if points.is_empty() {
        return Err(ContourError::NoSamples);
    }
    if !center.is_finite() || points.iter().any(|p| !p.is_finite()) {
        return Err(ContourError::NonFinite("contour points"));
    }
    let mut angles = Vec::with_capacity(points.len());
    let mut radii = Vec::with_capacity(points.len());
    for (index, &p) in points.iter().enumerate() {
        let r = center.distance(p);
        if r == 0.0 {
            return Err(ContourError::DegenerateAngle { index });
        }
        angles.push(polar_angle(center, p));
        radii.push(r);
    }
    PolarSamples::new(angles, radii)
}

/// `m x (N+1)^2` matrix whose row `i` is the basis evaluated at `angles[i]`.
pub fn design_matrix(angles: &[f64], basis: &BasisSpec) -> DMatrix<f64> {
    let cols = basis.len();
    let mut row = vec![0.0; cols];
    let mut x = DMatrix::zeros(angles.len(), cols);
    for (i, &theta) in angles.iter().enumerate() {
        basis.eval_into(theta, &mut row);
        for (j, &v) in row.iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    x
}

/// Minimum-norm least-squares coefficients for `radii ~ X(angles) beta`.
pub fn fit_contour(samples: &PolarSamples, basis: &BasisSpec) -> Result<Vec<f64>, ContourError> {
    let x = design_matrix(&samples.angles, basis);
    let y = DVector::from_column_slice(&samples.radii);
    let svd = x.svd(true, true);
    let sigma_max = svd.singular_values.max();
    let beta = svd
        .solve(&y, SVD_RELATIVE_CUTOFF * sigma_max)
        .map_err(ContourError::Solve)?;
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(ContourError::NonFinite("fitted coefficients"));
    }
    Ok(beta.iter().copied().collect())
}

/// Sum of squared radius residuals of `beta` on `samples`.
pub fn residual_sum_squares(samples: &PolarSamples, basis: &BasisSpec, beta: &[f64]) -> f64 {
    let mut row = vec![0.0; basis.len()];
    samples
        .angles
        .iter()
        .zip(&samples.radii)
        .map(|(&theta, &r)| {
            basis.eval_into(theta, &mut row);
            let fitted: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            (fitted - r).powi(2)
        })
        .sum()
}

/// Coefficients and center of a polar contour.
///
/// Serialized as `{"n":5,"beta":[...36 floats],"center":[cx,cy]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ContourModelWire", into = "ContourModelWire")]
pub struct ContourModel {
    basis: BasisSpec,
    beta: Vec<f64>,
    pub center: Point,
}

#[derive(Serialize, Deserialize)]
struct ContourModelWire {
    n: u32,
    beta: Vec<f64>,
    center: [f64; 2],
}

impl TryFrom<ContourModelWire> for ContourModel {
    type Error = ContourError;

    fn try_from(w: ContourModelWire) -> Result<Self, Self::Error> {
        ContourModel::new(BasisSpec::new(w.n), w.beta, Point::new(w.center[0], w.center[1]))
    }
}

impl From<ContourModel> for ContourModelWire {
    fn from(m: ContourModel) -> Self {
        Self {
            n: m.basis.n,
            beta: m.beta,
            center: [m.center.x, m.center.y],
        }
    }
}

impl ContourModel {
    pub fn new(basis: BasisSpec, beta: Vec<f64>, center: Point) -> Result<Self, ContourError> {
        if beta.len() != basis.len() {
            return Err(ContourError::BasisMismatch {
                expected: basis.len(),
                actual: beta.len(),
            });
        }
        if beta.iter().any(|v| !v.is_finite()) || !center.is_finite() {
            return Err(ContourError::NonFinite("contour model"));
        }
        Ok(Self { basis, beta, center })
    }

    /// A circle of radius `r`: only the constant coefficient is set.
    pub fn circle(basis: BasisSpec, r: f64, center: Point) -> Self {
        let mut beta = vec![0.0; basis.len()];
        beta[0] = r;
        Self { basis, beta, center }
    }

    /// Fits a model to contour points around a fixed center.
    pub fn fit(points: &PointSet, center: Point, basis: BasisSpec) -> Result<Self, ContourError> {
        let samples = contour_to_polar(points, center)?;
        let beta = fit_contour(&samples, &basis)?;
        Self::new(basis, beta, center)
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn beta_mut(&mut self) -> &mut [f64] {
        &mut self.beta
    }

    pub fn radius_at(&self, theta: f64) -> f64 {
        radius_at(self, theta)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("contour model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

pub fn radius_at(model: &ContourModel, theta: f64) -> f64 {
    model
        .basis
        .eval(theta)
        .iter()
        .zip(&model.beta)
        .map(|(a, b)| a * b)
        .sum()
}

/// Boundary points at `K` equally spaced angles.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub points: PointSet,
    /// Set when some reconstructed radius was negative and clamped to 0.
    pub clamped: bool,
}

/// Points `(cx + r_k cos theta_k, cy + r_k sin theta_k)` at
/// `theta_k = 2 pi k / K`. Negative radii clamp to 0 and set the flag.
pub fn reconstruct_contour(model: &ContourModel, k: usize) -> Result<Reconstruction, ContourError> {
    if k < 3 {
        return Err(ContourError::TooFewAngles(k));
    }
    let angles: Vec<f64> = (0..k).map(|i| TAU * i as f64 / k as f64).collect();
    Ok(reconstruct_at(model, &angles))
}

/// Reconstructs the boundary at arbitrary angles.
pub fn reconstruct_at(model: &ContourModel, angles: &[f64]) -> Reconstruction {
    let mut clamped = false;
    let points = angles
        .iter()
        .map(|&theta| {
            let mut r = radius_at(model, theta);
            if r < 0.0 {
                clamped = true;
                r = 0.0;
            }
            let (sin, cos) = theta.sin_cos();
            Point::new(model.center.x + r * cos, model.center.y + r * sin)
        })
        .collect();
    if clamped {
        log::warn!("negative reconstructed radius clamped to 0");
    }
    Reconstruction { points, clamped }
}

#[cfg(test)]
mod tests;
