//! Cartesian boundary loss between two polar contour models.
//!
//! Both models are evaluated at `K` equally spaced angles
//! `theta_k = 2 pi k / K`. The radius `r_k = Theta_k . beta` is turned into
//! the point `(r_k cos theta_k + cx, r_k sin theta_k + cy)` and the loss is
//! the sum over k of squared point distances, split in its x part (`f1`) and
//! y part (`f2`). Radii are not clamped here so the loss stays smooth.

use std::f64::consts::TAU;

use crate::geom::{Point, PointSet};
use crate::polarcontour::{BasisSpec, ContourError, ContourModel, DEFAULT_K};

#[derive(Debug, thiserror::Error)]
pub enum BoundaryError {
    #[error("angle count must be at least 1")]
    NoAngles,
    #[error("model has {actual} coefficients, theta matrix expects {expected}")]
    BasisMismatch { expected: usize, actual: usize },
    #[error("truth has {actual} points, theta matrix has {expected} angles")]
    PointCount { expected: usize, actual: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Contour(#[from] ContourError),
}

/// Basis evaluations at `K` equally spaced angles, one row per angle.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaMatrix {
    basis: BasisSpec,
    angles: Vec<f64>,
    cos: Vec<f64>,
    sin: Vec<f64>,
    rows: Vec<f64>,
}

pub fn theta_matrix(k: usize, basis: &BasisSpec) -> Result<ThetaMatrix, BoundaryError> {
    if k == 0 {
        return Err(BoundaryError::NoAngles);
    }
    let angles: Vec<f64> = (0..k).map(|i| TAU * i as f64 / k as f64).collect();
    let n = basis.len();
    let mut rows = vec![0.0; k * n];
    for (row, &theta) in rows.chunks_exact_mut(n).zip(&angles) {
        basis.eval_into(theta, row);
    }
    Ok(ThetaMatrix {
        basis: basis.clone(),
        cos: angles.iter().map(|t| t.cos()).collect(),
        sin: angles.iter().map(|t| t.sin()).collect(),
        angles,
        rows,
    })
}

impl ThetaMatrix {
    pub fn k(&self) -> usize {
        self.angles.len()
    }

    pub fn ncols(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.ncols();
        &self.rows[k * n..(k + 1) * n]
    }

    fn check(&self, model: &ContourModel) -> Result<(), BoundaryError> {
        if model.beta().len() != self.ncols() {
            return Err(BoundaryError::BasisMismatch {
                expected: self.ncols(),
                actual: model.beta().len(),
            });
        }
        Ok(())
    }

    /// `Theta beta`: one radius per angle.
    pub fn radii(&self, beta: &[f64]) -> Vec<f64> {
        self.rows
            .chunks_exact(self.ncols())
            .map(|row| row.iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Cartesian boundary points of a model, without radius clamping.
    pub fn points(&self, model: &ContourModel) -> Result<Vec<Point>, BoundaryError> {
        self.check(model)?;
        Ok(self
            .radii(model.beta())
            .iter()
            .enumerate()
            .map(|(k, r)| Point::new(r * self.cos[k] + model.center.x, r * self.sin[k] + model.center.y))
            .collect())
    }
}

/// The x (`f1`) and y (`f2`) halves of the boundary loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub f1: f64,
    pub f2: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.f1 + self.f2
    }
}

/// Loss of a predicted model against explicit truth points, one per angle.
pub fn boundary_loss_to_points(truth: &[Point], pred: &ContourModel, theta: &ThetaMatrix) -> Result<LossParts, BoundaryError> {
    if truth.len() != theta.k() {
        return Err(BoundaryError::PointCount {
            expected: theta.k(),
            actual: truth.len(),
        });
    }
    let pred_pts = theta.points(pred)?;
    let (f1, f2) = truth
        .iter()
        .zip(&pred_pts)
        .fold((0.0, 0.0), |(f1, f2), (t, p)| (f1 + (t.x - p.x).powi(2), f2 + (t.y - p.y).powi(2)));
    Ok(LossParts { f1, f2 })
}

pub fn boundary_loss_parts(truth: &ContourModel, pred: &ContourModel, theta: &ThetaMatrix) -> Result<LossParts, BoundaryError> {
    boundary_loss_to_points(&theta.points(truth)?, pred, theta)
}

pub fn boundary_loss(truth: &ContourModel, pred: &ContourModel, theta: &ThetaMatrix) -> Result<f64, BoundaryError> {
    Ok(boundary_loss_parts(truth, pred, theta)?.total())
}

/// Mean boundary loss over `(truth, pred)` pairs.
pub fn boundary_loss_batch(pairs: &[(ContourModel, ContourModel)], theta: &ThetaMatrix) -> Result<f64, BoundaryError> {
    if pairs.is_empty() {
        return Err(BoundaryError::EmptyBatch);
    }
    let mut sum = 0.0;
    for (t, p) in pairs {
        sum += boundary_loss(t, p, theta)?;
    }
    Ok(sum / pairs.len() as f64)
}

/// Gradient with respect to the predicted coefficients and center.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradient {
    pub beta: Vec<f64>,
    pub center: [f64; 2],
}

impl ModelGradient {
    /// Flattened as `[beta..., d/dcx, d/dcy]` (38 entries for N = 5).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.extend_from_slice(&self.center);
        v
    }

    pub fn norm(&self) -> f64 {
        self.to_vec().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn boundary_loss_grad_to_points(truth: &[Point], pred: &ContourModel, theta: &ThetaMatrix) -> Result<ModelGradient, BoundaryError> {
    if truth.len() != theta.k() {
        return Err(BoundaryError::PointCount {
            expected: theta.k(),
            actual: truth.len(),
        });
    }
    let pred_pts = theta.points(pred)?;
    let n = theta.ncols();
    let mut beta = vec![0.0; n];
    let mut center = [0.0; 2];
    for (k, (t, p)) in truth.iter().zip(&pred_pts).enumerate() {
        let (ex, ey) = (t.x - p.x, t.y - p.y);
        // d/dr_k of (ex^2 + ey^2) with r_k entering p through cos/sin
        let dr = -2.0 * (ex * theta.cos[k] + ey * theta.sin[k]);
        for (g, &x) in beta.iter_mut().zip(theta.row(k)) {
            *g += dr * x;
        }
        center[0] -= 2.0 * ex;
        center[1] -= 2.0 * ey;
    }
    Ok(ModelGradient { beta, center })
}

pub fn boundary_loss_grad(truth: &ContourModel, pred: &ContourModel, theta: &ThetaMatrix) -> Result<ModelGradient, BoundaryError> {
    boundary_loss_grad_to_points(&theta.points(truth)?, pred, theta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentConfig {
    pub steps: usize,
    pub rate: f64,
    /// Stop once a step improves the loss by less than this.
    pub tolerance: f64,
    pub k: usize,
    /// Keep the center fixed and descend on the coefficients only.
    pub freeze_center: bool,
    /// Consecutive loss increases that count as divergence.
    pub patience: usize,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            rate: 1e-3,
            tolerance: 1e-10,
            k: DEFAULT_K,
            freeze_center: false,
            patience: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescentStatus {
    Converged,
    MaxSteps,
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentFit {
    /// Lowest-loss iterate seen.
    pub model: ContourModel,
    pub loss: f64,
    pub steps: usize,
    pub status: DescentStatus,
}

/// Gradient descent from `init` toward explicit truth points.
pub fn descend(truth: &[Point], init: ContourModel, theta: &ThetaMatrix, config: &DescentConfig) -> Result<DescentFit, BoundaryError> {
    let mut model = init;
    let mut loss = boundary_loss_to_points(truth, &model, theta)?.total();
    let mut best = (loss, model.clone());
    let mut increases = 0;
    let mut status = DescentStatus::MaxSteps;
    let mut steps = 0;
    if loss == 0.0 {
        return Ok(DescentFit {
            model,
            loss,
            steps,
            status: DescentStatus::Converged,
        });
    }
    while steps < config.steps {
        let grad = boundary_loss_grad_to_points(truth, &model, theta)?;
        for (b, g) in model.beta_mut().iter_mut().zip(&grad.beta) {
            *b -= config.rate * g;
        }
        if !config.freeze_center {
            model.center.x -= config.rate * grad.center[0];
            model.center.y -= config.rate * grad.center[1];
        }
        steps += 1;
        let next = boundary_loss_to_points(truth, &model, theta)?.total();
        if !next.is_finite() {
            status = DescentStatus::Diverged;
            break;
        }
        if next < best.0 {
            best = (next, model.clone());
        }
        if next > loss {
            increases += 1;
            if increases >= config.patience {
                status = DescentStatus::Diverged;
                break;
            }
        } else {
            increases = 0;
            if loss - next < config.tolerance {
                status = DescentStatus::Converged;
                break;
            }
        }
        loss = next;
    }
    if status == DescentStatus::Diverged {
        log::warn!("boundary descent diverged after {steps} steps");
    }
    Ok(DescentFit {
        model: best.1,
        loss: best.0,
        steps,
        status,
    })
}

/// Descent toward another model's boundary (the model-to-model loss).
pub fn fit_model_by_descent(
    truth: &ContourModel,
    init: ContourModel,
    config: &DescentConfig,
) -> Result<DescentFit, BoundaryError> {
    let theta = theta_matrix(config.k, truth.basis())?;
    descend(&theta.points(truth)?, init, &theta, config)
}

/// Fits a contour model to target points by gradient descent on the
/// boundary loss: the target is first fitted by least squares around
/// `center_init`, then descent starts from zero coefficients at
/// `center_init` and moves toward that model's boundary.
pub fn fit_by_descent(
    target: &PointSet,
    center_init: Point,
    basis: &BasisSpec,
    config: &DescentConfig,
) -> Result<DescentFit, BoundaryError> {
    let truth = ContourModel::fit(target, center_init, basis.clone())?;
    let init = ContourModel::new(basis.clone(), vec![0.0; basis.len()], center_init)?;
    fit_model_by_descent(&truth, init, config)
}
