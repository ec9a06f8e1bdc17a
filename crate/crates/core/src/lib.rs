//! Geometry, losses and metrics for pathological-myopia fundus analysis.
//!
//! The crate covers everything around the neural predictors; the predictors
//! themselves are treated as external and exchange data through files.
//!
//! - [`imageprep`]: rasters, square cropping, bilinear resizing, pixel
//!   rescaling, optic-disc ROI extraction and frame transforms.
//! - [`polarcontour`]: the polar trigonometric-polynomial boundary model,
//!   its minimum-norm least-squares fit, contour tracing and polygon fill.
//! - [`gridloc`]: grid-cell encoding of the optic-disc center and the
//!   weighted classification / displacement losses with gradients.
//! - [`boundaryloss`]: Cartesian boundary loss between two contour models,
//!   its gradient, and a gradient-descent contour fitter.
//! - [`lesionmasks`]: detachment circle mask and flip-averaged atrophy masks.
//! - [`evalsuite`]: cross entropies, Dice, F1, AUC-ROC and Euclidean distance.
//!
//! Mask polarity is the challenge convention throughout: `0` marks the
//! structure or lesion, `255` marks background.

pub mod boundaryloss;
pub mod evalsuite;
pub mod geom;
pub mod gridloc;
pub mod imageprep;
pub mod lesionmasks;
pub mod polarcontour;
pub mod synthetic;

pub use geom::{Point, PointSet};
pub use imageprep::{FrameTransform, Raster};
pub use polarcontour::{BasisSpec, ContourModel};

/// Pixel value for foreground (structure / lesion) in binary masks.
pub const MASK_FOREGROUND: u8 = 0;
/// Pixel value for background in binary masks.
pub const MASK_BACKGROUND: u8 = 255;
