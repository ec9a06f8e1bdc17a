//! Lesion mask determination.
//!
//! Detachment is handled at image level: a positive image gets a canonical
//! disk mask whose diameter is the image width. Atrophy masks come from two
//! class-probability maps (original and horizontally flipped input), which
//! are averaged, reduced by argmax and mapped back to the original frame.

use crate::geom::Point;
use crate::imageprep::{FrameTransform, Raster};
use crate::{MASK_BACKGROUND, MASK_FOREGROUND};

/// Score at or above which an image is declared to contain detachment.
pub const DETACHMENT_THRESHOLD: f64 = 0.5;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MaskError {
    #[error("probability maps differ in shape ({0:?} vs {1:?})")]
    ShapeMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("expected 2 class channels, got {0}")]
    Channels(usize),
    #[error("mask is not binary")]
    NotBinary,
    #[error("invalid frame transform {0:?}")]
    InvalidTransform(FrameTransform),
    #[error("transform maps the mask outside the {height}x{width} original frame")]
    FrameInconsistent { height: usize, width: usize },
}

/// Disk of diameter `w` centered in the image: pixels strictly closer than
/// `w / 2` to `(w / 2, h / 2)` are 0, the rest (including the circle) 255.
pub fn detachment_mask(h: usize, w: usize) -> Raster<u8> {
    let center = Point::new(w as f64 / 2.0, h as f64 / 2.0);
    let radius = w as f64 / 2.0;
    Raster::from_fn(h, w, 1, |y, x, _| {
        let d2 = (x as f64 - center.x).powi(2) + (y as f64 - center.y).powi(2);
        if d2 < radius * radius {
            MASK_FOREGROUND
        } else {
            MASK_BACKGROUND
        }
    })
}

/// Mask for a detachment score: the disk when the score reaches the
/// threshold, all background otherwise.
pub fn detachment_mask_for_score(score: f64, h: usize, w: usize) -> Raster<u8> {
    if score >= DETACHMENT_THRESHOLD {
        detachment_mask(h, w)
    } else {
        Raster::filled(h, w, 1, MASK_BACKGROUND)
    }
}

/// Class probabilities predicted for an image and for its mirror image.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMapPair {
    pub original: Raster<f32>,
    /// Prediction made on the horizontally flipped input, still flipped.
    pub flipped: Raster<f32>,
}

impl ProbMapPair {
    pub fn merge(&self) -> Result<Raster<f32>, MaskError> {
        flip_merge(&self.original, &self.flipped)
    }
}

fn dims(r: &Raster<f32>) -> (usize, usize, usize) {
    (r.height(), r.width(), r.channels())
}

/// Un-flips `flipped` and averages it with `original`, per pixel and channel.
pub fn flip_merge(original: &Raster<f32>, flipped: &Raster<f32>) -> Result<Raster<f32>, MaskError> {
    if !original.same_shape(flipped) {
        return Err(MaskError::ShapeMismatch(dims(original), dims(flipped)));
    }
    let w = original.width();
    Ok(Raster::from_fn(original.height(), w, original.channels(), |y, x, c| {
        (original.get(y, x, c) + flipped.get(y, w - 1 - x, c)) * 0.5
    }))
}

/// Per-pixel argmax over (atrophy, background): atrophy wins only when
/// strictly more probable, giving 0; otherwise 255.
pub fn argmax_mask(probs: &Raster<f32>) -> Result<Raster<u8>, MaskError> {
    if probs.channels() != 2 {
        return Err(MaskError::Channels(probs.channels()));
    }
    Ok(Raster::from_fn(probs.height(), probs.width(), 1, |y, x, _| {
        let p = probs.pixel(y, x);
        if p[0] > p[1] {
            MASK_FOREGROUND
        } else {
            MASK_BACKGROUND
        }
    }))
}

/// Slack when deciding whether a mapped pixel lies inside the mask frame.
const FRAME_EPS: f64 = 1e-6;

/// Brings a mask from a normalized frame back to an `orig_h x orig_w` image.
///
/// `transform` maps original coordinates into the mask frame (as returned by
/// the normalization). Each original pixel is mapped forward and takes the
/// nearest mask pixel; pixels that fall outside the mask frame, i.e. outside
/// the original crop window, are background.
pub fn denormalize_mask(
    mask: &Raster<u8>,
    transform: &FrameTransform,
    orig_h: usize,
    orig_w: usize,
) -> Result<Raster<u8>, MaskError> {
    if !mask.is_binary() {
        return Err(MaskError::NotBinary);
    }
    if mask.channels() != 1 {
        return Err(MaskError::Channels(mask.channels()));
    }
    if !transform.is_valid() {
        return Err(MaskError::InvalidTransform(*transform));
    }
    let (mh, mw) = (mask.height() as f64, mask.width() as f64);
    // the mask frame's corners must land inside the original image
    let top_left = transform.inverse(Point::new(0.0, 0.0));
    let bottom_right = transform.inverse(Point::new(mw - 1.0, mh - 1.0));
    let inconsistent = top_left.x < -0.5 - FRAME_EPS
        || top_left.y < -0.5 - FRAME_EPS
        || bottom_right.x > orig_w as f64 - 0.5 + FRAME_EPS
        || bottom_right.y > orig_h as f64 - 0.5 + FRAME_EPS;
    if inconsistent {
        return Err(MaskError::FrameInconsistent {
            height: orig_h,
            width: orig_w,
        });
    }

    Ok(Raster::from_fn(orig_h, orig_w, 1, |y, x, _| {
        let q = transform.forward(Point::new(x as f64, y as f64));
        let inside = q.x >= -FRAME_EPS && q.y >= -FRAME_EPS && q.x <= mw - 1.0 + FRAME_EPS && q.y <= mh - 1.0 + FRAME_EPS;
        if !inside {
            return MASK_BACKGROUND;
        }
        let mx = ((q.x + 0.5).floor() as usize).min(mask.width() - 1);
        let my = ((q.y + 0.5).floor() as usize).min(mask.height() - 1);
        mask.get(my, mx, 0)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageprep::{normalize, resize};
    use proptest::prelude::*;

    #[test]
    fn detachment_pins() {
        let m = detachment_mask(100, 100);
        assert_eq!(m.get(50, 50, 0), 0);
        assert_eq!(m.get(0, 0, 0), 255);
        // (x = 50, y = 0) sits exactly on the circle
        assert_eq!(m.get(0, 50, 0), 255);
        assert_eq!(m.get(1, 50, 0), 0);
        assert!(m.is_binary());
    }

    #[test]
    fn detachment_is_mirror_symmetric_about_its_center() {
        let m = detachment_mask(64, 100);
        let (h, w) = (64, 100);
        for y in 1..h {
            for x in 1..w {
                assert_eq!(m.get(y, x, 0), m.get(y, w - x, 0));
                assert_eq!(m.get(y, x, 0), m.get(h - y, x, 0));
            }
        }
    }

    #[test]
    fn detachment_threshold() {
        assert_eq!(detachment_mask_for_score(0.5, 10, 10), detachment_mask(10, 10));
        assert_eq!(detachment_mask_for_score(0.49, 10, 10).foreground_count(), 0);
    }

    #[test]
    fn flip_merge_examples() {
        let a = Raster::filled(3, 4, 2, 0.0f32).map(|_| 0.0f32);
        let ones = Raster::from_fn(3, 4, 2, |_, _, c| if c == 0 { 1.0f32 } else { 0.0 });
        let other = Raster::from_fn(3, 4, 2, |_, _, c| if c == 0 { 0.0f32 } else { 1.0 });
        let merged = flip_merge(&ones, &other).unwrap();
        assert!(merged.data().iter().all(|&v| v == 0.5));
        assert!(matches!(
            flip_merge(&a, &Raster::filled(3, 5, 2, 0.0f32)),
            Err(MaskError::ShapeMismatch(..))
        ));
    }

    #[test]
    fn flip_merge_matches_elementwise_reference() {
        let orig = Raster::from_fn(3, 5, 2, |y, x, c| (y * 10 + x) as f32 * 0.01 + c as f32 * 0.3);
        let flipped = Raster::from_fn(3, 5, 2, |y, x, c| ((x * 7 + y * 3 + c) % 5) as f32 * 0.2);
        let merged = flip_merge(&orig, &flipped).unwrap();
        for y in 0..3 {
            for x in 0..5 {
                for c in 0..2 {
                    let expected = (orig.get(y, x, c) + flipped.get(y, 4 - x, c)) / 2.0;
                    assert_eq!(merged.get(y, x, c), expected);
                }
            }
        }
    }

    #[test]
    fn argmax_examples() {
        let p = Raster::new(1, 3, 2, vec![0.9f32, 0.1, 0.1, 0.9, 0.5, 0.5]).unwrap();
        assert_eq!(argmax_mask(&p).unwrap().data(), &[0, 255, 255]);
        assert_eq!(argmax_mask(&Raster::filled(1, 1, 3, 0.0f32)), Err(MaskError::Channels(3)));
    }

    #[test]
    fn denormalize_identity() {
        let mask = Raster::from_fn(6, 5, 1, |y, x, _| if (x + y) % 3 == 0 { 0u8 } else { 255 });
        let out = denormalize_mask(&mask, &FrameTransform::IDENTITY, 6, 5).unwrap();
        assert_eq!(out, mask);
    }

    #[test]
    fn denormalize_after_downscale_preserves_area() {
        let src = Raster::from_fn(200, 200, 1, |y, x, _| {
            if (50..150).contains(&x) && (60..140).contains(&y) {
                0u8
            } else {
                255
            }
        });
        let (small, t) = resize(&src, 100, 100).unwrap();
        let small = small.map(|v| if v < 128 { 0u8 } else { 255 });
        let back = denormalize_mask(&small, &t, 200, 200).unwrap();
        let (a, b) = (src.foreground_count() as f64, back.foreground_count() as f64);
        assert!((a - b).abs() / a < 0.05, "{a} vs {b}");
    }

    #[test]
    fn denormalize_fills_cropped_margins() {
        // 100 wide x 60 high: the centered square crop drops 20 columns per side
        let img = Raster::filled(60, 100, 1, 0u8);
        let (norm, t) = normalize(&img, 30).unwrap();
        assert!(norm.data().iter().all(|&v| v == 0));
        let back = denormalize_mask(&norm, &t, 60, 100).unwrap();
        for y in 0..60 {
            for x in 0..100 {
                let inside = (20..80).contains(&x);
                assert_eq!(back.get(y, x, 0) == 0, inside, "({x},{y})");
            }
        }
    }

    #[test]
    fn denormalize_rejects_bad_input() {
        let mask = Raster::filled(10, 10, 1, 0u8);
        let t = FrameTransform::crop(5.0, 0.0);
        assert!(matches!(
            denormalize_mask(&mask, &t, 10, 10),
            Err(MaskError::FrameInconsistent { .. })
        ));
        let bad = FrameTransform::scale(0.0, 1.0);
        assert!(matches!(denormalize_mask(&mask, &bad, 10, 10), Err(MaskError::InvalidTransform(_))));
        let grey = Raster::filled(10, 10, 1, 3u8);
        assert_eq!(denormalize_mask(&grey, &FrameTransform::IDENTITY, 10, 10), Err(MaskError::NotBinary));
    }

    proptest! {
        #[test]
        fn flip_merge_involution(vals in proptest::collection::vec(0.0f32..1.0, 4 * 6 * 2)) {
            let x = Raster::new(4, 6, 2, vals).unwrap();
            let merged = flip_merge(&x, &x.flip_horizontal()).unwrap();
            prop_assert_eq!(merged, x);
        }

        #[test]
        fn argmax_output_is_binary(vals in proptest::collection::vec(0.0f32..1.0, 5 * 5 * 2)) {
            let p = Raster::new(5, 5, 2, vals).unwrap();
            let m = argmax_mask(&p).unwrap();
            prop_assert!(m.is_binary());
            prop_assert_eq!(m.data().len(), 25);
        }
    }
}
