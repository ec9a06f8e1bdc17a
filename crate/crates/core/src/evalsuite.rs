//! Training losses and challenge metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::imageprep::Raster;
use crate::MASK_FOREGROUND;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-7;
/// Allowed deviation of per-pixel class probabilities from summing to 1.
pub const PROB_SUM_TOL: f64 = 1e-5;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("shape mismatch ({0:?} vs {1:?})")]
    ShapeMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("class probabilities at pixel ({y}, {x}) sum to {sum}")]
    NotNormalized { y: usize, x: usize, sum: f64 },
    #[error("mask is not binary")]
    NotBinary,
    #[error("AUC-ROC is undefined: {positives} positive and {negatives} negative examples")]
    OneClass { positives: usize, negatives: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: String, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub score: f64,
    pub label: bool,
}

impl LabeledScore {
    pub fn new(score: f64, label: bool) -> Self {
        Self { score, label }
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Mean binary cross entropy with clamped scores.
pub fn bce(scores: &[LabeledScore]) -> Result<f64, MetricError> {
    if scores.is_empty() {
        return Err(MetricError::Empty);
    }
    if scores.iter().any(|s| !s.score.is_finite()) {
        return Err(MetricError::NonFinite("scores"));
    }
    let total: f64 = scores
        .iter()
        .map(|s| {
            let p = clamp_prob(s.score);
            if s.label {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum();
    Ok(-total / scores.len() as f64)
}

fn shape<T>(r: &Raster<T>) -> (usize, usize, usize)
where
    T: crate::imageprep::Sample,
{
    (r.height(), r.width(), r.channels())
}

/// Mean over pixels of `-sum_c truth_c * ln(pred_c)` for `H x W x C` maps.
pub fn categorical_ce(truth: &Raster<f32>, pred: &Raster<f32>) -> Result<f64, MetricError> {
    if !truth.same_shape(pred) {
        return Err(MetricError::ShapeMismatch(shape(truth), shape(pred)));
    }
    let pixels = truth.height() * truth.width();
    if pixels == 0 || truth.channels() == 0 {
        return Err(MetricError::Empty);
    }
    let mut total = 0.0;
    for y in 0..pred.height() {
        for x in 0..pred.width() {
            let p = pred.pixel(y, x);
            let sum: f64 = p.iter().map(|&v| f64::from(v)).sum();
            if !sum.is_finite() {
                return Err(MetricError::NonFinite("predicted probabilities"));
            }
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(MetricError::NotNormalized { y, x, sum });
            }
            total += truth
                .pixel(y, x)
                .iter()
                .zip(p)
                .map(|(&t, &q)| f64::from(t) * f64::from(q).clamp(PROB_EPS, 1.0).ln())
                .sum::<f64>();
        }
    }
    Ok(-total / pixels as f64)
}

/// Mean Euclidean distance between paired points; pairing is by position.
pub fn fovea_distance(truth: &[Point], pred: &[Point]) -> Result<f64, MetricError> {
    if truth.len() != pred.len() {
        return Err(MetricError::LengthMismatch(truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(MetricError::Empty);
    }
    let total: f64 = truth.iter().zip(pred).map(|(a, b)| a.distance(*b)).sum();
    if !total.is_finite() {
        return Err(MetricError::NonFinite("points"));
    }
    Ok(total / truth.len() as f64)
}

/// Reported as "mean Euclidean distance"; same contract as [`fovea_distance`].
pub fn mean_euclidean(truth: &[Point], pred: &[Point]) -> Result<f64, MetricError> {
    fovea_distance(truth, pred)
}

/// Pixel counts of a binary prediction against a binary truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn from_labels(truth: &[bool], pred: &[bool]) -> Result<Self, MetricError> {
        if truth.len() != pred.len() {
            return Err(MetricError::LengthMismatch(truth.len(), pred.len()));
        }
        let mut c = Confusion::default();
        for (&t, &p) in truth.iter().zip(pred) {
            c.record(t, p);
        }
        Ok(c)
    }

    /// Foreground (value 0) is the positive class.
    pub fn from_masks(truth: &Raster<u8>, pred: &Raster<u8>) -> Result<Self, MetricError> {
        check_masks(truth, pred)?;
        let mut c = Confusion::default();
        for (&t, &p) in truth.data().iter().zip(pred.data()) {
            c.record(t == MASK_FOREGROUND, p == MASK_FOREGROUND);
        }
        Ok(c)
    }

    fn record(&mut self, truth: bool, pred: bool) {
        match (truth, pred) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall, 0 when both are 0.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

impl std::ops::AddAssign for Confusion {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
        self.tn += rhs.tn;
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1(truth: &[bool], pred: &[bool]) -> Result<f64, MetricError> {
    Ok(Confusion::from_labels(truth, pred)?.f1())
}

fn check_masks(a: &Raster<u8>, b: &Raster<u8>) -> Result<(), MetricError> {
    if !a.same_shape(b) {
        return Err(MetricError::ShapeMismatch(shape(a), shape(b)));
    }
    if !a.is_binary() || !b.is_binary() {
        return Err(MetricError::NotBinary);
    }
    Ok(())
}

/// `2|A n B| / (|A| + |B|)` over foreground pixels; 1.0 when both are empty.
pub fn dice(a: &Raster<u8>, b: &Raster<u8>) -> Result<f64, MetricError> {
    check_masks(a, b)?;
    let (mut inter, mut na, mut nb) = (0u64, 0u64, 0u64);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (fa, fb) = (x == MASK_FOREGROUND, y == MASK_FOREGROUND);
        na += u64::from(fa);
        nb += u64::from(fb);
        inter += u64::from(fa && fb);
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// Area under the ROC curve as the Mann-Whitney statistic: the probability
/// that a positive outscores a negative, ties counting one half.
pub fn auc_roc(scores: &[LabeledScore]) -> Result<f64, MetricError> {
    if scores.iter().any(|s| !s.score.is_finite()) {
        return Err(MetricError::NonFinite("scores"));
    }
    let positives = scores.iter().filter(|s| s.label).count();
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::OneClass { positives, negatives });
    }
    let mut sorted: Vec<&LabeledScore> = scores.iter().collect();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));

    // sum of mid-ranks (1-based) of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1].score == sorted[i].score {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid_rank * sorted[i..=j].iter().filter(|s| s.label).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (positives as f64, negatives as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Named metric values plus counts of evaluated items.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, usize>,
}

/// Metrics that must lie in `[0, 1]`.
const UNIT_METRICS: [&str; 3] = ["dice", "f1", "auc"];

impl EvalReport {
    pub fn insert(&mut self, name: impl Into<String>, value: f64) -> Result<(), MetricError> {
        let name = name.into();
        if !value.is_finite() {
            return Err(MetricError::NonFinite("report value"));
        }
        if UNIT_METRICS.iter().any(|m| name.contains(m)) && !(0.0..=1.0).contains(&value) {
            return Err(MetricError::OutOfRange { name, value });
        }
        self.metrics.insert(name, value);
        Ok(())
    }

    pub fn count(&mut self, name: impl Into<String>, n: usize) {
        self.counts.insert(name.into(), n);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Header row of metric names then `n_<count>` columns, and one value row.
    pub fn to_csv(&self) -> String {
        let mut header: Vec<String> = self.metrics.keys().cloned().collect();
        let mut row: Vec<String> = self.metrics.values().map(|v| v.to_string()).collect();
        for (k, v) in &self.counts {
            header.push(format!("n_{k}"));
            row.push(v.to_string());
        }
        format!("{}\n{}\n", header.join(","), row.join(","))
    }
}
