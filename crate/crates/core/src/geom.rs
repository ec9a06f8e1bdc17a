//! Points and ordered point sets.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// A point in image coordinates: `x` grows to the right, `y` grows downward.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PointIoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("expected header \"x,y\", found {0:?}")]
    Header(String),
}

/// Ordered list of points, e.g. a contour traversal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointSet(pub Vec<Point>);

impl PointSet {
    pub fn new(points: Vec<Point>) -> Self {
        Self(points)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.0.iter()
    }

    /// Arithmetic mean of the points, `None` when empty.
    pub fn centroid(&self) -> Option<Point> {
        if self.0.is_empty() {
            return None;
        }
        let n = self.0.len() as f64;
        let (sx, sy) = self.0.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Some(Point::new(sx / n, sy / n))
    }

    /// Writes the points as CSV with header `x,y`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), PointIoError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "y"])?;
        for p in &self.0 {
            w.write_record([p.x.to_string(), p.y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, PointIoError> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "y" {
            return Err(PointIoError::Header(headers.iter().collect::<Vec<_>>().join(",")));
        }
        let mut points = Vec::new();
        for record in r.deserialize() {
            let (x, y): (f64, f64) = record?;
            points.push(Point::new(x, y));
        }
        Ok(Self(points))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PointIoError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PointIoError> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

impl From<Vec<Point>> for PointSet {
    fn from(points: Vec<Point>) -> Self {
        Self(points)
    }
}

impl FromIterator<Point> for PointSet {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a PointSet {
    type Item = &'a Point;
    type IntoIter = std::slice::Iter<'a, Point>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}
