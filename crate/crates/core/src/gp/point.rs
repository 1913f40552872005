use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A location in space and time: `[x, y]` plus a time coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct SpatioTemporalPoint {
    xs: [f64; 2],
    t: f64,
}

impl SpatioTemporalPoint {
    pub fn new(x: f64, y: f64, t: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && t.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite coordinate in point ({x}, {y}, {t})"
            )));
        }
        Ok(Self { xs: [x, y], t })
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.xs[0]
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.xs[1]
    }

    #[inline]
    pub fn t(&self) -> f64 {
        self.t
    }

    #[inline]
    pub fn spatial(&self) -> [f64; 2] {
        self.xs
    }

    #[inline]
    pub fn coords(&self) -> [f64; 3] {
        [self.xs[0], self.xs[1], self.t]
    }

    /// Per-axis displacement `self - other`.
    #[inline]
    pub fn delta(&self, other: &Self) -> [f64; 3] {
        [
            self.xs[0] - other.xs[0],
            self.xs[1] - other.xs[1],
            self.t - other.t,
        ]
    }

    /// Bit pattern used for exact duplicate detection; `-0.0` and `0.0` collide.
    pub(crate) fn key(&self) -> [u64; 3] {
        let norm = |v: f64| if v == 0.0 { 0u64 } else { v.to_bits() };
        [norm(self.xs[0]), norm(self.xs[1]), norm(self.t)]
    }
}

impl TryFrom<[f64; 3]> for SpatioTemporalPoint {
    type Error = Error;

    fn try_from(c: [f64; 3]) -> Result<Self> {
        Self::new(c[0], c[1], c[2])
    }
}

impl From<SpatioTemporalPoint> for [f64; 3] {
    fn from(p: SpatioTemporalPoint) -> Self {
        p.coords()
    }
}

/// Paired input locations and scalar readings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationSet {
    points: Vec<SpatioTemporalPoint>,
    values: Vec<f64>,
}

impl ObservationSet {
    pub fn new(points: Vec<SpatioTemporalPoint>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at index {i}")));
        }
        if let Some(i) = first_duplicate(&points) {
            let p = points[i];
            return Err(Error::invalid(format!(
                "duplicate input point ({}, {}, {}) at index {i}",
                p.x(),
                p.y(),
                p.t()
            )));
        }
        Ok(Self { points, values })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[SpatioTemporalPoint] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Subset by index, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            values: idx.iter().map(|&i| self.values[i]).collect(),
        }
    }

    /// Same points, values replaced; lengths must match.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.points.clone(), values)
    }

    /// Per-axis `(min, max)` over the point set, `None` when empty.
    pub fn bounds(&self) -> Option<[(f64, f64); 3]> {
        bounds(&self.points)
    }
}

pub fn bounds(points: &[SpatioTemporalPoint]) -> Option<[(f64, f64); 3]> {
    let first = points.first()?.coords();
    let mut b = first.map(|v| (v, v));
    for p in points {
        for (axis, v) in p.coords().into_iter().enumerate() {
            b[axis].0 = b[axis].0.min(v);
            b[axis].1 = b[axis].1.max(v);
        }
    }
    Some(b)
}

fn first_duplicate(points: &[SpatioTemporalPoint]) -> Option<usize> {
    let mut seen = HashSet::with_capacity(points.len());
    points.iter().position(|p| !seen.insert(p.key()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64, y: f64, t: f64) -> SpatioTemporalPoint {
        SpatioTemporalPoint::new(x, y, t).unwrap()
    }

    #[test]
    fn rejects_non_finite_coordinates() {
        assert!(SpatioTemporalPoint::new(f64::NAN, 0.0, 0.0).is_err());
        assert!(SpatioTemporalPoint::new(0.0, f64::INFINITY, 0.0).is_err());
        assert!(SpatioTemporalPoint::new(0.0, 0.0, f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn rejects_duplicates_and_length_mismatch() {
        let pts = vec![pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0), pt(-0.0, 0.0, 0.0)];
        assert!(ObservationSet::new(pts.clone(), vec![1.0, 2.0, 3.0]).is_err());
        assert!(ObservationSet::new(pts[..2].to_vec(), vec![1.0]).is_err());
        assert!(ObservationSet::new(pts[..2].to_vec(), vec![1.0, f64::NAN]).is_err());
        assert!(ObservationSet::new(pts[..2].to_vec(), vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn serde_as_triple() {
        let p = pt(0.1, -2.5, 3.0);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, "[0.1,-2.5,3.0]");
        let back: SpatioTemporalPoint = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn bounds_cover_all_axes() {
        let b = bounds(&[pt(0.0, 2.0, 5.0), pt(1.0, -1.0, 4.0)]).unwrap();
        assert_eq!(b, [(0.0, 1.0), (-1.0, 2.0), (4.0, 5.0)]);
        assert!(bounds(&[]).is_none());
    }
}
