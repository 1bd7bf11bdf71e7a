//! Dense real coordinate vectors.
//!
//! A [`Point`] is the single element type shared by every solver. Signals
//! are stored as length-`n` vectors and images as row-major `n * n` grids.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    /// Builds a point, rejecting NaN and infinite entries.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point coordinates"));
        }
        Ok(Point(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    /// Wraps coordinates produced by arithmetic on finite points. Callers
    /// that can overflow must check [`Point::is_finite`] afterwards.
    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn check_dim(&self, other: &Point) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &Point) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn distance_sq(&self, other: &Point) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        lane_sum(&self.0, &other.0, |a, b| (a - b) * (a - b))
    }

    pub fn distance(&self, other: &Point) -> f64 {
        self.distance_sq(other).sqrt()
    }

    /// `self - other`
    pub fn sub(&self, other: &Point) -> Point {
        debug_assert_eq!(self.dim(), other.dim());
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `self + other`
    pub fn add(&self, other: &Point) -> Point {
        debug_assert_eq!(self.dim(), other.dim());
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scaled(&self, factor: f64) -> Point {
        Point(self.0.iter().map(|v| v * factor).collect())
    }

    /// `self + factor * direction`
    pub fn add_scaled(&self, factor: f64, direction: &Point) -> Point {
        debug_assert_eq!(self.dim(), direction.dim());
        Point(
            self.0
                .iter()
                .zip(&direction.0)
                .map(|(a, d)| a + factor * d)
                .collect(),
        )
    }

    /// In-place `self += factor * direction`.
    pub fn axpy(&mut self, factor: f64, direction: &Point) {
        debug_assert_eq!(self.dim(), direction.dim());
        for (a, d) in self.0.iter_mut().zip(&direction.0) {
            *a += factor * d;
        }
    }

    /// `self + lambda * (target - self)`
    pub fn relaxed_toward(&self, lambda: f64, target: &Point) -> Point {
        debug_assert_eq!(self.dim(), target.dim());
        Point(
            self.0
                .iter()
                .zip(&target.0)
                .map(|(x, t)| x + lambda * (t - x))
                .collect(),
        )
    }

    /// In-place `self += factor * (u - v)`.
    pub(crate) fn axpy_diff(&mut self, factor: f64, u: &Point, v: &Point) {
        debug_assert_eq!(self.dim(), u.dim());
        for ((a, ui), vi) in self.0.iter_mut().zip(&u.0).zip(&v.0) {
            *a += factor * (ui - vi);
        }
    }

    pub fn max_abs_diff(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for Point {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    lane_sum(a, b, |x, y| x * y)
}

/// `sum_i f(a_i, b_i)` with four interleaved partial sums so the loop
/// vectorizes. Inputs shorter than four reduce left to right.
#[inline]
fn lane_sum(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> f64 {
    let n = a.len().min(b.len());
    if n < 4 {
        return a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + f(*x, *y));
    }
    let (a, b) = (&a[..n], &b[..n]);
    let split = n - n % 4;
    let mut acc = [0.0f64; 4];
    for (x, y) in a[..split].chunks_exact(4).zip(b[..split].chunks_exact(4)) {
        let x: &[f64; 4] = x.try_into().unwrap();
        let y: &[f64; 4] = y.try_into().unwrap();
        acc[0] += f(x[0], y[0]);
        acc[1] += f(x[1], y[1]);
        acc[2] += f(x[2], y[2]);
        acc[3] += f(x[3], y[3]);
    }
    let tail = a[split..].iter().zip(&b[split..]).fold(0.0, |acc, (x, y)| acc + f(*x, *y));
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
