//! Half-space cuts and relaxed projections.
//!
//! One iteration of the framework builds a cut `H = {z : <z, t*> <= eta}`,
//! computes the projection coefficient `alpha`, forms `d = alpha * t*` and
//! moves to `x - lambda * d`. When `<x, t*> > eta` and `t* != 0`, the point
//! `x - d` is the metric projection of `x` onto `H`.

use crate::error::{Error, Result};
use crate::point::Point;

/// Normals with squared norm below this are treated as zero.
pub const DEGENERATE_NORMAL_SQ: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpaceCut {
    pub t_star: Point,
    pub eta: f64,
}

impl HalfSpaceCut {
    pub fn new(t_star: Point, eta: f64) -> Result<Self> {
        if !eta.is_finite() {
            return Err(Error::NonFinite("cut offset"));
        }
        if !t_star.is_finite() {
            return Err(Error::NonFinite("cut normal"));
        }
        Ok(HalfSpaceCut { t_star, eta })
    }

    pub fn contains(&self, z: &Point) -> bool {
        z.dot(&self.t_star) <= self.eta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutStep {
    pub alpha: f64,
    pub d: Point,
    /// Set when `0 < |t*|^2 < 1e-300` forced `alpha = 0`.
    pub degenerate: bool,
}

impl CutStep {
    pub fn zero(dim: usize) -> Self {
        CutStep {
            alpha: 0.0,
            d: Point::zeros(dim),
            degenerate: false,
        }
    }
}

pub fn compute_cut_step(x: &Point, cut: &HalfSpaceCut) -> Result<CutStep> {
    x.check_dim(&cut.t_star)?;
    if !x.is_finite() {
        return Err(Error::NonFinite("iterate"));
    }
    let norm_sq = cut.t_star.norm_sq();
    // exact zero branch of the indicator 1[t* = 0]
    if norm_sq == 0.0 {
        return Ok(CutStep::zero(x.dim()));
    }
    if norm_sq < DEGENERATE_NORMAL_SQ {
        return Ok(CutStep {
            degenerate: true,
            ..CutStep::zero(x.dim())
        });
    }
    let level = x.dot(&cut.t_star);
    if level > cut.eta {
        let alpha = (level - cut.eta) / norm_sq;
        Ok(CutStep {
            alpha,
            d: cut.t_star.scaled(alpha),
            degenerate: false,
        })
    } else {
        Ok(CutStep::zero(x.dim()))
    }
}

/// `x - lambda * d`
pub fn apply_update(x: &Point, lambda: f64, step: &CutStep) -> Result<Point> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid(format!(
            "relaxation must be positive and finite, got {lambda}"
        )));
    }
    x.check_dim(&step.d)?;
    let next = x.add_scaled(-lambda, &step.d);
    if !next.is_finite() {
        return Err(Error::NonFinite("updated iterate"));
    }
    Ok(next)
}

/// `|x - z|^2 - |x_next - z|^2 - lambda (2 - lambda) |d|^2`.
///
/// Nonnegative (up to rounding) whenever `x_next = x - lambda d`,
/// `lambda` is in `]0, 2]` and `z` lies in the cut.
pub fn fejer_decrement(
    x: &Point,
    x_next: &Point,
    z: &Point,
    lambda: f64,
    step: &CutStep,
) -> Result<f64> {
    x.check_dim(x_next)?;
    x.check_dim(z)?;
    x.check_dim(&step.d)?;
    Ok(x.distance_sq(z) - x_next.distance_sq(z) - lambda * (2.0 - lambda) * step.d.norm_sq())
}
