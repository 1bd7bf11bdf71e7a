use super::Operator;
use crate::error::{Error, Result};
use crate::point::Point;

/// A convex inequality `f(x) <= 0` with a subgradient selection
/// `s(x) ∈ ∂f(x)`. At nondifferentiable points the selection is the
/// implementor's choice.
pub trait InequalityConstraint: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &Point) -> f64;

    fn subgradient(&self, x: &Point) -> Point;

    /// `f(x)` and, when `f(x) > 0`, `s(x)`. Override when both share work.
    fn value_and_subgradient(&self, x: &Point) -> (f64, Option<Point>) {
        let v = self.value(x);
        if v > 0.0 {
            (v, Some(self.subgradient(x)))
        } else {
            (v, None)
        }
    }
}

/// `x - f(x)/|s(x)|^2 s(x)` when `f(x) > 0`, otherwise `x`.
pub fn subgradient_projector<C: InequalityConstraint + ?Sized>(c: &C, x: &Point) -> Result<Point> {
    if x.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            found: x.dim(),
        });
    }
    match c.value_and_subgradient(x) {
        (v, Some(s)) if v > 0.0 => {
            let norm_sq = s.norm_sq();
            if norm_sq == 0.0 {
                return Err(Error::DegenerateConstraint { value: v });
            }
            Ok(x.add_scaled(-v / norm_sq, &s))
        }
        (v, _) if v.is_nan() => Err(Error::NonFinite("constraint value")),
        _ => Ok(x.clone()),
    }
}

/// Operator form of [`subgradient_projector`]; its fixed set is `{f <= 0}`.
pub struct SubgradientProjector<C> {
    constraint: C,
}

impl<C: InequalityConstraint> SubgradientProjector<C> {
    pub fn new(constraint: C) -> Self {
        SubgradientProjector { constraint }
    }

    pub fn constraint(&self) -> &C {
        &self.constraint
    }
}

impl<C: InequalityConstraint> Operator for SubgradientProjector<C> {
    fn dim(&self) -> usize {
        self.constraint.dim()
    }

    fn apply(&self, x: &Point) -> Result<Point> {
        subgradient_projector(&self.constraint, x)
    }

    fn contains(&self, x: &Point) -> Option<bool> {
        Some(self.constraint.value(x) <= 0.0)
    }
}

/// `f(x) = |x - center|^2 - radius^2`, gradient `2 (x - center)`.
#[derive(Debug, Clone)]
pub struct BallConstraint {
    pub center: Point,
    pub radius: f64,
}

impl InequalityConstraint for BallConstraint {
    fn dim(&self) -> usize {
        self.center.dim()
    }

    fn value(&self, x: &Point) -> f64 {
        x.distance_sq(&self.center) - self.radius * self.radius
    }

    fn subgradient(&self, x: &Point) -> Point {
        x.sub(&self.center).scaled(2.0)
    }
}

/// `f = d_C` for the half-space `C = {<a, z> <= b}`; the selection is the
/// unit normal outside `C` and zero inside.
#[derive(Debug, Clone)]
pub struct HalfSpaceDistance {
    a: Point,
    b: f64,
    norm: f64,
}

impl HalfSpaceDistance {
    pub fn new(a: Point, b: f64) -> Result<Self> {
        let norm = a.norm();
        if norm == 0.0 {
            return Err(Error::invalid("half-space normal must be nonzero"));
        }
        Ok(HalfSpaceDistance { a, b, norm })
    }
}

impl InequalityConstraint for HalfSpaceDistance {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn value(&self, x: &Point) -> f64 {
        ((x.dot(&self.a) - self.b) / self.norm).max(0.0)
    }

    fn subgradient(&self, x: &Point) -> Point {
        if x.dot(&self.a) > self.b {
            self.a.scaled(1.0 / self.norm)
        } else {
            Point::zeros(self.a.dim())
        }
    }
}
