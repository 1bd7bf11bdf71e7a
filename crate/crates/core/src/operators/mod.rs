//! Firmly quasinonexpansive operators and indexed operator families.
//!
//! An operator `T` is firmly quasinonexpansive when
//! `|Tx - z|^2 + |Tx - x|^2 <= |x - z|^2` for every `x` and every fixed
//! point `z`. Exact projectors onto closed convex sets and subgradient
//! projectors both qualify. Convergence theory additionally assumes that
//! `Id - T` is demiclosed at zero; that is an analytic property of the
//! operator and is not checked at runtime.

mod family;
mod fourier;
mod projectors;
mod subgradient;

pub use family::{IndexDistribution, OperatorFamily};
pub use fourier::{project_fourier_support, Fft2, FourierSupport};
pub use projectors::{project_box, project_hyperslab, BoxProjector, HalfSpace, Hyperslab};
pub use subgradient::{
    subgradient_projector, BallConstraint, HalfSpaceDistance, InequalityConstraint,
    SubgradientProjector,
};

use crate::error::Result;
use crate::point::Point;

pub trait Operator: Send + Sync {
    fn dim(&self) -> usize;

    fn apply(&self, x: &Point) -> Result<Point>;

    /// Membership test for the fixed point set, when it is known in closed
    /// form. Used by audits and tests only.
    fn contains(&self, _x: &Point) -> Option<bool> {
        None
    }
}

/// Wraps a closure as an [`Operator`] (e.g. a nonexpansive map for the
/// Krasnosel'skii-Mann iteration).
pub struct MapOperator<F> {
    dim: usize,
    map: F,
}

impl<F> MapOperator<F>
where
    F: Fn(&Point) -> Point + Send + Sync,
{
    pub fn new(dim: usize, map: F) -> Self {
        MapOperator { dim, map }
    }
}

impl<F> Operator for MapOperator<F>
where
    F: Fn(&Point) -> Point + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &Point) -> Result<Point> {
        Ok((self.map)(x))
    }
}

/// `T2 ∘ T1`: applies `first`, then `second`.
pub struct Composition<A, B> {
    pub first: A,
    pub second: B,
}

impl<A: Operator, B: Operator> Operator for Composition<A, B> {
    fn dim(&self) -> usize {
        self.first.dim()
    }

    fn apply(&self, x: &Point) -> Result<Point> {
        self.second.apply(&self.first.apply(x)?)
    }
}
