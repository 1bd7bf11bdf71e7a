//! Small feasibility problems with known solution sets.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::operators::{HalfSpace, Operator, OperatorFamily};
use crate::point::Point;
use crate::rng::{RandomStream, StreamLabel};

/// `C_1 = {x_1 <= 0}` and `C_2 = {x_2 <= 0}` in the plane.
pub fn quadrant_family() -> OperatorFamily {
    let members: Vec<Arc<dyn Operator>> = [[1.0, 0.0], [0.0, 1.0]]
        .into_iter()
        .map(|a| {
            let h = HalfSpace::new(Point::from_raw(a.to_vec()), 0.0).expect("nonzero normal");
            Arc::new(h) as Arc<dyn Operator>
        })
        .collect();
    OperatorFamily::new(members).expect("two members")
}

/// Distance from `x` to the nonpositive quadrant.
pub fn quadrant_distance(x: &Point) -> f64 {
    x.as_slice().iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt()
}

/// Half-spaces `<a_i, z> <= b_i` whose intersection contains the ball
/// `B(center, radius)`.
#[derive(Clone)]
pub struct HalfSpaceProblem {
    pub halfspaces: Vec<Arc<HalfSpace>>,
    pub center: Point,
    pub radius: f64,
    pub family: OperatorFamily,
}

impl HalfSpaceProblem {
    /// `k` points drawn uniformly from the inscribed ball, hence in `Z`.
    pub fn sample_witnesses(&self, k: usize, stream: &mut RandomStream) -> Vec<Point> {
        let dim = self.center.dim();
        (0..k)
            .map(|_| loop {
                let u = Point::from_raw((0..dim).map(|_| stream.uniform_in(-1.0, 1.0)).collect());
                if u.norm() <= 1.0 {
                    break self.center.add_scaled(self.radius, &u);
                }
            })
            .collect()
    }

    pub fn max_violation(&self, x: &Point) -> f64 {
        self.halfspaces.iter().map(|h| h.distance(x)).fold(0.0, f64::max)
    }
}

/// `count` random half-spaces in `R^dim`; every offset leaves a margin of
/// at least `0.05 |a_i|` around a random center.
pub fn random_halfspace_problem(dim: usize, count: usize, seed: u64) -> Result<HalfSpaceProblem> {
    if dim == 0 || count == 0 {
        return Err(Error::invalid("need a positive dimension and at least one half-space"));
    }
    let mut s = RandomStream::new(seed, StreamLabel::Problem);
    let center = Point::from_raw((0..dim).map(|_| s.uniform_in(-1.0, 1.0)).collect());
    let mut radius = f64::INFINITY;
    let mut halfspaces = Vec::with_capacity(count);
    for _ in 0..count {
        let a = Point::from_raw((0..dim).map(|_| s.uniform_in(-1.0, 1.0)).collect());
        let margin = s.uniform_in(0.05, 0.5);
        radius = radius.min(margin);
        let b = a.dot(&center) + margin * a.norm();
        halfspaces.push(Arc::new(HalfSpace::new(a, b)?));
    }
    // shrink slightly so rounding in the offsets cannot push witnesses out
    radius *= 1.0 - 1e-9;
    let members = halfspaces
        .iter()
        .map(|h| Arc::clone(h) as Arc<dyn Operator>)
        .collect();
    Ok(HalfSpaceProblem {
        halfspaces,
        center,
        radius,
        family: OperatorFamily::new(members)?,
    })
}
