use super::Operator;
use crate::error::{Error, Result};
use crate::geometry::{compute_cut_step, HalfSpaceCut};
use crate::point::Point;

/// Componentwise clamp of `x` to `[lo, hi]`.
pub fn project_box(lo: &Point, hi: &Point, x: &Point) -> Result<Point> {
    lo.check_dim(hi)?;
    lo.check_dim(x)?;
    if let Some(i) = (0..lo.dim()).find(|&i| lo[i] > hi[i]) {
        return Err(Error::invalid(format!(
            "box bounds inverted at coordinate {i}: {} > {}",
            lo[i], hi[i]
        )));
    }
    Ok(clamp(lo.as_slice(), hi.as_slice(), x))
}

fn clamp(lo: &[f64], hi: &[f64], x: &Point) -> Point {
    Point::from_raw(
        x.as_slice()
            .iter()
            .zip(lo.iter().zip(hi))
            .map(|(v, (l, h))| v.clamp(*l, *h))
            .collect(),
    )
}

/// Projection onto `{z : lo <= <a, z> <= hi}`.
pub fn project_hyperslab(a: &Point, lo: f64, hi: f64, x: &Point) -> Result<Point> {
    a.check_dim(x)?;
    let norm_sq = a.norm_sq();
    if norm_sq == 0.0 {
        return Err(Error::invalid("hyperslab normal must be nonzero"));
    }
    if !(lo <= hi) {
        return Err(Error::invalid(format!("hyperslab bounds inverted: {lo} > {hi}")));
    }
    Ok(hyperslab_step(a, norm_sq, lo, hi, x))
}

fn hyperslab_step(a: &Point, norm_sq: f64, lo: f64, hi: f64, x: &Point) -> Point {
    let level = a.dot(x);
    if level > hi {
        x.add_scaled(-(level - hi) / norm_sq, a)
    } else if level < lo {
        x.add_scaled(-(level - lo) / norm_sq, a)
    } else {
        x.clone()
    }
}

#[derive(Debug, Clone)]
pub struct BoxProjector {
    lo: Point,
    hi: Point,
}

impl BoxProjector {
    pub fn new(lo: Point, hi: Point) -> Result<Self> {
        // validates bounds
        project_box(&lo, &hi, &lo)?;
        Ok(BoxProjector { lo, hi })
    }

    /// The box `[lo, hi]^dim`.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(Point::new(vec![lo; dim])?, Point::new(vec![hi; dim])?)
    }

    /// Largest coordinate distance outside the box; zero inside.
    pub fn violation(&self, x: &Point) -> f64 {
        x.as_slice()
            .iter()
            .zip(self.lo.as_slice().iter().zip(self.hi.as_slice()))
            .map(|(v, (l, h))| (l - v).max(v - h).max(0.0))
            .fold(0.0, f64::max)
    }
}

impl Operator for BoxProjector {
    fn dim(&self) -> usize {
        self.lo.dim()
    }

    fn apply(&self, x: &Point) -> Result<Point> {
        self.lo.check_dim(x)?;
        Ok(clamp(self.lo.as_slice(), self.hi.as_slice(), x))
    }

    fn contains(&self, x: &Point) -> Option<bool> {
        Some(self.violation(x) == 0.0)
    }
}

/// `{z : <a, z> <= b}`, projected through the half-space cut step.
#[derive(Debug, Clone)]
pub struct HalfSpace {
    cut: HalfSpaceCut,
}

impl HalfSpace {
    pub fn new(a: Point, b: f64) -> Result<Self> {
        if a.norm_sq() == 0.0 {
            return Err(Error::invalid("half-space normal must be nonzero"));
        }
        Ok(HalfSpace {
            cut: HalfSpaceCut::new(a, b)?,
        })
    }

    pub fn normal(&self) -> &Point {
        &self.cut.t_star
    }

    pub fn offset(&self) -> f64 {
        self.cut.eta
    }

    pub fn distance(&self, x: &Point) -> f64 {
        ((x.dot(&self.cut.t_star) - self.cut.eta) / self.cut.t_star.norm()).max(0.0)
    }
}

impl Operator for HalfSpace {
    fn dim(&self) -> usize {
        self.cut.t_star.dim()
    }

    fn apply(&self, x: &Point) -> Result<Point> {
        let step = compute_cut_step(x, &self.cut)?;
        Ok(x.sub(&step.d))
    }

    fn contains(&self, x: &Point) -> Option<bool> {
        let slack = level_slack(&self.cut.t_star, x, self.cut.eta);
        Some(x.dot(&self.cut.t_star) <= self.cut.eta + slack)
    }
}

#[derive(Debug, Clone)]
pub struct Hyperslab {
    a: Point,
    norm_sq: f64,
    lo: f64,
    hi: f64,
}

impl Hyperslab {
    pub fn new(a: Point, lo: f64, hi: f64) -> Result<Self> {
        project_hyperslab(&a, lo, hi, &a)?;
        let norm_sq = a.norm_sq();
        Ok(Hyperslab { a, norm_sq, lo, hi })
    }
}

impl Operator for Hyperslab {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn apply(&self, x: &Point) -> Result<Point> {
        self.a.check_dim(x)?;
        Ok(hyperslab_step(&self.a, self.norm_sq, self.lo, self.hi, x))
    }

    fn contains(&self, x: &Point) -> Option<bool> {
        let level = self.a.dot(x);
        let slack = level_slack(&self.a, x, self.lo.abs().max(self.hi.abs()));
        Some(level >= self.lo - slack && level <= self.hi + slack)
    }
}

/// Rounding allowance for a membership test on `<a, x>`, so that
/// projected points are reported as members.
fn level_slack(a: &Point, x: &Point, bound: f64) -> f64 {
    1e-12 * (a.norm() * x.norm() + bound.abs())
}
