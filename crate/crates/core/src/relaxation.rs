//! Relaxation-value distributions.
//!
//! A [`RelaxationStrategy`] is a law for the relaxation parameter drawn at
//! every iteration. Moments are closed-form; sampling happens only inside
//! the solvers, from a dedicated relaxation stream.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RelaxationKind {
    Constant(f64),
    /// `a` with probability `p_a`, otherwise `b`.
    TwoPoint { a: f64, p_a: f64, b: f64 },
    UniformInterval { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StrategyRepr", into = "StrategyRepr")]
pub struct RelaxationStrategy {
    kind: RelaxationKind,
    cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationMoments {
    /// `E[lambda]`
    pub mean: f64,
    /// `E[lambda^2]`
    pub second_moment: f64,
    /// `E[lambda (2 - lambda)] = 2 mean - second_moment`
    pub damping: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Random super relaxations, valid when `E[lambda(2 - lambda)] >= 0`.
    SuperRelaxed,
    /// Random relaxations confined to `]0, 2[`.
    Bounded,
    /// Extrapolated block-iterative method, support in `]0, cap]`.
    BlockIterative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub accepted: bool,
    pub reason: Option<String>,
    /// `mu := E[lambda(2 - lambda)]`
    pub mu: f64,
    /// `zeta := E[lambda^2]`
    pub zeta: f64,
}

impl RelaxationStrategy {
    pub fn constant(value: f64) -> Result<Self> {
        Self::with_default_cap(RelaxationKind::Constant(value))
    }

    pub fn two_point(a: f64, p_a: f64, b: f64) -> Result<Self> {
        Self::with_default_cap(RelaxationKind::TwoPoint { a, p_a, b })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::with_default_cap(RelaxationKind::UniformInterval { lo, hi })
    }

    /// The four strategies compared in the restoration experiments:
    /// `1.0`, `1.9`, `{1.5, 2.3}` with equal odds, and `uniform[1.5, 2.3]`.
    pub fn experiment_set() -> Vec<RelaxationStrategy> {
        vec![
            Self::constant(1.0).unwrap(),
            Self::constant(1.9).unwrap(),
            Self::two_point(2.3, 0.5, 1.5).unwrap(),
            Self::uniform(1.5, 2.3).unwrap(),
        ]
    }

    fn with_default_cap(kind: RelaxationKind) -> Result<Self> {
        validate_kind(&kind)?;
        let cap = support_bounds(&kind).1.max(2.0);
        Ok(RelaxationStrategy { kind, cap })
    }

    /// Declares an explicit cap `rho >= 2` bounding the support.
    pub fn with_cap(self, cap: f64) -> Result<Self> {
        if !(cap.is_finite() && cap >= 2.0) {
            return Err(Error::invalid(format!("relaxation cap must lie in [2, inf), got {cap}")));
        }
        let sup = self.support().1;
        if sup > cap {
            return Err(Error::invalid(format!(
                "relaxation support reaches {sup}, above the declared cap {cap}"
            )));
        }
        Ok(RelaxationStrategy { cap, ..self })
    }

    pub fn kind(&self) -> RelaxationKind {
        self.kind
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// Smallest and largest values drawn with positive probability.
    pub fn support(&self) -> (f64, f64) {
        support_bounds(&self.kind)
    }

    pub fn moments(&self) -> RelaxationMoments {
        let (mean, second_moment) = match self.kind {
            RelaxationKind::Constant(v) => (v, v * v),
            RelaxationKind::TwoPoint { a, p_a, b } => {
                (p_a * a + (1.0 - p_a) * b, p_a * a * a + (1.0 - p_a) * b * b)
            }
            RelaxationKind::UniformInterval { lo, hi } => {
                ((lo + hi) / 2.0, (lo * lo + lo * hi + hi * hi) / 3.0)
            }
        };
        RelaxationMoments {
            mean,
            second_moment,
            damping: 2.0 * mean - second_moment,
        }
    }

    /// Checks the relaxation hypotheses of `algo`. With `require_positive`,
    /// the damping `E[lambda(2 - lambda)]` must be strictly positive.
    pub fn validate_for(&self, algo: Algorithm, require_positive: bool) -> ValidationReport {
        let m = self.moments();
        let (_, sup) = self.support();
        let reject = |reason: String| ValidationReport {
            accepted: false,
            reason: Some(reason),
            mu: m.damping,
            zeta: m.second_moment,
        };
        match algo {
            Algorithm::Bounded => {
                if sup >= 2.0 {
                    return reject(format!("relaxation support reaches {sup}, outside ]0,2["));
                }
            }
            Algorithm::SuperRelaxed | Algorithm::BlockIterative => {
                if algo == Algorithm::BlockIterative && sup > self.cap {
                    return reject(format!("relaxation support exceeds cap {}", self.cap));
                }
                if m.damping < 0.0 {
                    return reject(format!("E[λ(2−λ)] = {} < 0", m.damping));
                }
            }
        }
        if require_positive && m.damping <= 0.0 {
            return reject(format!("E[λ(2−λ)] = {} is not positive", m.damping));
        }
        ValidationReport {
            accepted: true,
            reason: None,
            mu: m.damping,
            zeta: m.second_moment,
        }
    }

    pub fn sample(&self, stream: &mut RandomStream) -> f64 {
        match self.kind {
            RelaxationKind::Constant(v) => v,
            RelaxationKind::TwoPoint { a, p_a, b } => {
                if stream.uniform() < p_a {
                    a
                } else {
                    b
                }
            }
            RelaxationKind::UniformInterval { lo, hi } => stream.uniform_in(lo, hi),
        }
    }

    /// File-name friendly label, e.g. `two_point_2.3_0.5_1.5`.
    pub fn label(&self) -> String {
        self.to_string().replace(':', "_")
    }
}

fn validate_kind(kind: &RelaxationKind) -> Result<()> {
    let positive = |v: f64| v.is_finite() && v > 0.0;
    match *kind {
        RelaxationKind::Constant(v) => {
            if !positive(v) {
                return Err(Error::invalid(format!("relaxation value must be positive, got {v}")));
            }
        }
        RelaxationKind::TwoPoint { a, p_a, b } => {
            if !positive(a) || !positive(b) {
                return Err(Error::invalid("two-point relaxation values must be positive"));
            }
            if !(0.0..=1.0).contains(&p_a) {
                return Err(Error::invalid(format!("probability p_a must lie in [0,1], got {p_a}")));
            }
        }
        RelaxationKind::UniformInterval { lo, hi } => {
            if !positive(lo) || !hi.is_finite() || lo >= hi {
                return Err(Error::invalid(format!(
                    "uniform relaxation needs 0 < lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
    }
    Ok(())
}

fn support_bounds(kind: &RelaxationKind) -> (f64, f64) {
    match *kind {
        RelaxationKind::Constant(v) => (v, v),
        RelaxationKind::TwoPoint { a, p_a, b } => {
            if p_a == 1.0 {
                (a, a)
            } else if p_a == 0.0 {
                (b, b)
            } else {
                (a.min(b), a.max(b))
            }
        }
        RelaxationKind::UniformInterval { lo, hi } => (lo, hi),
    }
}

/// Shorthand grammar: `const:<v>`, `two_point:<a>:<pa>:<b>`, `uniform:<lo>:<hi>`.
impl FromStr for RelaxationStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| -> Result<f64> {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("not a number in relaxation `{s}`: `{t}`")))
        };
        match parts.as_slice() {
            ["const", v] => Self::constant(num(v)?),
            ["two_point", a, pa, b] => Self::two_point(num(a)?, num(pa)?, num(b)?),
            ["uniform", lo, hi] => Self::uniform(num(lo)?, num(hi)?),
            _ => Err(Error::invalid(format!(
                "unrecognized relaxation `{s}`; expected const:<v>, two_point:<a>:<pa>:<b> or uniform:<lo>:<hi>"
            ))),
        }
    }
}

impl fmt::Display for RelaxationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            RelaxationKind::Constant(v) => write!(f, "const:{v}"),
            RelaxationKind::TwoPoint { a, p_a, b } => write!(f, "two_point:{a}:{p_a}:{b}"),
            RelaxationKind::UniformInterval { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum StrategyRepr {
    #[serde(rename = "const")]
    Constant {
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<f64>,
    },
    TwoPoint {
        a: f64,
        p_a: f64,
        b: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<f64>,
    },
    Uniform {
        lo: f64,
        hi: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<f64>,
    },
}

impl TryFrom<StrategyRepr> for RelaxationStrategy {
    type Error = Error;

    fn try_from(repr: StrategyRepr) -> Result<Self> {
        let (strategy, cap) = match repr {
            StrategyRepr::Constant { value, cap } => (Self::constant(value)?, cap),
            StrategyRepr::TwoPoint { a, p_a, b, cap } => (Self::two_point(a, p_a, b)?, cap),
            StrategyRepr::Uniform { lo, hi, cap } => (Self::uniform(lo, hi)?, cap),
        };
        match cap {
            Some(c) => strategy.with_cap(c),
            None => Ok(strategy),
        }
    }
}

impl From<RelaxationStrategy> for StrategyRepr {
    fn from(s: RelaxationStrategy) -> Self {
        let default_cap = support_bounds(&s.kind).1.max(2.0);
        let cap = (s.cap != default_cap).then_some(s.cap);
        match s.kind {
            RelaxationKind::Constant(value) => StrategyRepr::Constant { value, cap },
            RelaxationKind::TwoPoint { a, p_a, b } => StrategyRepr::TwoPoint { a, p_a, b, cap },
            RelaxationKind::UniformInterval { lo, hi } => StrategyRepr::Uniform { lo, hi, cap },
        }
    }
}
