use std::sync::Arc;

use super::Operator;
use crate::error::{Error, Result};
use crate::point::Point;
use crate::rng::RandomStream;

/// Categorical law over `{0, ..., n - 1}`.
#[derive(Debug, Clone, PartialEq)]
pub enum IndexDistribution {
    Uniform(usize),
    Weighted { cumulative: Vec<f64> },
}

impl IndexDistribution {
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("index set must be nonempty"));
        }
        Ok(IndexDistribution::Uniform(n))
    }

    /// Weights must be nonnegative and sum to one within `1e-12`.
    pub fn weighted(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("index set must be nonempty"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("index weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("index weights sum to {total}, not 1")));
        }
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(IndexDistribution::Weighted { cumulative })
    }

    pub fn len(&self) -> usize {
        match self {
            IndexDistribution::Uniform(n) => *n,
            IndexDistribution::Weighted { cumulative } => cumulative.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn probability(&self, k: usize) -> f64 {
        match self {
            IndexDistribution::Uniform(n) => 1.0 / *n as f64,
            IndexDistribution::Weighted { cumulative } => {
                cumulative[k] - if k == 0 { 0.0 } else { cumulative[k - 1] }
            }
        }
    }

    pub fn sample(&self, stream: &mut RandomStream) -> usize {
        match self {
            IndexDistribution::Uniform(n) => stream.index_below(*n),
            IndexDistribution::Weighted { cumulative } => {
                let u = stream.uniform() * cumulative[cumulative.len() - 1];
                let k = cumulative.partition_point(|&c| c <= u);
                // skip zero-probability tail entries hit by rounding
                k.min(cumulative.len() - 1)
            }
        }
    }
}

/// A finite indexed family of firmly quasinonexpansive operators with a
/// law for the random index.
#[derive(Clone)]
pub struct OperatorFamily {
    members: Vec<Arc<dyn Operator>>,
    distribution: IndexDistribution,
}

impl std::fmt::Debug for OperatorFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorFamily")
            .field("members", &self.members.len())
            .field("distribution", &self.distribution)
            .finish()
    }
}

impl OperatorFamily {
    /// Uniform index law.
    pub fn new(members: Vec<Arc<dyn Operator>>) -> Result<Self> {
        let distribution = IndexDistribution::uniform(members.len())?;
        Self::with_distribution(members, distribution)
    }

    pub fn with_distribution(
        members: Vec<Arc<dyn Operator>>,
        distribution: IndexDistribution,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid("operator family must have at least one member"));
        }
        if distribution.len() != members.len() {
            return Err(Error::invalid(format!(
                "{} index weights for {} operators",
                distribution.len(),
                members.len()
            )));
        }
        let dim = members[0].dim();
        if let Some(bad) = members.iter().find(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        Ok(OperatorFamily {
            members,
            distribution,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }

    pub fn member(&self, k: usize) -> &dyn Operator {
        self.members[k].as_ref()
    }

    pub fn distribution(&self) -> &IndexDistribution {
        &self.distribution
    }

    pub fn sample_index(&self, stream: &mut RandomStream) -> usize {
        self.distribution.sample(stream)
    }

    pub fn apply(&self, k: usize, x: &Point) -> Result<Point> {
        self.members[k].apply(x)
    }

    /// `max_k |T_k x - x|` over every member.
    pub fn max_residual(&self, x: &Point) -> Result<f64> {
        let mut worst = 0.0f64;
        for m in &self.members {
            worst = worst.max(m.apply(x)?.distance(x));
        }
        Ok(worst)
    }

    /// `E |T_k x - x|^2` under the index law.
    pub fn mean_squared_residual(&self, x: &Point) -> Result<f64> {
        let mut acc = 0.0;
        for (k, m) in self.members.iter().enumerate() {
            acc += self.distribution.probability(k) * m.apply(x)?.distance_sq(x);
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::HalfSpace;
    use crate::rng::StreamLabel;

    fn frequencies(dist: &IndexDistribution, draws: usize, seed: u64) -> Vec<f64> {
        let mut stream = RandomStream::new(seed, StreamLabel::Index);
        let mut counts = vec![0usize; dist.len()];
        for _ in 0..draws {
            counts[dist.sample(&mut stream)] += 1;
        }
        counts.iter().map(|&c| c as f64 / draws as f64).collect()
    }

    #[test]
    fn single_member_always_zero() {
        let d = IndexDistribution::uniform(1).unwrap();
        let mut s = RandomStream::new(0, StreamLabel::Index);
        assert!((0..100).all(|_| d.sample(&mut s) == 0));
    }

    #[test]
    fn uniform_frequencies() {
        let f = frequencies(&IndexDistribution::uniform(4).unwrap(), 100_000, 1);
        for v in f {
            assert!((v - 0.25).abs() < 0.0025);
        }
    }

    #[test]
    fn weighted_frequencies() {
        let f = frequencies(&IndexDistribution::weighted(&[0.9, 0.1]).unwrap(), 100_000, 2);
        assert!((f[0] - 0.9).abs() < 0.009);
        let d = IndexDistribution::weighted(&[0.0, 1.0, 0.0]).unwrap();
        let f = frequencies(&d, 1000, 3);
        assert_eq!(f, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn invalid_weights() {
        assert!(IndexDistribution::weighted(&[0.5, 0.4]).is_err());
        assert!(IndexDistribution::weighted(&[1.5, -0.5]).is_err());
        assert!(IndexDistribution::uniform(0).is_err());
        assert!(OperatorFamily::new(vec![]).is_err());
    }

    #[test]
    fn family_residuals() {
        let c1: Arc<dyn Operator> =
            Arc::new(HalfSpace::new(Point::new(vec![1.0, 0.0]).unwrap(), 0.0).unwrap());
        let c2: Arc<dyn Operator> =
            Arc::new(HalfSpace::new(Point::new(vec![0.0, 1.0]).unwrap(), 0.0).unwrap());
        let fam = OperatorFamily::new(vec![c1, c2]).unwrap();
        let x = Point::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(fam.max_residual(&x).unwrap(), 4.0);
        assert_eq!(fam.mean_squared_residual(&x).unwrap(), 12.5);
    }
}
