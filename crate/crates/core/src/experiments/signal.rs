//! 1-D restoration from blurred observations with bounded noise.
//!
//! Observation `k` is `r_k = L_k xbar + w_k` with `L_k` a circular Gaussian
//! blur and `w_k` uniform in `[-eta, eta]^n`. Every pair `(k, j)` gives the
//! hyperslab `{x : |(L_k x - r_k)_j| <= eta}`.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::operators::{Operator, OperatorFamily};
use crate::point::{dot, Point};
use crate::rng::{RandomStream, StreamLabel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalSpec {
    pub n: usize,
    /// Number of observations.
    pub p: usize,
    pub eta: f64,
    pub std_range: (f64, f64),
}

impl SignalSpec {
    /// `n = 256`, `p = 10`; the blur std range shrinks with the length so
    /// blur width relative to the signal matches the full-size problem.
    pub fn desk() -> Self {
        SignalSpec {
            n: 256,
            p: 10,
            eta: 0.15,
            std_range: (2.5, 7.5),
        }
    }

    pub fn paper() -> Self {
        SignalSpec {
            n: 1024,
            p: 20,
            eta: 0.15,
            std_range: (10.0, 30.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.std_range;
        if self.n < 2 {
            return Err(Error::invalid(format!("signal length must be >= 2, got {}", self.n)));
        }
        if self.p == 0 {
            return Err(Error::invalid("at least one observation is required"));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::invalid(format!("noise bound must be positive, got {}", self.eta)));
        }
        if !(lo > 0.0 && lo <= hi && hi < self.n as f64) {
            return Err(Error::invalid(format!(
                "blur std range [{lo}, {hi}] must lie in ]0, {}[",
                self.n
            )));
        }
        Ok(())
    }
}

/// Circular Gaussian kernel centered at index 0, normalized to unit sum.
pub fn gaussian_kernel_1d(n: usize, std: f64) -> Vec<f64> {
    let mut h: Vec<f64> = (0..n)
        .map(|i| {
            let d = i.min(n - i) as f64;
            (-d * d / (2.0 * std * std)).exp()
        })
        .collect();
    let total: f64 = h.iter().sum();
    for v in &mut h {
        *v /= total;
    }
    h
}

/// `(h * x)_j = sum_i h[(j - i) mod n] x_i`
pub fn circular_convolve(kernel: &[f64], x: &[f64]) -> Vec<f64> {
    let rows = circulant_rows(kernel);
    (0..x.len()).map(|j| dot(circulant_row(&rows, j), x)).collect()
}

/// `g[t] = h[(n - 1 - t) mod n]` for `t < 2n`, so that row `j` of the
/// circulant matrix of `h` is a contiguous slice of `g`.
fn circulant_rows(kernel: &[f64]) -> Vec<f64> {
    let n = kernel.len();
    (0..2 * n).map(|t| kernel[(2 * n - 1 - t) % n]).collect()
}

fn circulant_row(rows: &[f64], j: usize) -> &[f64] {
    let n = rows.len() / 2;
    &rows[n - 1 - j..2 * n - 1 - j]
}

/// Projector onto `{x : lo <= (h * x)_j <= hi}`, i.e. a hyperslab whose
/// normal is row `j` of the circulant matrix of `h`.
#[derive(Debug, Clone)]
pub struct CirculantSlab {
    /// Output of [`circulant_rows`] for the kernel.
    rows: Arc<Vec<f64>>,
    kernel_norm_sq: f64,
    row: usize,
    lo: f64,
    hi: f64,
}

impl CirculantSlab {
    pub fn level(&self, x: &Point) -> f64 {
        dot(self.normal(), x.as_slice())
    }

    /// Row `j` of the circulant matrix, the normal of the slab.
    pub fn normal(&self) -> &[f64] {
        circulant_row(&self.rows, self.row)
    }

    /// Distance outside `[lo, hi]` of the level at `x`.
    pub fn violation(&self, x: &Point) -> f64 {
        let v = self.level(x);
        (self.lo - v).max(v - self.hi).max(0.0)
    }
}

impl Operator for CirculantSlab {
    fn dim(&self) -> usize {
        self.rows.len() / 2
    }

    fn apply(&self, x: &Point) -> Result<Point> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.dim(),
            });
        }
        let level = self.level(x);
        let target = level.clamp(self.lo, self.hi);
        if target == level {
            return Ok(x.clone());
        }
        let step = (target - level) / self.kernel_norm_sq;
        let out = x
            .as_slice()
            .iter()
            .zip(self.normal())
            .map(|(xi, a)| xi + step * a)
            .collect();
        Ok(Point::from_raw(out))
    }

    fn contains(&self, x: &Point) -> Option<bool> {
        Some(self.violation(x) == 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct SignalProblem {
    pub spec: SignalSpec,
    pub stds: Vec<f64>,
    pub kernels: Vec<Arc<Vec<f64>>>,
    pub observations: Vec<Vec<f64>>,
    pub ground_truth: Point,
    pub slabs: Vec<Arc<CirculantSlab>>,
    pub family: OperatorFamily,
}

impl SignalProblem {
    /// Largest hyperslab violation at `x`.
    pub fn max_violation(&self, x: &Point) -> f64 {
        self.slabs.iter().map(|s| s.violation(x)).fold(0.0, f64::max)
    }
}

/// Seeded piecewise-polynomial test signal with peak magnitude 1.
pub fn test_signal(n: usize, seed: u64) -> Point {
    let mut s = RandomStream::new(seed, StreamLabel::Problem);
    let pieces = 8;
    let mut breaks: Vec<usize> = (0..pieces - 1).map(|_| 1 + s.index_below(n - 1)).collect();
    breaks.push(0);
    breaks.push(n);
    breaks.sort_unstable();
    let mut x = vec![0.0; n];
    for w in breaks.windows(2) {
        let (c0, c1, c2) = (s.uniform_in(-1.0, 1.0), s.uniform_in(-1.0, 1.0), s.uniform_in(-1.0, 1.0));
        let len = (w[1] - w[0]).max(1) as f64;
        for (i, v) in x.iter_mut().enumerate().take(w[1]).skip(w[0]) {
            let t = (i - w[0]) as f64 / len;
            *v = c0 + c1 * t + c2 * t * t;
        }
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Point::from_raw(x.into_iter().map(|v| v / peak).collect())
}

pub fn generate_signal_problem(spec: &SignalSpec, seed: u64) -> Result<SignalProblem> {
    spec.validate()?;
    signal_problem_from_truth(spec, test_signal(spec.n, seed), seed)
}

/// Builds observations and constraints around a given ground truth.
pub fn signal_problem_from_truth(spec: &SignalSpec, truth: Point, seed: u64) -> Result<SignalProblem> {
    spec.validate()?;
    if truth.dim() != spec.n {
        return Err(Error::DimensionMismatch {
            expected: spec.n,
            found: truth.dim(),
        });
    }
    if !truth.is_finite() {
        return Err(Error::NonFinite("ground truth signal"));
    }
    let mut draws = RandomStream::new(seed, StreamLabel::Noise);
    let (lo, hi) = spec.std_range;
    let eta = spec.eta;
    let mut stds = Vec::with_capacity(spec.p);
    let mut kernels = Vec::with_capacity(spec.p);
    let mut observations = Vec::with_capacity(spec.p);
    let mut slabs = Vec::with_capacity(spec.p * spec.n);
    for _ in 0..spec.p {
        let std = draws.uniform_in(lo, hi);
        let kernel = Arc::new(gaussian_kernel_1d(spec.n, std));
        let kernel_norm_sq = kernel.iter().map(|v| v * v).sum();
        let rows = Arc::new(circulant_rows(&kernel));
        let blurred = circular_convolve(&kernel, truth.as_slice());
        let mut obs = Vec::with_capacity(spec.n);
        for (j, level) in blurred.into_iter().enumerate() {
            let w = draws.uniform_in(-eta, eta);
            obs.push(level + w);
            // level + (w - eta) <= level by monotone rounding since w <= eta,
            // so the ground truth is feasible bit for bit
            slabs.push(Arc::new(CirculantSlab {
                rows: Arc::clone(&rows),
                kernel_norm_sq,
                row: j,
                lo: level + (w - eta),
                hi: level + (w + eta),
            }));
        }
        stds.push(std);
        kernels.push(kernel);
        observations.push(obs);
    }
    let members: Vec<Arc<dyn Operator>> = slabs
        .iter()
        .map(|s| Arc::clone(s) as Arc<dyn Operator>)
        .collect();
    let family = OperatorFamily::new(members)?;
    let problem = SignalProblem {
        spec: *spec,
        stds,
        kernels,
        observations,
        ground_truth: truth,
        slabs,
        family,
    };
    let v = problem.max_violation(&problem.ground_truth);
    if v != 0.0 {
        return Err(Error::Numeric(format!("ground truth violates a hyperslab by {v:e}")));
    }
    Ok(problem)
}

/// Raw little-endian `f32` samples.
pub fn load_signal_f32(path: &Path) -> Result<Point> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::invalid(format!(
            "{}: length {} is not a multiple of 4",
            path.display(),
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Point::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::project_hyperslab;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let h = gaussian_kernel_1d(64, 5.0);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for i in 1..64 {
            assert_eq!(h[i], h[64 - i]);
        }
    }

    #[test]
    fn convolution_matches_dense_matrix() {
        let n = 16;
        let h: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let x: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let fast = circular_convolve(&h, &x);
        for j in 0..n {
            let dense: f64 = (0..n).map(|i| h[(j + n - i) % n] * x[i]).sum();
            assert!((fast[j] - dense).abs() < 1e-13);
        }
    }

    #[test]
    fn slab_matches_generic_hyperslab_projection() {
        let spec = SignalSpec {
            n: 32,
            p: 2,
            eta: 0.1,
            std_range: (2.0, 4.0),
        };
        let prob = generate_signal_problem(&spec, 4).unwrap();
        let mut s = RandomStream::new(1, StreamLabel::Audit);
        let x = Point::new((0..32).map(|_| s.uniform_in(-2.0, 2.0)).collect()).unwrap();
        for (idx, slab) in prob.slabs.iter().enumerate().step_by(7) {
            let n = 32;
            let h = &prob.kernels[idx / n];
            let a = Point::new((0..n).map(|i| h[(n + slab.row - i) % n]).collect()).unwrap();
            let want = project_hyperslab(&a, slab.lo, slab.hi, &x).unwrap();
            assert!(slab.apply(&x).unwrap().max_abs_diff(&want) < 1e-12);
        }
    }

    #[test]
    fn desk_problem_is_feasible() {
        let prob = generate_signal_problem(&SignalSpec::desk(), 0).unwrap();
        assert_eq!(prob.family.len(), 2560);
        assert_eq!(prob.max_violation(&prob.ground_truth), 0.0);
        let peak = prob.ground_truth.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(peak, 1.0);
        assert!(prob.stds.iter().all(|s| (2.5..=7.5).contains(s)));
        for (k, obs) in prob.observations.iter().enumerate() {
            let clean = circular_convolve(&prob.kernels[k], prob.ground_truth.as_slice());
            assert!(obs.iter().zip(&clean).all(|(r, c)| (r - c).abs() <= 0.15 + 1e-15));
        }
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            SignalSpec { eta: 0.0, ..SignalSpec::desk() },
            SignalSpec { p: 0, ..SignalSpec::desk() },
            SignalSpec { std_range: (10.0, 300.0), ..SignalSpec::desk() },
        ];
        for spec in bad {
            assert!(generate_signal_problem(&spec, 0).is_err());
        }
    }

    #[test]
    fn f32_loader() {
        let dir = std::env::temp_dir().join(format!("stochfeas-f32-{}", std::process::id()));
        let vals = [1.5f32, -0.25, 3.0];
        let bytes: Vec<u8> = vals.iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(&dir, bytes).unwrap();
        let p = load_signal_f32(&dir).unwrap();
        std::fs::remove_file(&dir).unwrap();
        assert_eq!(p.as_slice(), &[1.5, -0.25, 3.0]);
    }
}
