//! Randomly relaxed Krasnosel'skii-Mann iterations and the stochastic
//! forward (Euler) method for cocoercive operators, of which stochastic
//! gradient descent is the gradient case.
//!
//! ```text
//! KM:    x_{n+1} = x_n + mu_n (T x_n + e_n - x_n)
//! Euler: x_{n+1} = x_n - gamma_n B_{k_n} x_n,  gamma_n = 2 beta / (n + 1)^nu
//! ```
//!
//! `mu_n` comes from the relaxation stream, `e_n` from the noise stream and
//! `k_n` from the index stream, so each draw is independent of the others
//! and of the past iterates.

use std::fmt::Debug;
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::operators::{IndexDistribution, Operator};
use crate::point::Point;
use crate::relaxation::RelaxationStrategy;
use crate::rng::{RandomStream, StreamLabel};
use crate::trace::{ConvergenceTrace, StopReason, TraceRow};

/// Iterates whose norm exceeds this abort the run.
pub const DIVERGENCE_GUARD: f64 = 1e12;

pub const DEFAULT_ATOL: f64 = 1e-10;

/// Additive errors `e_n` injected into an iteration.
pub trait ErrorSchedule: Debug + Send + Sync {
    /// Draws `e_n`; `None` means exactly zero.
    fn draw(&self, n: usize, dim: usize, stream: &mut RandomStream) -> Option<Point>;

    /// Upper bound on `sqrt(E |e_n|^2)`.
    fn rms_bound(&self, n: usize) -> f64;

    /// Declared finite bound on `sum_n rms_bound(n)`, or `None` when the
    /// schedule cannot certify summability.
    fn summable_bound(&self) -> Option<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSchedule {
    Zero,
    /// Zero-mean bounded noise with `|e_n| <= scale / (n + 1)^exponent`.
    Decaying { scale: f64, exponent: f64 },
}

impl NoiseSchedule {
    pub fn decaying(scale: f64, exponent: f64) -> Result<Self> {
        if !(scale.is_finite() && scale >= 0.0 && exponent.is_finite() && exponent > 0.0) {
            return Err(Error::invalid(format!(
                "noise schedule needs scale >= 0 and exponent > 0, got ({scale}, {exponent})"
            )));
        }
        Ok(NoiseSchedule::Decaying { scale, exponent })
    }
}

impl ErrorSchedule for NoiseSchedule {
    fn draw(&self, n: usize, dim: usize, stream: &mut RandomStream) -> Option<Point> {
        match *self {
            NoiseSchedule::Zero => None,
            NoiseSchedule::Decaying { scale, exponent } => {
                // uniform in the cube [-1,1]^dim, shrunk into the unit ball
                let radius = scale / ((n + 1) as f64).powf(exponent) / (dim as f64).sqrt();
                Some(Point::from_raw(
                    (0..dim).map(|_| radius * stream.uniform_in(-1.0, 1.0)).collect(),
                ))
            }
        }
    }

    fn rms_bound(&self, n: usize) -> f64 {
        match *self {
            NoiseSchedule::Zero => 0.0,
            NoiseSchedule::Decaying { scale, exponent } => scale / ((n + 1) as f64).powf(exponent),
        }
    }

    fn summable_bound(&self) -> Option<f64> {
        match *self {
            NoiseSchedule::Zero => Some(0.0),
            // sum_{m>=1} m^{-q} <= 1 + 1/(q - 1)
            NoiseSchedule::Decaying { scale, exponent } if exponent > 1.0 => {
                Some(scale * (1.0 + 1.0 / (exponent - 1.0)))
            }
            NoiseSchedule::Decaying { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KmConfig {
    pub mu: RelaxationStrategy,
    pub errors: Arc<dyn ErrorSchedule>,
    pub max_iters: usize,
    pub seed: u64,
    /// Stop once `|T x_n - x_n| < atol`.
    pub atol: f64,
}

impl KmConfig {
    pub fn new(mu: RelaxationStrategy, max_iters: usize, seed: u64) -> Self {
        KmConfig {
            mu,
            errors: Arc::new(NoiseSchedule::Zero),
            max_iters,
            seed,
            atol: DEFAULT_ATOL,
        }
    }

    pub fn with_errors(mut self, errors: Arc<dyn ErrorSchedule>) -> Self {
        self.errors = errors;
        self
    }

    /// Checks the relaxation support against `]0, 1/alpha[` (`alpha = 1`
    /// for a plain nonexpansive operator) and the summability certificate
    /// `sum_n sqrt(E mu_n^2 E|e_n|^2) < inf`.
    pub fn validate(&self, alpha: f64) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be positive"));
        }
        let upper = 1.0 / alpha;
        let (_, sup) = self.mu.support();
        if sup >= upper {
            return Err(Error::hypothesis(format!(
                "μ_n ∈ ]0,{upper}[ violated: relaxation support reaches {sup}"
            )));
        }
        let zeta = self.mu.moments().second_moment;
        match self.errors.summable_bound() {
            Some(b) if (zeta.sqrt() * b).is_finite() => Ok(()),
            _ => Err(Error::hypothesis(
                "Σ sqrt(Eμ_n² E‖e_n‖²) < ∞ is not certified by the error schedule",
            )),
        }
    }

    /// `sqrt(E mu^2) * sum_n rms_bound(n)`, when certified.
    pub fn summability_certificate(&self) -> Option<f64> {
        self.errors
            .summable_bound()
            .map(|b| self.mu.moments().second_moment.sqrt() * b)
    }
}

#[derive(Debug, Clone)]
pub struct SolverOutput {
    pub final_point: Point,
    pub trace: ConvergenceTrace,
}

pub fn run_km<T: Operator + ?Sized>(op: &T, cfg: &KmConfig, x0: &Point) -> Result<SolverOutput> {
    cfg.validate(1.0)?;
    km_loop(op, cfg, x0)
}

/// KM iteration for an `alpha`-averaged operator, with relaxations allowed
/// up to `1/alpha`.
pub fn run_km_averaged<T: Operator + ?Sized>(
    op: &T,
    alpha: f64,
    cfg: &KmConfig,
    x0: &Point,
) -> Result<SolverOutput> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::hypothesis(format!("α ∈ ]0,1[ violated: α = {alpha}")));
    }
    cfg.validate(alpha)?;
    km_loop(op, cfg, x0)
}

fn km_loop<T: Operator + ?Sized>(op: &T, cfg: &KmConfig, x0: &Point) -> Result<SolverOutput> {
    if op.dim() != x0.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            found: x0.dim(),
        });
    }
    if !x0.is_finite() {
        return Err(Error::NonFinite("initial point"));
    }
    let mut relax = RandomStream::new(cfg.seed, StreamLabel::Relaxation);
    let mut noise = RandomStream::new(cfg.seed, StreamLabel::Noise);
    let start = Instant::now();
    let mut trace = ConvergenceTrace::default();
    let mut x = x0.clone();
    for n in 0..cfg.max_iters {
        let tx = op.apply(&x)?;
        let residual = tx.distance(&x);
        let mu = cfg.mu.sample(&mut relax);
        let e = cfg.errors.draw(n, x.dim(), &mut noise);
        trace.push(TraceRow {
            iteration: n,
            elapsed: start.elapsed().as_secs_f64(),
            residual,
            normalized_error_db: None,
            lambda: mu,
            extrapolation: 1.0,
        });
        if residual < cfg.atol {
            trace.stop = StopReason::Tolerance;
            break;
        }
        let mut step = tx.sub(&x);
        if let Some(e) = &e {
            step.axpy(1.0, e);
        }
        x.axpy(mu, &step);
        guard(&x, n + 1)?;
    }
    Ok(SolverOutput {
        final_point: x,
        trace,
    })
}

fn guard(x: &Point, iteration: usize) -> Result<()> {
    let norm = x.norm();
    if !norm.is_finite() || norm > DIVERGENCE_GUARD {
        return Err(Error::Divergence { iteration, norm });
    }
    Ok(())
}

/// A random family `{B_k}` with `E B_k x = B x` and
/// `E|B_k x - B x|^2 <= variance_bound`.
pub trait StochasticOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn distribution(&self) -> &IndexDistribution;

    /// `B_k x`
    fn evaluate(&self, k: usize, x: &Point) -> Point;

    /// `B x`, when available in closed form.
    fn mean(&self, x: &Point) -> Option<Point>;

    fn variance_bound(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    /// Cocoercivity constant of `B` (inverse Lipschitz constant of `∇f`).
    pub beta: f64,
    /// Step exponent in `]2/3, 1]`.
    pub nu: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Stop once `|B x_n| < atol` (needs [`StochasticOracle::mean`]).
    pub atol: f64,
}

impl SgdConfig {
    pub fn new(beta: f64, nu: f64, max_iters: usize, seed: u64) -> Self {
        SgdConfig {
            beta,
            nu,
            max_iters,
            seed,
            atol: DEFAULT_ATOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 2.0 / 3.0 && self.nu <= 1.0) {
            return Err(Error::hypothesis(format!("ν ∈ ]2/3,1] violated: ν = {}", self.nu)));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::hypothesis(format!("β > 0 violated: β = {}", self.beta)));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be positive"));
        }
        Ok(())
    }

    pub fn step_size(&self, n: usize) -> f64 {
        step_size(self.beta, self.nu, n)
    }
}

/// `gamma_n = 2 beta / (n + 1)^nu`
pub fn step_size(beta: f64, nu: f64, n: usize) -> f64 {
    2.0 * beta / ((n + 1) as f64).powf(nu)
}

/// Number of draws in the unbiasedness spot-check at `x0`.
pub const SPOT_CHECK_DRAWS: usize = 4096;

/// Monte-Carlo check that the sample mean of `B_k x` is within three
/// standard errors (in norm) of `B x`. Uses the audit stream only.
pub fn spot_check_unbiased<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x: &Point,
    draws: usize,
    seed: u64,
) -> Result<()> {
    let Some(expected) = oracle.mean(x) else {
        return Ok(());
    };
    let mut audit = RandomStream::new(seed, StreamLabel::Audit);
    let samples: Vec<Point> = (0..draws)
        .map(|_| oracle.evaluate(oracle.distribution().sample(&mut audit), x))
        .collect();
    let mut mean = Point::zeros(x.dim());
    for s in &samples {
        mean.axpy(1.0 / draws as f64, s);
    }
    let total_var = samples.iter().map(|s| s.distance_sq(&mean)).sum::<f64>() / (draws - 1) as f64;
    let gap = mean.distance(&expected);
    let tol = 3.0 * (total_var / draws as f64).sqrt() + 1e-12 * (1.0 + expected.norm());
    if gap > tol {
        return Err(Error::hypothesis(format!(
            "E∇g_k(x) = ∇f(x) violated at x0: sample mean off by {gap:e} (tolerance {tol:e})"
        )));
    }
    Ok(())
}

/// Stochastic forward iteration `x_{n+1} = x_n - gamma_n B_{k_n} x_n` for
/// a `beta`-cocoercive `B`.
pub fn run_cocoercive<O: StochasticOracle + ?Sized>(
    oracle: &O,
    cfg: &SgdConfig,
    x0: &Point,
) -> Result<SolverOutput> {
    cfg.validate()?;
    if oracle.dim() != x0.dim() {
        return Err(Error::DimensionMismatch {
            expected: oracle.dim(),
            found: x0.dim(),
        });
    }
    if !x0.is_finite() {
        return Err(Error::NonFinite("initial point"));
    }
    spot_check_unbiased(oracle, x0, SPOT_CHECK_DRAWS, cfg.seed)?;

    let mut index = RandomStream::new(cfg.seed, StreamLabel::Index);
    let start = Instant::now();
    let mut trace = ConvergenceTrace::default();
    let mut x = x0.clone();
    for n in 0..cfg.max_iters {
        let k = oracle.distribution().sample(&mut index);
        let g = oracle.evaluate(k, &x);
        let gamma = cfg.step_size(n);
        let full = oracle.mean(&x);
        let residual = full.as_ref().map_or_else(|| g.norm(), Point::norm);
        trace.push(TraceRow {
            iteration: n,
            elapsed: start.elapsed().as_secs_f64(),
            residual,
            normalized_error_db: None,
            lambda: gamma,
            extrapolation: 1.0,
        });
        if full.is_some() && residual < cfg.atol {
            trace.stop = StopReason::Tolerance;
            break;
        }
        x.axpy(-gamma, &g);
        guard(&x, n + 1)?;
    }
    Ok(SolverOutput {
        final_point: x,
        trace,
    })
}

/// Stochastic gradient descent: [`run_cocoercive`] with `B_k = ∇g_k`.
pub fn run_sgd<O: StochasticOracle + ?Sized>(
    gradients: &O,
    cfg: &SgdConfig,
    x0: &Point,
) -> Result<SolverOutput> {
    run_cocoercive(gradients, cfg, x0)
}

/// `g_k(x) = |x - c - w_k|^2 / 2` with the offsets `w_k` drawn uniformly
/// and then centered, so `E ∇g_k = ∇f` for `f(x) = |x - c|^2 / 2`
/// (up to rounding in the centering). `∇f` is 1-Lipschitz: `beta = 1`.
#[derive(Debug, Clone)]
pub struct QuadraticGradientFamily {
    center: Point,
    offsets: Vec<Point>,
    offset_mean: Point,
    distribution: IndexDistribution,
    variance: f64,
}

impl QuadraticGradientFamily {
    pub fn new(center: Point, offsets: Vec<Point>) -> Result<Self> {
        let distribution = IndexDistribution::uniform(offsets.len())?;
        if let Some(w) = offsets.iter().find(|w| w.dim() != center.dim()) {
            return Err(Error::DimensionMismatch {
                expected: center.dim(),
                found: w.dim(),
            });
        }
        let m = offsets.len() as f64;
        let mut offset_mean = Point::zeros(center.dim());
        for w in &offsets {
            offset_mean.axpy(1.0 / m, w);
        }
        let variance = offsets.iter().map(|w| w.distance_sq(&offset_mean)).sum::<f64>() / m;
        Ok(QuadraticGradientFamily {
            center,
            offsets,
            offset_mean,
            distribution,
            variance,
        })
    }

    /// `members` offsets uniform in `[-amplitude, amplitude]^dim`, centered.
    pub fn random(center: Point, members: usize, amplitude: f64, seed: u64) -> Result<Self> {
        let dim = center.dim();
        let mut stream = RandomStream::new(seed, StreamLabel::Problem);
        let mut raw: Vec<Point> = (0..members)
            .map(|_| {
                Point::from_raw(
                    (0..dim)
                        .map(|_| stream.uniform_in(-amplitude, amplitude))
                        .collect(),
                )
            })
            .collect();
        let mut mean = Point::zeros(dim);
        for w in &raw {
            mean.axpy(1.0 / members as f64, w);
        }
        for w in &mut raw {
            *w = w.sub(&mean);
        }
        Self::new(center, raw)
    }

    pub fn center(&self) -> &Point {
        &self.center
    }
}

impl StochasticOracle for QuadraticGradientFamily {
    fn dim(&self) -> usize {
        self.center.dim()
    }

    fn distribution(&self) -> &IndexDistribution {
        &self.distribution
    }

    fn evaluate(&self, k: usize, x: &Point) -> Point {
        x.sub(&self.center).sub(&self.offsets[k])
    }

    fn mean(&self, x: &Point) -> Option<Point> {
        Some(x.sub(&self.center).sub(&self.offset_mean))
    }

    fn variance_bound(&self) -> f64 {
        self.variance
    }
}
