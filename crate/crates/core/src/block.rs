//! Randomly activated, extrapolated, super-relaxed block-iterative method.
//!
//! Each iteration draws `M` indices, applies the selected operators,
//! averages the results with weights `beta`, extrapolates the averaged step
//! by `L_n >= 1` and relaxes it by a random `lambda_n`:
//!
//! ```text
//! p_i = T_{k_i} x_n
//! p   = sum_i beta_i p_i
//! L   = (sum_i beta_i |p_i - x_n|^2 + 1[p = x_n]) / (|p - x_n|^2 + 1[p = x_n])
//! a   = x_n + L (p - x_n)
//! x_{n+1} = x_n + lambda_n (a - x_n)
//! ```
//!
//! This is the half-space cut update with `t* = x_n - p` and
//! `eta = sum_i beta_i <p_i, x_n - p_i>`, see [`block_cut`].
//!
//! The error-tolerant variant perturbs every `p_i` with `e_i` and uses
//! `a = p` (no extrapolation), with relaxations confined to `]0, 2[`.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::normalized_error_db;
use crate::error::{Error, Result};
use crate::fixedpoint::{ErrorSchedule, DIVERGENCE_GUARD};
use crate::geometry::{HalfSpaceCut, DEGENERATE_NORMAL_SQ};
use crate::operators::OperatorFamily;
use crate::point::Point;
use crate::relaxation::{Algorithm, RelaxationStrategy};
use crate::rng::{RandomStream, StreamLabel};
use crate::trace::{ConvergenceTrace, StopReason, TraceRow};

/// Relative tolerance for membership in the argmax set.
pub const ARGMAX_TOL: f64 = 1e-12;

/// Extrapolation values below `1 - EXTRAPOLATION_TOL` are an internal error.
pub const EXTRAPOLATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    UniformOverBatch,
    MaxResidualConcentrated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexSelection {
    /// `M` independent draws from the family's index law.
    Random,
    /// The same indices at every iteration.
    Fixed(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct BlockConfig {
    pub batch_size: usize,
    pub delta: f64,
    pub relaxation: RelaxationStrategy,
    pub weight_rule: WeightRule,
    pub max_iters: usize,
    pub seed: u64,
    /// Switches to the error-tolerant variant.
    pub errors: Option<Arc<dyn ErrorSchedule>>,
    pub selection: IndexSelection,
    /// Stop once `max_k |T_k x_n - x_n| < stop_residual (1 + |x_n|)`.
    pub stop_residual: Option<f64>,
    /// Iterations between evaluations of the stopping residual.
    pub check_every: usize,
    /// Keep a [`BlockIterationRecord`] per iteration.
    pub record: bool,
    /// Apply the `M` operators of an iteration on the rayon pool.
    pub parallel: bool,
}

impl BlockConfig {
    /// Uniform batch weights, `delta = 1/(2M)`, random indices.
    pub fn new(batch_size: usize, relaxation: RelaxationStrategy, max_iters: usize, seed: u64) -> Self {
        BlockConfig {
            batch_size,
            delta: 0.5 / batch_size.max(1) as f64,
            relaxation,
            weight_rule: WeightRule::UniformOverBatch,
            max_iters,
            seed,
            errors: None,
            selection: IndexSelection::Random,
            stop_residual: None,
            check_every: 1,
            record: false,
            parallel: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.batch_size;
        if m == 0 {
            return Err(Error::invalid("batch size M must be positive"));
        }
        check_delta(self.delta, m)?;
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be positive"));
        }
        if self.check_every == 0 {
            return Err(Error::invalid("check_every must be positive"));
        }
        if let IndexSelection::Fixed(idx) = &self.selection {
            if idx.len() != m {
                return Err(Error::invalid(format!("{} fixed indices for M = {m}", idx.len())));
            }
        }
        if let Some(tol) = self.stop_residual {
            if !(tol.is_finite() && tol >= 0.0) {
                return Err(Error::invalid(format!("stop residual must be >= 0, got {tol}")));
            }
        }
        match &self.errors {
            None => {
                let report = self.relaxation.validate_for(Algorithm::BlockIterative, true);
                if !report.accepted {
                    return Err(Error::hypothesis(report.reason.unwrap_or_default()));
                }
            }
            Some(errors) => {
                let report = self.relaxation.validate_for(Algorithm::Bounded, false);
                if !report.accepted {
                    return Err(Error::hypothesis(format!(
                        "λ_n ∈ ]0,2[ violated: {}",
                        report.reason.unwrap_or_default()
                    )));
                }
                if errors.summable_bound().is_none() {
                    return Err(Error::hypothesis(
                        "max_i Σ_n sqrt(E‖e_{i,n}‖²) < ∞ is not certified by the error schedule",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn is_error_tolerant(&self) -> bool {
        self.errors.is_some()
    }
}

fn check_delta(delta: f64, m: usize) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0 / m as f64) {
        return Err(Error::hypothesis(format!("δ ∈ ]0,1/M[ violated: δ = {delta}, M = {m}")));
    }
    Ok(())
}

/// Batch weights: every index within `ARGMAX_TOL` (relative) of the
/// largest residual gets at least `delta`.
pub fn compute_weights(residual_norms: &[f64], delta: f64, rule: WeightRule) -> Result<Vec<f64>> {
    let m = residual_norms.len();
    if m == 0 {
        return Err(Error::invalid("batch size M must be positive"));
    }
    check_delta(delta, m)?;
    let share = 1.0 / m as f64;
    match rule {
        WeightRule::UniformOverBatch => Ok(vec![share; m]),
        WeightRule::MaxResidualConcentrated => {
            let argmax = argmax_set(residual_norms);
            let count = argmax.iter().filter(|&&b| b).count();
            let rest = (1.0 - count as f64 * delta) * share;
            Ok(argmax
                .into_iter()
                .map(|top| if top { delta + rest } else { rest })
                .collect())
        }
    }
}

/// Indicator of `r_i >= max_j r_j (1 - ARGMAX_TOL)`; all true when the
/// maximum is zero.
pub fn argmax_set(residual_norms: &[f64]) -> Vec<bool> {
    let max = residual_norms.iter().copied().fold(0.0f64, f64::max);
    residual_norms
        .iter()
        .map(|&r| r >= max - ARGMAX_TOL * max)
        .collect()
}

/// `L = (sum_i beta_i r_i^2 + 1[p = x]) / (|p - x|^2 + 1[p = x])` with
/// `r_i = |p_i - x|`. A squared step below `1e-300` counts as `p = x`.
pub fn extrapolation_parameter(residual_norms: &[f64], weights: &[f64], p_minus_x_norm: f64) -> f64 {
    let squares: Vec<f64> = residual_norms.iter().map(|r| r * r).collect();
    extrapolation_from_squares(&squares, weights, p_minus_x_norm * p_minus_x_norm)
}

/// [`extrapolation_parameter`] on squared distances, avoiding the
/// rounding of a square root followed by a square.
pub fn extrapolation_from_squares(residual_sq: &[f64], weights: &[f64], step_sq: f64) -> f64 {
    debug_assert_eq!(residual_sq.len(), weights.len());
    let spread: f64 = residual_sq.iter().zip(weights).map(|(r, b)| b * r).sum();
    if step_sq < DEGENERATE_NORMAL_SQ {
        (spread + 1.0) / (step_sq + 1.0)
    } else {
        spread / step_sq
    }
}

/// The half-space cut realized by one block iteration at `x`.
pub fn block_cut(x: &Point, outputs: &[Point], weights: &[f64]) -> Result<HalfSpaceCut> {
    let p = weighted_mean(x.dim(), outputs, weights);
    let eta = outputs
        .iter()
        .zip(weights)
        .map(|(pi, b)| b * pi.dot(&x.sub(pi)))
        .sum();
    HalfSpaceCut::new(x.sub(&p), eta)
}

fn weighted_mean(dim: usize, outputs: &[Point], weights: &[f64]) -> Point {
    let mut p = Point::zeros(dim);
    for (pi, b) in outputs.iter().zip(weights) {
        p.axpy(*b, pi);
    }
    p
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockIterationRecord {
    pub iteration: usize,
    /// `x_n`
    pub x: Point,
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub p: Point,
    pub extrapolation: f64,
    pub a: Point,
    pub lambda: f64,
}

impl BlockIterationRecord {
    /// `d_n = x_n - a_n`
    pub fn step(&self) -> Point {
        self.x.sub(&self.a)
    }
}

#[derive(Debug, Clone)]
pub struct BlockOutput {
    pub final_point: Point,
    pub trace: ConvergenceTrace,
    pub records: Vec<BlockIterationRecord>,
    /// Smallest `L_n` seen (1 for an empty run).
    pub min_extrapolation: f64,
}

pub fn run_block(
    family: &OperatorFamily,
    cfg: &BlockConfig,
    x0: &Point,
    reference: Option<&Point>,
) -> Result<BlockOutput> {
    cfg.validate()?;
    if family.dim() != x0.dim() {
        return Err(Error::DimensionMismatch {
            expected: family.dim(),
            found: x0.dim(),
        });
    }
    if !x0.is_finite() {
        return Err(Error::NonFinite("initial point"));
    }
    if let IndexSelection::Fixed(idx) = &cfg.selection {
        if let Some(&k) = idx.iter().find(|&&k| k >= family.len()) {
            return Err(Error::invalid(format!("fixed index {k} outside family of {}", family.len())));
        }
    }
    if let Some(r) = reference {
        x0.check_dim(r)?;
        if x0 == r {
            return Err(Error::invalid("reference solution equals the initial point"));
        }
    }

    let m = cfg.batch_size;
    let dim = x0.dim();
    let mut index_stream = RandomStream::new(cfg.seed, StreamLabel::Index);
    let mut relax_stream = RandomStream::new(cfg.seed, StreamLabel::Relaxation);
    let mut noise_stream = RandomStream::new(cfg.seed, StreamLabel::Noise);
    let start = Instant::now();
    let mut trace = ConvergenceTrace::default();
    let mut records = Vec::new();
    let mut min_extrapolation = 1.0f64;
    let mut x = x0.clone();

    for n in 0..cfg.max_iters {
        if let Some(tol) = cfg.stop_residual {
            if n % cfg.check_every == 0 && family.max_residual(&x)? < tol * (1.0 + x.norm()) {
                trace.stop = StopReason::Tolerance;
                break;
            }
        }

        let indices: Vec<usize> = match &cfg.selection {
            IndexSelection::Random => (0..m).map(|_| family.sample_index(&mut index_stream)).collect(),
            IndexSelection::Fixed(idx) => idx.clone(),
        };
        let mut outputs: Vec<Point> = if cfg.parallel && m > 1 {
            indices
                .par_iter()
                .map(|&k| family.apply(k, &x))
                .collect::<Result<_>>()?
        } else {
            indices.iter().map(|&k| family.apply(k, &x)).collect::<Result<_>>()?
        };
        if let Some(errors) = &cfg.errors {
            for pi in &mut outputs {
                if let Some(e) = errors.draw(n, dim, &mut noise_stream) {
                    pi.axpy(1.0, &e);
                }
            }
        }

        let residual_sq: Vec<f64> = outputs.iter().map(|pi| pi.distance_sq(&x)).collect();
        let residuals: Vec<f64> = residual_sq.iter().map(|r| r.sqrt()).collect();
        let weights = compute_weights(&residuals, cfg.delta, cfg.weight_rule)?;
        // p - x accumulated from the differences, so p = x exactly when
        // every p_i = x
        let mut step = outputs[0].sub(&x).scaled(weights[0]);
        for (pi, b) in outputs.iter().zip(&weights).skip(1) {
            step.axpy_diff(*b, pi, &x);
        }
        let step_sq = step.norm_sq();

        let (extrapolation, a) = if cfg.is_error_tolerant() {
            (1.0, x.add(&step))
        } else {
            let l = extrapolation_from_squares(&residual_sq, &weights, step_sq);
            if !(l >= 1.0 - EXTRAPOLATION_TOL) {
                return Err(Error::Invariant {
                    iteration: n,
                    message: format!("extrapolation L_n = {l} < 1"),
                });
            }
            let a = if step_sq < DEGENERATE_NORMAL_SQ {
                x.clone()
            } else {
                x.add_scaled(l, &step)
            };
            (l, a)
        };
        min_extrapolation = min_extrapolation.min(extrapolation);

        let lambda = cfg.relaxation.sample(&mut relax_stream);
        let residual = residuals.iter().copied().fold(0.0f64, f64::max);
        let db = match reference {
            Some(r) => Some(normalized_error_db(&x, x0, r)?),
            None => None,
        };
        trace.push(TraceRow {
            iteration: n,
            elapsed: start.elapsed().as_secs_f64(),
            residual,
            normalized_error_db: db,
            lambda,
            extrapolation,
        });

        let next = x.relaxed_toward(lambda, &a);
        if cfg.record {
            records.push(BlockIterationRecord {
                iteration: n,
                p: x.add(&step),
                x: std::mem::replace(&mut x, next),
                indices,
                weights,
                extrapolation,
                a,
                lambda,
            });
        } else {
            x = next;
        }
        let norm = x.norm();
        if !norm.is_finite() || norm > DIVERGENCE_GUARD {
            return Err(Error::Divergence {
                iteration: n + 1,
                norm,
            });
        }
    }

    Ok(BlockOutput {
        final_point: x,
        trace,
        records,
        min_extrapolation,
    })
}
