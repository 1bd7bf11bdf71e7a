//! Multi-seed block runs with normalized-error traces.

use rayon::prelude::*;

use crate::block::{run_block, BlockConfig, WeightRule};
use crate::diagnostics::{
    aggregate_runs, estimate_reference_solution, AveragedTrace, RunSummary, REFERENCE_TOL,
};
use crate::error::{Error, Result};
use crate::operators::OperatorFamily;
use crate::point::Point;
use crate::relaxation::RelaxationStrategy;
use crate::trace::ConvergenceTrace;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub batch_size: usize,
    pub delta: f64,
    pub weight_rule: WeightRule,
    pub iters: usize,
    pub repeats: usize,
    /// Seeds are `seed, seed + 1, ..., seed + repeats - 1`.
    pub seed: u64,
    pub reference_tol: f64,
    /// Iterations between residual checks in the reference run.
    pub check_every: usize,
}

impl ExperimentConfig {
    pub fn new(batch_size: usize, iters: usize, repeats: usize, seed: u64) -> Self {
        ExperimentConfig {
            batch_size,
            delta: 0.5 / batch_size.max(1) as f64,
            weight_rule: WeightRule::UniformOverBatch,
            iters,
            repeats,
            seed,
            reference_tol: REFERENCE_TOL,
            check_every: 10,
        }
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.repeats as u64).map(move |i| self.seed.wrapping_add(i))
    }

    pub fn block_config(&self, strategy: RelaxationStrategy, seed: u64) -> BlockConfig {
        BlockConfig {
            delta: self.delta,
            weight_rule: self.weight_rule,
            ..BlockConfig::new(self.batch_size, strategy, self.iters, seed)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub trace: ConvergenceTrace,
    pub final_point: Point,
    /// The run's own limit, when the extended run reached tolerance.
    pub reference: Option<Point>,
    pub summary: RunSummary,
}

#[derive(Debug, Clone)]
pub struct StrategyRuns {
    pub strategy: RelaxationStrategy,
    pub runs: Vec<SeedRun>,
    pub averaged: AveragedTrace,
}

/// One seed: an extended run provides `x_inf`, then the budgeted run is
/// traced against it. Without a reference the trace has no dB column.
pub fn run_seed(
    command: &str,
    family: &OperatorFamily,
    x0: &Point,
    cfg: &ExperimentConfig,
    strategy: RelaxationStrategy,
    seed: u64,
) -> Result<SeedRun> {
    let block = cfg.block_config(strategy, seed);
    let reference = match estimate_reference_solution(family, &block, x0, cfg.reference_tol, cfg.check_every) {
        Ok(r) if r != *x0 => Some(r),
        Ok(_) | Err(Error::ReferenceNotReached { .. }) => None,
        Err(e) => return Err(e),
    };
    let out = run_block(family, &block, x0, reference.as_ref())?;
    let mut summary = RunSummary::from_trace(command, &strategy.label(), seed, &out.trace);
    summary.reference_reached = Some(reference.is_some());
    Ok(SeedRun {
        seed,
        trace: out.trace,
        final_point: out.final_point,
        reference,
        summary,
    })
}

/// All seeds of one strategy (in parallel on the current rayon pool) and
/// their average. When some seed lacks a reference, every trace drops its
/// dB column before averaging.
pub fn run_experiment(
    command: &str,
    family: &OperatorFamily,
    x0: &Point,
    cfg: &ExperimentConfig,
    strategy: RelaxationStrategy,
) -> Result<StrategyRuns> {
    if cfg.repeats == 0 {
        return Err(Error::invalid("repeats must be positive"));
    }
    cfg.block_config(strategy, cfg.seed).validate()?;
    let seeds: Vec<u64> = cfg.seeds().collect();
    let mut runs = seeds
        .par_iter()
        .map(|&s| run_seed(command, family, x0, cfg, strategy, s))
        .collect::<Result<Vec<_>>>()?;
    if runs.iter().any(|r| r.reference.is_none()) {
        for r in &mut runs {
            for row in &mut r.trace.rows {
                row.normalized_error_db = None;
            }
        }
    }
    let traces: Vec<&ConvergenceTrace> = runs.iter().map(|r| &r.trace).collect();
    let averaged = aggregate_runs(&traces)?;
    Ok(StrategyRuns {
        strategy,
        runs,
        averaged,
    })
}
