//! Convergence metrics, the Fejér audit and aggregation across seeds.

use std::borrow::Borrow;
use std::io::Write;

use serde::Serialize;

use crate::block::{run_block, BlockConfig, BlockIterationRecord};
use crate::error::{Error, Result};
use crate::geometry::{fejer_decrement, CutStep};
use crate::operators::OperatorFamily;
use crate::point::Point;
use crate::trace::{fmt_f64, ConvergenceTrace, StopReason, TraceRow, TRACE_HEADER};

/// Floor for the normalized error, in dB.
pub const DB_FLOOR: f64 = -300.0;

/// Residual (relative to `1 + |x|`) the extended run must reach before its
/// iterate is used as `x_inf`.
pub const REFERENCE_TOL: f64 = 1e-12;

/// Budget multiplier for the extended reference run.
pub const REFERENCE_BUDGET_FACTOR: usize = 10;

/// Slack in the pathwise Fejér check, relative to `1 + |x_n - z|^2`.
pub const FEJER_SLACK: f64 = 1e-9;

/// `20 log10(|x_n - x_inf| / |x0 - x_inf|)`, floored at [`DB_FLOOR`].
pub fn normalized_error_db(x_n: &Point, x0: &Point, x_inf: &Point) -> Result<f64> {
    x0.check_dim(x_inf)?;
    x_n.check_dim(x_inf)?;
    let base = x0.distance(x_inf);
    if base == 0.0 {
        return Err(Error::invalid("normalized error undefined: x0 equals the reference"));
    }
    let ratio = x_n.distance(x_inf) / base;
    if ratio == 0.0 {
        return Ok(DB_FLOOR);
    }
    Ok((20.0 * ratio.log10()).max(DB_FLOOR))
}

/// Runs the block method from `x0` for `REFERENCE_BUDGET_FACTOR` times the
/// budget of `cfg` and returns the final iterate once the family residual
/// drops below `tol (1 + |x|)`. The result is the limit of this particular run.
pub fn estimate_reference_solution(
    family: &OperatorFamily,
    cfg: &BlockConfig,
    x0: &Point,
    tol: f64,
    check_every: usize,
) -> Result<Point> {
    let extended = BlockConfig {
        max_iters: cfg.max_iters.saturating_mul(REFERENCE_BUDGET_FACTOR),
        stop_residual: Some(tol),
        check_every,
        record: false,
        ..cfg.clone()
    };
    let out = run_block(family, &extended, x0, None)?;
    if out.trace.stop != StopReason::Tolerance {
        return Err(Error::ReferenceNotReached {
            residual: family.max_residual(&out.final_point)?,
            iterations: out.trace.len(),
        });
    }
    Ok(out.final_point)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FejerAudit {
    pub checked: usize,
    pub violations: usize,
    /// Largest amount by which a check failed (0 when none did).
    pub worst: f64,
}

impl FejerAudit {
    pub fn merge(&mut self, other: FejerAudit) {
        self.checked += other.checked;
        self.violations += other.violations;
        self.worst = self.worst.max(other.worst);
    }
}

/// Checks `|x_{n+1} - z|^2 <= |x_n - z|^2 - lambda (2 - lambda) |d_n|^2
/// + FEJER_SLACK (1 + |x_n - z|^2)` along recorded block iterations, for
/// every `z` in `witnesses`. `final_point` is the iterate after the last
/// record.
pub fn fejer_audit(
    records: &[BlockIterationRecord],
    final_point: &Point,
    witnesses: &[Point],
) -> Result<FejerAudit> {
    let mut audit = FejerAudit::default();
    for (n, rec) in records.iter().enumerate() {
        let next = records.get(n + 1).map_or(final_point, |r| &r.x);
        let step = CutStep {
            alpha: rec.extrapolation,
            d: rec.step(),
            degenerate: false,
        };
        for z in witnesses {
            let dec = fejer_decrement(&rec.x, next, z, rec.lambda, &step)?;
            let slack = FEJER_SLACK * (1.0 + rec.x.distance_sq(z));
            audit.checked += 1;
            if dec + slack < 0.0 {
                audit.violations += 1;
                audit.worst = audit.worst.max(-(dec + slack));
            }
        }
    }
    Ok(audit)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub strategy: String,
    pub seed: u64,
    pub iterations_run: usize,
    pub final_residual: f64,
    pub final_norm_err_db: Option<f64>,
    pub invariant_violations: usize,
    pub worst_violation: f64,
    pub min_extrapolation: f64,
    pub reference_reached: Option<bool>,
    pub wall_clock: f64,
}

impl RunSummary {
    /// Summary fields taken from the trace; extrapolation values below
    /// `1 - 1e-12` count as invariant violations.
    pub fn from_trace(command: &str, strategy: &str, seed: u64, trace: &ConvergenceTrace) -> Self {
        let last = trace.last();
        let shortfalls: Vec<f64> = trace
            .rows
            .iter()
            .map(|r| 1.0 - r.extrapolation)
            .filter(|&s| s > 1e-12)
            .collect();
        RunSummary {
            command: command.to_string(),
            strategy: strategy.to_string(),
            seed,
            iterations_run: trace.len(),
            final_residual: last.map_or(0.0, |r| r.residual),
            final_norm_err_db: last.and_then(|r| r.normalized_error_db),
            invariant_violations: shortfalls.len(),
            worst_violation: shortfalls.iter().copied().fold(0.0, f64::max),
            min_extrapolation: trace
                .rows
                .iter()
                .map(|r| r.extrapolation)
                .fold(1.0, f64::min),
            reference_reached: None,
            wall_clock: last.map_or(0.0, |r| r.elapsed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedRow {
    pub mean: TraceRow,
    pub db_min: Option<f64>,
    pub db_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AveragedTrace {
    pub rows: Vec<AveragedRow>,
    pub runs: usize,
}

impl AveragedTrace {
    pub fn mean_trace(&self) -> ConvergenceTrace {
        ConvergenceTrace {
            rows: self.rows.iter().map(|r| r.mean).collect(),
            stop: StopReason::MaxIterations,
        }
    }

    pub fn first_below_db(&self, db: f64) -> Option<usize> {
        self.mean_trace().first_below_db(db)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRACE_HEADER},db_min,db_max")?;
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for AveragedRow { mean: r, db_min, db_max } in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.iteration,
                fmt_f64(r.elapsed),
                fmt_f64(r.residual),
                opt(r.normalized_error_db),
                fmt_f64(r.lambda),
                fmt_f64(r.extrapolation),
                opt(*db_min),
                opt(*db_max)
            )?;
        }
        Ok(())
    }
}

/// Mean of `values` summed in sorted order, so the result does not depend
/// on the order of the runs.
fn ordered_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Pointwise mean over runs sharing one iteration grid, with the min/max
/// envelope of the normalized error.
pub fn aggregate_runs<T: Borrow<ConvergenceTrace>>(traces: &[T]) -> Result<AveragedTrace> {
    let traces: Vec<&ConvergenceTrace> = traces.iter().map(Borrow::borrow).collect();
    let Some(first) = traces.first().copied() else {
        return Err(Error::invalid("no traces to aggregate"));
    };
    for t in &traces {
        let same = t.len() == first.len()
            && t.rows.iter().zip(&first.rows).all(|(a, b)| {
                a.iteration == b.iteration
                    && a.normalized_error_db.is_some() == b.normalized_error_db.is_some()
            });
        if !same {
            return Err(Error::invalid("traces do not share an iteration grid"));
        }
    }
    let mut rows = Vec::with_capacity(first.len());
    for i in 0..first.len() {
        let column = |f: &dyn Fn(&TraceRow) -> f64| -> f64 {
            let mut v: Vec<f64> = traces.iter().map(|t| f(&t.rows[i])).collect();
            ordered_mean(&mut v)
        };
        let db: Option<Vec<f64>> = traces.iter().map(|t| t.rows[i].normalized_error_db).collect();
        let (mean_db, db_min, db_max) = match db {
            Some(mut v) => {
                let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (Some(ordered_mean(&mut v)), Some(lo), Some(hi))
            }
            None => (None, None, None),
        };
        rows.push(AveragedRow {
            mean: TraceRow {
                iteration: first.rows[i].iteration,
                elapsed: column(&|r| r.elapsed),
                residual: column(&|r| r.residual),
                normalized_error_db: mean_db,
                lambda: column(&|r| r.lambda),
                extrapolation: column(&|r| r.extrapolation),
            },
            db_min,
            db_max,
        });
    }
    Ok(AveragedTrace {
        rows,
        runs: traces.len(),
    })
}

/// Default elapsed-time bin width in seconds.
pub const DEFAULT_BIN_WIDTH: f64 = 0.010;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeBin {
    /// Left edge in seconds.
    pub start: f64,
    pub mean_db: f64,
    pub count: usize,
}

/// Mean normalized error of all rows (across traces) falling into each
/// elapsed-time bin. Rows without a dB value are skipped.
pub fn time_binned(traces: &[ConvergenceTrace], width: f64) -> Result<Vec<TimeBin>> {
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::invalid(format!("bin width must be positive, got {width}")));
    }
    let mut bins: std::collections::BTreeMap<u64, Vec<f64>> = Default::default();
    for t in traces {
        for r in &t.rows {
            if let Some(db) = r.normalized_error_db {
                bins.entry((r.elapsed / width).floor() as u64).or_default().push(db);
            }
        }
    }
    Ok(bins
        .into_iter()
        .map(|(k, mut v)| TimeBin {
            start: k as f64 * width,
            count: v.len(),
            mean_db: ordered_mean(&mut v),
        })
        .collect())
}
