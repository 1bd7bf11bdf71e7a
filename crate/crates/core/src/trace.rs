//! Per-iteration convergence records and their CSV form.
//!
//! Schema: `iter,elapsed_s,residual,norm_err_db,lambda,extrapolation`.
//! Floats are written with 17 significant digits so they round-trip; an
//! absent normalized error is an empty field.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "iter,elapsed_s,residual,norm_err_db,lambda,extrapolation";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub elapsed: f64,
    pub residual: f64,
    pub normalized_error_db: Option<f64>,
    /// Relaxation (or step size) drawn at this iteration.
    pub lambda: f64,
    pub extrapolation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    Tolerance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub rows: Vec<TraceRow>,
    pub stop: StopReason,
}

impl Default for ConvergenceTrace {
    fn default() -> Self {
        ConvergenceTrace {
            rows: Vec::new(),
            stop: StopReason::MaxIterations,
        }
    }
}

impl ConvergenceTrace {
    pub fn push(&mut self, row: TraceRow) {
        debug_assert!(self.rows.last().is_none_or(|r| r.iteration < row.iteration));
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.residual).collect()
    }

    /// First iteration whose normalized error is at or below `db`.
    pub fn first_below_db(&self, db: f64) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.normalized_error_db.is_some_and(|v| v <= db))
            .map(|r| r.iteration)
    }

    /// Iterations strictly increasing, every recorded value finite.
    pub fn check_well_formed(&self) -> Result<()> {
        for pair in self.rows.windows(2) {
            if pair[1].iteration <= pair[0].iteration {
                return Err(Error::invalid("trace iterations must be strictly increasing"));
            }
        }
        for r in &self.rows {
            let finite = r.elapsed.is_finite()
                && r.residual.is_finite()
                && r.lambda.is_finite()
                && r.extrapolation.is_finite()
                && r.normalized_error_db.is_none_or(f64::is_finite);
            if !finite {
                return Err(Error::NonFinite("trace row"));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iteration,
                fmt_f64(r.elapsed),
                fmt_f64(r.residual),
                r.normalized_error_db.map(fmt_f64).unwrap_or_default(),
                fmt_f64(r.lambda),
                fmt_f64(r.extrapolation)
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != TRACE_HEADER {
            return Err(Error::invalid(format!("unexpected trace header `{header}`")));
        }
        let mut trace = ConvergenceTrace::default();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::invalid(format!("trace row has {} fields: `{line}`", f.len())));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad number `{s}` in trace row")))
            };
            trace.rows.push(TraceRow {
                iteration: f[0]
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad iteration `{}`", f[0])))?,
                elapsed: num(f[1])?,
                residual: num(f[2])?,
                normalized_error_db: if f[3].is_empty() { None } else { Some(num(f[3])?) },
                lambda: num(f[4])?,
                extrapolation: num(f[5])?,
            });
        }
        trace.check_well_formed()?;
        Ok(trace)
    }
}

/// 17 significant digits in scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
