//! Trace and summary tables.
//!
//! Trace files (format version 1) have the header
//! `iteration,x,y,cost,position_error` followed by one row per record. Reals
//! are written with 17 significant digits in scientific notation, so every
//! value round-trips exactly and output is byte-deterministic.

use std::io::{self, BufRead, Write};

use crate::harness::{ConvergenceTrace, SuiteSummary, TraceRecord};
use crate::measurement::Point;

pub const TRACE_HEADER: &str = "iteration,x,y,cost,position_error";
pub const SUMMARY_HEADER: &str =
    "scenario,algorithm,checkpoint,median_error,q1_error,q3_error,median_iterations_to_threshold,reached,runs,failures";

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn emit_csv<W: Write>(trace: &ConvergenceTrace, sink: &mut W) -> io::Result<()> {
    let mut out = String::with_capacity(64 * (trace.records.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iteration,
            real(r.position.x),
            real(r.position.y),
            real(r.cost),
            real(r.error)
        ));
    }
    sink.write_all(out.as_bytes())
}

/// Reads records written by [`emit_csv`].
pub fn read_csv<R: BufRead>(source: R) -> io::Result<Vec<TraceRecord>> {
    let bad = |line: usize, what: &str| io::Error::new(io::ErrorKind::InvalidData, format!("line {line}: {what}"));
    let mut lines = source.lines();
    match lines.next() {
        Some(Ok(h)) if h == TRACE_HEADER => {}
        Some(Err(e)) => return Err(e),
        _ => return Err(bad(1, "missing or unexpected header")),
    }
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad(idx + 2, "expected 5 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(idx + 2, "bad number"));
        records.push(TraceRecord {
            iteration: fields[0].parse().map_err(|_| bad(idx + 2, "bad iteration"))?,
            position: Point::new(num(fields[1])?, num(fields[2])?),
            cost: num(fields[3])?,
            error: num(fields[4])?,
        });
    }
    Ok(records)
}

fn stat(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "inf".to_string()
    }
}

/// One row per (scenario, algorithm, checkpoint).
pub fn emit_summary<W: Write>(summary: &SuiteSummary, sink: &mut W) -> io::Result<()> {
    writeln!(
        sink,
        "# threshold_m={} seeds={}",
        summary.threshold,
        summary.seeds.len()
    )?;
    writeln!(sink, "{SUMMARY_HEADER}")?;
    for cell in &summary.cells {
        let rows = cell
            .checkpoints
            .iter()
            .map(|(k, q)| (k.to_string(), q))
            .chain(std::iter::once(("final".to_string(), &cell.final_error)));
        for (label, q) in rows {
            writeln!(
                sink,
                "{},{},{},{},{},{},{},{},{},{}",
                cell.scenario_id,
                cell.algorithm,
                label,
                stat(q.median),
                stat(q.q1),
                stat(q.q3),
                stat(cell.iterations_to_threshold.median),
                cell.reached,
                cell.runs.len(),
                cell.failures
            )?;
        }
    }
    Ok(())
}
