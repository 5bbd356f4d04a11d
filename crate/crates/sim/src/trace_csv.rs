//! Trace CSV files.
//!
//! One header row with [`TRACE_COLUMNS`] in order, then one row per control
//! step. Floats are written in the shortest form that parses back to the
//! same bits, so a trace survives a write/read cycle exactly.

use std::io::{Read, Write};

use bicycle_critic_core::fuzzy::{Label, RULES};
use bicycle_critic_core::harness::{RunTrace, TraceRecord, TRACE_COLUMNS};

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    Header { expected: String, found: String },
    #[error("row {row}, column {column}: {value:?} is not a number")]
    Number { row: usize, column: &'static str, value: String },
    #[error("row {row}: expected {expected} fields, found {found}")]
    Width { row: usize, expected: usize, found: usize },
    #[error("trace has fewer than two rows; the control period is unknown")]
    TooShort,
}

pub fn write_trace<W: Write>(out: W, trace: &RunTrace) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for rec in &trace.records {
        w.write_record(rec.to_array().iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn trace_to_string(trace: &RunTrace) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, trace).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("CSV output is ASCII")
}

/// Reads a trace written by [`write_trace`]. The control period is taken
/// from the first two timestamps.
pub fn read_trace<R: Read>(input: R) -> Result<RunTrace, CsvError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(TRACE_COLUMNS) {
        return Err(CsvError::Header {
            expected: TRACE_COLUMNS.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut records = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        if row.len() != TRACE_COLUMNS.len() {
            return Err(CsvError::Width {
                row: i + 1,
                expected: TRACE_COLUMNS.len(),
                found: row.len(),
            });
        }
        let mut a = [0.0; 15];
        for (j, field) in row.iter().enumerate() {
            a[j] = field.trim().parse().map_err(|_| CsvError::Number {
                row: i + 1,
                column: TRACE_COLUMNS[j],
                value: field.into(),
            })?;
        }
        records.push(TraceRecord::from_array(a));
    }
    if records.len() < 2 {
        return Err(CsvError::TooShort);
    }
    let control_dt = records[1].t - records[0].t;
    Ok(RunTrace {
        control_dt,
        records,
        coefficients: None,
    })
}

/// Column names of the coefficient dump: `t` then `a0_NN, a1_NN, a2_NN, ...`
/// where the two letters are the error and difference labels of the rule.
pub fn coefficient_columns() -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for e in Label::ALL {
        for d in Label::ALL {
            for i in 0..3 {
                cols.push(format!("a{i}_{}{}", e.short(), d.short()));
            }
        }
    }
    debug_assert_eq!(cols.len(), 1 + 3 * RULES);
    cols
}

/// Writes the per-step coefficient snapshots of `trace`, if it has any.
pub fn write_coefficients<W: Write>(out: W, trace: &RunTrace) -> Result<bool, CsvError> {
    let Some(snaps) = trace.coefficients.as_ref() else {
        return Ok(false);
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(coefficient_columns())?;
    for (rec, c) in trace.records.iter().zip(snaps) {
        let row = std::iter::once(rec.t).chain(c.iter().copied()).map(|v| v.to_string());
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(true)
}
