//! CSV emission with 17 significant digits, and a reader for round trips.

use std::fmt::Write as _;

use spde_core::ensemble::EnsembleRecord;

pub const RECORD_HEADER: &str = "t,mean_norm,std_norm,mean_sq_norm,mean_h1_sq,mean_inf,alive";

/// One row of a simulation CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordRow {
    pub t: f64,
    pub mean_norm: f64,
    pub std_norm: f64,
    pub mean_sq_norm: f64,
    pub mean_h1_sq: f64,
    pub mean_inf: f64,
    pub alive: usize,
}

impl From<&EnsembleRecord> for RecordRow {
    fn from(r: &EnsembleRecord) -> Self {
        RecordRow {
            t: r.t,
            mean_norm: r.mean_norm,
            std_norm: r.std_norm,
            mean_sq_norm: r.mean_sq_norm,
            mean_h1_sq: r.mean_h1_sq,
            mean_inf: r.mean_inf,
            alive: r.alive_count,
        }
    }
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_records(records: &[EnsembleRecord]) -> String {
    let mut s = String::with_capacity(128 * (records.len() + 1));
    s.push_str(RECORD_HEADER);
    s.push('\n');
    for r in records.iter().map(RecordRow::from) {
        let floats = [
            r.t,
            r.mean_norm,
            r.std_norm,
            r.mean_sq_norm,
            r.mean_h1_sq,
            r.mean_inf,
        ];
        for x in floats {
            s.push_str(&fmt_f64(x));
            s.push(',');
        }
        let _ = writeln!(s, "{}", r.alive);
    }
    s
}

/// A table of floats under `header`.
pub fn write_table(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("csv line {line}: {reason}")]
pub struct CsvError {
    pub line: usize,
    pub reason: String,
}

pub fn read_records(text: &str) -> Result<Vec<RecordRow>, CsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RECORD_HEADER => {}
        _ => {
            return Err(CsvError {
                line: 1,
                reason: "missing header".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let err = |reason: &str| CsvError {
                line: i + 1,
                reason: reason.into(),
            };
            let cells: Vec<&str> = l.split(',').map(str::trim).collect();
            if cells.len() != 7 {
                return Err(err("expected 7 columns"));
            }
            let f = |k: usize| cells[k].parse::<f64>().map_err(|_| err("bad number"));
            Ok(RecordRow {
                t: f(0)?,
                mean_norm: f(1)?,
                std_norm: f(2)?,
                mean_sq_norm: f(3)?,
                mean_h1_sq: f(4)?,
                mean_inf: f(5)?,
                alive: cells[6].parse().map_err(|_| err("bad count"))?,
            })
        })
        .collect()
}
