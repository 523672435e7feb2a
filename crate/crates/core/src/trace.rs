//! Per-iteration run log and its CSV form.

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "iter,col,eta,mu,level,residual,angle,skipped";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: u64,
    pub column_id: usize,
    pub eta: f64,
    pub mu: f64,
    pub level: i32,
    /// `‖r‖₂` of the spherized column; NaN when the column could not be fit.
    pub residual_norm: f64,
    pub angle: Option<f64>,
    pub skipped: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn new() -> Self {
        RunTrace::default()
    }

    pub fn push(&mut self, r: TraceRecord) {
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last_angle(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.angle)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = write!(
                out,
                "{},{},{},{},{},{},",
                r.iteration,
                r.column_id,
                fmt_f64(r.eta),
                fmt_f64(r.mu),
                r.level,
                fmt_f64(r.residual_norm)
            );
            if let Some(a) = r.angle {
                out.push_str(&fmt_f64(a));
            }
            out.push(',');
            out.push_str(if r.skipped { "1" } else { "0" });
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == TRACE_HEADER => {}
            _ => return Err(Error::Parse { line: 1, msg: format!("expected header `{TRACE_HEADER}`") }),
        }
        let mut trace = RunTrace::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(Error::Parse { line: line_no, msg: format!("expected 8 fields, got {}", fields.len()) });
            }
            let perr = |what: &str| Error::Parse { line: line_no, msg: format!("bad {what}") };
            let angle = match fields[6].trim() {
                "" => None,
                s => Some(s.parse::<f64>().map_err(|_| perr("angle"))?),
            };
            let skipped = match fields[7].trim() {
                "0" => false,
                "1" => true,
                _ => return Err(perr("skipped flag")),
            };
            trace.push(TraceRecord {
                iteration: fields[0].trim().parse().map_err(|_| perr("iter"))?,
                column_id: fields[1].trim().parse().map_err(|_| perr("col"))?,
                eta: fields[2].trim().parse().map_err(|_| perr("eta"))?,
                mu: fields[3].trim().parse().map_err(|_| perr("mu"))?,
                level: fields[4].trim().parse().map_err(|_| perr("level"))?,
                residual_norm: fields[5].trim().parse().map_err(|_| perr("residual"))?,
                angle,
                skipped,
            });
        }
        Ok(trace)
    }
}

/// Shortest decimal that parses back to the same `f64`.
fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:e}")
    }
}
