//! Text formats for matrices, observations, bases, labels and traces.
//!
//! * dense matrix: one comma-separated row per line;
//! * observations: `col row value` triplets, 0-based, one per line;
//! * basis: `n` rows of `d` comma-separated values at 17 significant digits;
//! * labels: one integer per line, `-1` for outliers or unassigned columns.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grassmann::{ObservedVector, Subspace};

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_string(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse { line, msg: format!("bad number `{}`", s.trim()) })
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses a dense comma-separated matrix.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, l) in data_lines(text) {
        let row = l.split(',').map(|v| parse_f64(v, line)).collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse { line, msg: format!("expected {} values, got {}", first.len(), row.len()) });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 1, msg: "empty matrix".into() });
    }
    let (n, m) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn format_matrix(m: &DMatrix<f64>, full_precision: bool) -> String {
    let mut out = String::with_capacity(m.nrows() * m.ncols() * 24);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            let v = m[(i, j)];
            let _ = if full_precision { write!(out, "{v:.16e}") } else { write!(out, "{v}") };
        }
        out.push('\n');
    }
    out
}

/// Dense matrix in shortest round-trip decimal form.
pub fn format_dense(m: &DMatrix<f64>) -> String {
    format_matrix(m, false)
}

/// Basis at 17 significant digits.
pub fn format_basis(s: &Subspace) -> String {
    format_matrix(s.basis(), true)
}

/// Parses a basis file, or several bases stored side by side, each of
/// rank `rank`. Columns are re-orthonormalized only if they drift past the
/// orthonormality tolerance.
pub fn parse_bases(text: &str, rank: Option<usize>) -> Result<Vec<Subspace>> {
    let m = parse_matrix(text)?;
    let d = rank.unwrap_or(m.ncols());
    if d == 0 || m.ncols() % d != 0 {
        return Err(Error::ShapeMismatch(format!("{} basis columns is not a multiple of rank {d}", m.ncols())));
    }
    (0..m.ncols() / d)
        .map(|k| {
            let block = m.columns(k * d, d).into_owned();
            Subspace::from_orthonormal(block.clone()).or_else(|_| Subspace::orthonormalize(block))
        })
        .collect()
}

/// Side-by-side concatenation of bases sharing an ambient dimension.
pub fn concat_bases(bases: &[Subspace]) -> Result<DMatrix<f64>> {
    let n = bases.first().map(Subspace::ambient_dim).unwrap_or(0);
    if bases.iter().any(|b| b.ambient_dim() != n) {
        return Err(Error::ShapeMismatch("bases have different ambient dimensions".into()));
    }
    let total: usize = bases.iter().map(Subspace::rank).sum();
    let mut out = DMatrix::zeros(n, total);
    let mut at = 0;
    for b in bases {
        out.columns_mut(at, b.rank()).copy_from(b.basis());
        at += b.rank();
    }
    Ok(out)
}

/// Full observation of every column of a dense matrix.
pub fn dense_to_columns(x: &DMatrix<f64>) -> Vec<ObservedVector> {
    (0..x.ncols()).map(|j| ObservedVector::full(j, x.column(j).as_slice())).collect()
}

/// Observed entries as `col row value` lines, columns in order.
pub fn format_observations(columns: &[ObservedVector]) -> String {
    let mut out = String::new();
    for c in columns {
        for (&i, &v) in c.indices().iter().zip(c.values()) {
            let _ = writeln!(out, "{} {} {}", c.column_id(), i, v);
        }
    }
    out
}

/// Parsed observation file.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    /// One entry per column id `0..=max col`; columns without entries are empty.
    pub columns: Vec<ObservedVector>,
    /// `1 + ` the largest row index seen.
    pub min_rows: usize,
}

/// Parses `col row value` triplets in any order. Duplicate entries are
/// rejected.
pub fn parse_observations(text: &str) -> Result<Observations> {
    let mut per_col: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut min_rows = 0;
    for (line, l) in data_lines(text) {
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 3 {
            return Err(Error::Parse { line, msg: format!("expected `col row value`, got {} fields", f.len()) });
        }
        let col: usize = f[0].parse().map_err(|_| Error::Parse { line, msg: format!("bad column `{}`", f[0]) })?;
        let row: usize = f[1].parse().map_err(|_| Error::Parse { line, msg: format!("bad row `{}`", f[1]) })?;
        let v = parse_f64(f[2], line)?;
        if col >= per_col.len() {
            per_col.resize(col + 1, Vec::new());
        }
        per_col[col].push((row, v));
        min_rows = min_rows.max(row + 1);
    }
    let columns = per_col
        .into_iter()
        .enumerate()
        .map(|(j, mut entries)| {
            entries.sort_by_key(|e| e.0);
            if entries.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidObservation(format!("column {j} has a repeated row")));
            }
            let (idx, vals) = entries.into_iter().unzip();
            ObservedVector::new(j, idx, vals)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Observations { columns, min_rows })
}

pub fn format_labels(labels: &[Option<usize>]) -> String {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        match l {
            Some(k) => {
                let _ = writeln!(out, "{k}");
            }
            None => out.push_str("-1\n"),
        }
    }
    out
}

pub fn parse_labels(text: &str) -> Result<Vec<Option<usize>>> {
    data_lines(text)
        .map(|(line, l)| match l.parse::<i64>() {
            Ok(-1) => Ok(None),
            Ok(k) if k >= 0 => Ok(Some(k as usize)),
            _ => Err(Error::Parse { line, msg: format!("bad label `{l}`") }),
        })
        .collect()
}
