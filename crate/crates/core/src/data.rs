//! Observed data for one mediation study and its CSV representation.
//!
//! The CSV layout is a single header row with columns `y`, `a`,
//! `m1..mp` and `c1..cq`, one row per subject. Column order in the file
//! is free; the index suffixes must be contiguous starting at 1.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome `y`, exposure `a`, mediators `m` (n x p) and covariates `c` (n x q).
#[derive(Debug, Clone, PartialEq)]
pub struct MediationDataset {
    pub y: Vec<f64>,
    pub a: Vec<f64>,
    pub m: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

/// One violated dataset invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension(String),
    NonFinite { field: String, row: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension(msg) => write!(f, "dimension: {msg}"),
            Violation::NonFinite { field, row } => write!(f, "non-finite value in {field} at row {row}"),
        }
    }
}

/// Mean and sample SD removed from one column by [`MediationDataset::standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

impl ColumnTransform {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.sd + self.mean
    }
}

/// Per-column transforms in the order y, a, m1..mp, c1..cq.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub columns: Vec<ColumnTransform>,
}

impl MediationDataset {
    /// Builds a dataset and checks every invariant.
    pub fn new(y: Vec<f64>, a: Vec<f64>, m: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let d = Self { y, a, m, c };
        d.validate()?;
        Ok(d)
    }

    /// Dataset without covariates.
    pub fn without_covariates(y: Vec<f64>, a: Vec<f64>, m: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        Self::new(y, a, m, DMatrix::zeros(n, 0))
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.m.ncols()
    }

    pub fn q(&self) -> usize {
        self.c.ncols()
    }

    /// Reports every violated invariant at once.
    pub fn validate(&self) -> Result<()> {
        let violations = self.violations();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidDataset(violations.iter().map(ToString::to_string).collect()))
        }
    }

    /// Returns the list of violations without wrapping them in an error.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.y.len();
        if n == 0 {
            out.push(Violation::Dimension("dataset has no subjects".into()));
        }
        if self.m.ncols() == 0 {
            out.push(Violation::Dimension("m has no mediator columns".into()));
        }
        for (name, rows) in [("a", self.a.len()), ("m", self.m.nrows()), ("c", self.c.nrows())] {
            if rows != n {
                out.push(Violation::Dimension(format!("{name} has {rows} rows, y has {n}")));
            }
        }
        let mut check = |field: String, values: &[f64]| {
            if let Some(row) = values.iter().position(|v| !v.is_finite()) {
                out.push(Violation::NonFinite { field, row });
            }
        };
        check("y".into(), &self.y);
        check("a".into(), &self.a);
        for j in 0..self.m.ncols() {
            check(format!("m{}", j + 1), self.m.column(j).as_slice());
        }
        for w in 0..self.c.ncols() {
            check(format!("c{}", w + 1), self.c.column(w).as_slice());
        }
        out
    }

    /// Centres every column and scales it to unit sample SD.
    pub fn standardize(&self) -> Result<(MediationDataset, Standardization)> {
        self.validate()?;
        let mut columns = Vec::with_capacity(2 + self.p() + self.q());
        let mut out = self.clone();
        columns.push(standardize_column("y", &mut out.y)?);
        columns.push(standardize_column("a", &mut out.a)?);
        for j in 0..self.p() {
            let name = format!("m{}", j + 1);
            columns.push(standardize_column(&name, out.m.column_mut(j).as_mut_slice())?);
        }
        for w in 0..self.q() {
            let name = format!("c{}", w + 1);
            columns.push(standardize_column(&name, out.c.column_mut(w).as_mut_slice())?);
        }
        Ok((out, Standardization { columns }))
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec!["y".to_string(), "a".to_string()];
        names.extend((1..=self.p()).map(|j| format!("m{j}")));
        names.extend((1..=self.q()).map(|w| format!("c{w}")));
        names
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.column_names())?;
        let mut row = Vec::with_capacity(2 + self.p() + self.q());
        for i in 0..self.n() {
            row.clear();
            row.push(self.y[i].to_string());
            row.push(self.a[i].to_string());
            row.extend((0..self.p()).map(|j| self.m[(i, j)].to_string()));
            row.extend((0..self.q()).map(|k| self.c[(i, k)].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut y_col = None;
        let mut a_col = None;
        let mut m_cols: Vec<(usize, usize)> = Vec::new();
        let mut c_cols: Vec<(usize, usize)> = Vec::new();
        for (pos, h) in headers.iter().enumerate() {
            let h = h.trim();
            match h {
                "y" => y_col = Some(pos),
                "a" => a_col = Some(pos),
                _ => {
                    let parsed = h
                        .strip_prefix('m')
                        .and_then(|s| s.parse::<usize>().ok())
                        .map(|k| (true, k))
                        .or_else(|| h.strip_prefix('c').and_then(|s| s.parse::<usize>().ok()).map(|k| (false, k)));
                    match parsed {
                        Some((true, k)) if k >= 1 => m_cols.push((k, pos)),
                        Some((false, k)) if k >= 1 => c_cols.push((k, pos)),
                        _ => return Err(Error::Dimension(format!("unrecognised column `{h}`"))),
                    }
                }
            }
        }
        let y_col = y_col.ok_or_else(|| Error::Dimension("missing column `y`".into()))?;
        let a_col = a_col.ok_or_else(|| Error::Dimension("missing column `a`".into()))?;
        m_cols.sort_unstable();
        c_cols.sort_unstable();
        for (prefix, cols) in [("m", &m_cols), ("c", &c_cols)] {
            for (expected, (k, _)) in (1..).zip(cols.iter()) {
                if *k != expected {
                    return Err(Error::Dimension(format!("column {prefix}{expected} missing or duplicated")));
                }
            }
        }

        let (p, q) = (m_cols.len(), c_cols.len());
        let (mut y, mut a) = (Vec::new(), Vec::new());
        let mut m_rows: Vec<f64> = Vec::new();
        let mut c_rows: Vec<f64> = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let cell = |pos: usize, name: &str| -> Result<f64> {
                let raw = rec.get(pos).map(str::trim).unwrap_or("");
                if raw.is_empty() {
                    return Err(Error::Dimension(format!("missing value in column {name} at row {row}")));
                }
                raw.parse::<f64>()
                    .map_err(|_| Error::Dimension(format!("unparseable value `{raw}` in column {name} at row {row}")))
            };
            y.push(cell(y_col, "y")?);
            a.push(cell(a_col, "a")?);
            for (k, pos) in &m_cols {
                m_rows.push(cell(*pos, &format!("m{k}"))?);
            }
            for (k, pos) in &c_cols {
                c_rows.push(cell(*pos, &format!("c{k}"))?);
            }
        }
        let n = y.len();
        let m = DMatrix::from_row_slice(n, p, &m_rows);
        let c = DMatrix::from_row_slice(n, q, &c_rows);
        Self::new(y, a, m, c)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

fn standardize_column(name: &str, values: &mut [f64]) -> Result<ColumnTransform> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    let sd = (ss / (n - 1.0)).sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::DegenerateColumn(name.to_string()));
    }
    for v in values.iter_mut() {
        *v = (*v - mean) / sd;
    }
    // second pass removes the rounding left by the first
    let resid_mean = values.iter().sum::<f64>() / n;
    for v in values.iter_mut() {
        *v -= resid_mean;
    }
    Ok(ColumnTransform { name: name.to_string(), mean, sd })
}
