//! Tabular dataset: covariates, binary treatment, outcome, optional
//! negative-control-outcome columns.
//!
//! CSV schema (header required): covariates are the columns named `x1..xp`,
//! the treatment column is `t` (strictly 0/1), the outcome is `y`, and
//! negative control outcomes are `w1..wq`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Treatment arm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub fn label(self) -> u8 {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }
}

/// One observational or RCT sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    p: usize,
    /// Row-major covariate matrix, `n * p`.
    x: Vec<f64>,
    t: Vec<u8>,
    y: Vec<f64>,
    /// NCO columns, each of length `n`.
    w: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(x: Vec<f64>, p: usize, t: Vec<u8>, y: Vec<f64>, w: Vec<Vec<f64>>) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("dataset needs at least one covariate"));
        }
        if x.len() % p != 0 {
            return Err(Error::invalid("covariate buffer length is not a multiple of p"));
        }
        let n = x.len() / p;
        if n == 0 {
            return Err(Error::invalid("dataset has no rows"));
        }
        if t.len() != n || y.len() != n {
            return Err(Error::invalid("column lengths disagree"));
        }
        for col in &w {
            if col.len() != n {
                return Err(Error::invalid("NCO column length disagrees"));
            }
        }
        if t.iter().any(|&ti| ti > 1) {
            return Err(Error::invalid("treatment must be 0/1"));
        }
        if x.iter().any(|v| !v.is_finite())
            || y.iter().any(|v| !v.is_finite())
            || w.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::invalid("non-finite entry in dataset"));
        }
        Ok(Dataset { n, p, x, t, y, w })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_covariates(&self) -> usize {
        self.p
    }

    pub fn n_ncos(&self) -> usize {
        self.w.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn covariates(&self) -> &[f64] {
        &self.x
    }

    pub fn treatment(&self) -> &[u8] {
        &self.t
    }

    pub fn outcome(&self) -> &[f64] {
        &self.y
    }

    pub fn nco(&self, k: usize) -> &[f64] {
        &self.w[k]
    }

    pub fn arm_indices(&self, arm: Arm) -> Vec<usize> {
        let label = arm.label();
        (0..self.n).filter(|&i| self.t[i] == label).collect()
    }

    /// New dataset with the outcome replaced (used to point the bounds
    /// machinery at an NCO column). NCO columns are dropped in the copy.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Dataset> {
        Dataset::new(self.x.clone(), self.p, self.t.clone(), y, Vec::new())
    }

    /// Row subset in the given index order (duplicates allowed, so this also
    /// serves bootstrap resampling).
    pub fn select(&self, idx: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(idx.len() * self.p);
        let mut t = Vec::with_capacity(idx.len());
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(self.row(i));
            t.push(self.t[i]);
            y.push(self.y[i]);
        }
        let w = self
            .w
            .iter()
            .map(|col| idx.iter().map(|&i| col[i]).collect())
            .collect();
        Dataset { n: idx.len(), p: self.p, x, t, y, w }
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let mut reader = csv::Reader::from_path(path.as_ref())?;
        let headers = reader.headers()?.clone();
        let layout = ColumnLayout::from_headers(headers.iter())?;

        let mut x = Vec::new();
        let mut t = Vec::new();
        let mut y = Vec::new();
        let mut w: Vec<Vec<f64>> = vec![Vec::new(); layout.w_cols.len()];
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(Error::Schema(format!("row {} has {} fields, expected {}", line + 2, record.len(), headers.len())));
            }
            let field = |col: usize| -> Result<f64> {
                record[col]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Schema(format!("row {}: cannot parse `{}` as a number", line + 2, &record[col])))
            };
            for &col in &layout.x_cols {
                x.push(field(col)?);
            }
            let tv = field(layout.t_col)?;
            if tv != 0.0 && tv != 1.0 {
                return Err(Error::Schema(format!("row {}: t must be 0 or 1, got {}", line + 2, tv)));
            }
            t.push(tv as u8);
            y.push(field(layout.y_col)?);
            for (k, &col) in layout.w_cols.iter().enumerate() {
                w[k].push(field(col)?);
            }
        }
        Dataset::new(x, layout.x_cols.len(), t, y, w)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for j in 1..=self.p {
            let _ = write!(out, "x{},", j);
        }
        out.push_str("t,y");
        for k in 1..=self.w.len() {
            let _ = write!(out, ",w{}", k);
        }
        out.push('\n');
        for i in 0..self.n {
            for v in self.row(i) {
                let _ = write!(out, "{},", v);
            }
            let _ = write!(out, "{},{}", self.t[i], self.y[i]);
            for col in &self.w {
                let _ = write!(out, ",{}", col[i]);
            }
            out.push('\n');
        }
        out
    }
}

struct ColumnLayout {
    x_cols: Vec<usize>,
    t_col: usize,
    y_col: usize,
    w_cols: Vec<usize>,
}

impl ColumnLayout {
    fn from_headers<'a>(headers: impl Iterator<Item = &'a str>) -> Result<Self> {
        let mut x_named: Vec<(usize, usize)> = Vec::new();
        let mut w_named: Vec<(usize, usize)> = Vec::new();
        let mut t_col = None;
        let mut y_col = None;
        for (col, name) in headers.enumerate() {
            let name = name.trim();
            if name == "t" {
                if t_col.replace(col).is_some() {
                    return Err(Error::Schema("duplicate column `t`".into()));
                }
            } else if name == "y" {
                if y_col.replace(col).is_some() {
                    return Err(Error::Schema("duplicate column `y`".into()));
                }
            } else if let Some(idx) = parse_indexed(name, 'x') {
                x_named.push((idx, col));
            } else if let Some(idx) = parse_indexed(name, 'w') {
                w_named.push((idx, col));
            } else {
                return Err(Error::Schema(format!("unrecognized column `{}` (expected x1..xp, t, y, w1..wq)", name)));
            }
        }
        let t_col = t_col.ok_or_else(|| Error::Schema("missing column `t`".into()))?;
        let y_col = y_col.ok_or_else(|| Error::Schema("missing column `y`".into()))?;
        x_named.sort_by_key(|&(idx, _)| idx);
        w_named.sort_by_key(|&(idx, _)| idx);
        for (expect, &(idx, _)) in (1..).zip(&x_named) {
            if idx != expect {
                return Err(Error::Schema("x columns must be numbered x1..xp without gaps".into()));
            }
        }
        for (expect, &(idx, _)) in (1..).zip(&w_named) {
            if idx != expect {
                return Err(Error::Schema("w columns must be numbered w1..wq without gaps".into()));
            }
        }
        if x_named.is_empty() {
            return Err(Error::Schema("missing covariate columns x1..xp".into()));
        }
        Ok(ColumnLayout {
            x_cols: x_named.into_iter().map(|(_, c)| c).collect(),
            t_col,
            y_col,
            w_cols: w_named.into_iter().map(|(_, c)| c).collect(),
        })
    }
}

fn parse_indexed(name: &str, prefix: char) -> Option<usize> {
    let rest = name.strip_prefix(prefix)?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::new(
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            2,
            vec![1, 0, 1],
            vec![1.0, 2.0, 3.0],
            vec![vec![9.0, 8.0, 7.0]],
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let d = toy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        d.write_csv(&path).unwrap();
        let back = Dataset::read_csv(&path).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn schema_rejects_unknown_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x1,t,y,z\n0,1,2,3\n").unwrap();
        assert!(matches!(Dataset::read_csv(&path), Err(Error::Schema(_))));
    }

    #[test]
    fn schema_rejects_non_binary_treatment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x1,t,y\n0.0,2,1.0\n").unwrap();
        assert!(matches!(Dataset::read_csv(&path), Err(Error::Schema(_))));
    }

    #[test]
    fn select_duplicates_rows() {
        let d = toy();
        let s = d.select(&[2, 2, 0]);
        assert_eq!(s.n_rows(), 3);
        assert_eq!(s.outcome(), &[3.0, 3.0, 1.0]);
        assert_eq!(s.nco(0), &[7.0, 7.0, 9.0]);
    }

    #[test]
    fn columns_reordered_by_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "x2,y,x1,t\n5.0,1.0,4.0,0\n").unwrap();
        let d = Dataset::read_csv(&path).unwrap();
        assert_eq!(d.row(0), &[4.0, 5.0]);
    }
}
