//! Dataset loaders: delimited tables, logistic-regression designs, libsvm
//! files, return series and GLMM recipes.

mod design;
mod libsvm;
mod recipes;

pub use design::{load_csv_design, ColumnScaling, Design, DesignOptions};
pub use libsvm::{load_libsvm, LibsvmData};
pub use recipes::{epilepsy, polypharmacy, toenail, EpilepsyModel};

use crate::error::{Error, Result};
use std::path::{Path, PathBuf};

/// A delimited text table held as strings, one vector per column.
#[derive(Debug, Clone)]
pub struct Table {
    path: PathBuf,
    header: bool,
    pub names: Vec<String>,
    pub columns: Vec<Vec<String>>,
}

impl Table {
    /// Reads a table. Without a header the columns are named V1, V2, …
    /// A delimiter of `b' '` splits on runs of whitespace.
    pub fn read(path: &Path, delimiter: u8, has_header: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
        if delimiter == b' ' {
            for (k, line) in text.lines().enumerate() {
                let fields: Vec<String> = line.split_whitespace().map(str::to_string).collect();
                if !fields.is_empty() {
                    rows.push((k + 1, fields));
                }
            }
        } else {
            let mut rdr = csv::ReaderBuilder::new()
                .delimiter(delimiter)
                .has_headers(false)
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(text.as_bytes());
            for rec in rdr.records() {
                let rec = rec.map_err(|e| {
                    let line = e.position().map_or(0, |p| p.line() as usize);
                    Error::parse(path, line, e.to_string())
                })?;
                let line = rec.position().map_or(0, |p| p.line() as usize);
                if rec.iter().all(str::is_empty) {
                    continue;
                }
                rows.push((line, rec.iter().map(|s| s.trim_matches('"').to_string()).collect()));
            }
        }
        let mut iter = rows.into_iter();
        let names = if has_header {
            iter.next()
                .ok_or_else(|| Error::parse(path, 1, "missing header row"))?
                .1
        } else {
            Vec::new()
        };
        let body: Vec<_> = iter.collect();
        let width = if has_header {
            names.len()
        } else {
            body.first().map_or(0, |r| r.1.len())
        };
        let names = if has_header {
            names
        } else {
            (1..=width).map(|j| format!("V{j}")).collect()
        };
        let mut columns = vec![Vec::with_capacity(body.len()); width];
        for (line, fields) in body {
            if fields.len() != width {
                return Err(Error::parse(path, line, format!("expected {width} fields, found {}", fields.len())));
            }
            for (c, f) in columns.iter_mut().zip(fields) {
                c.push(f);
            }
        }
        Ok(Table {
            path: path.to_path_buf(),
            header: has_header,
            names,
            columns,
        })
    }

    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Case-insensitive column lookup.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n.eq_ignore_ascii_case(name))
    }

    pub fn column(&self, name: &str) -> Result<&[String]> {
        self.index_of(name)
            .map(|j| self.columns[j].as_slice())
            .ok_or_else(|| Error::InvalidInput(format!("{}: no column named {name}", self.path.display())))
    }

    /// The first of `names` that exists.
    pub fn column_any(&self, names: &[&str]) -> Result<&[String]> {
        names
            .iter()
            .find_map(|n| self.index_of(n))
            .map(|j| self.columns[j].as_slice())
            .ok_or_else(|| Error::InvalidInput(format!("{}: none of the columns {names:?} found", self.path.display())))
    }

    pub fn numeric(&self, j: usize) -> Result<Vec<f64>> {
        self.columns[j]
            .iter()
            .enumerate()
            .map(|(i, s)| parse_f64(s).ok_or_else(|| self.bad_value(i, j, s)))
            .collect()
    }

    pub fn numeric_by_name(&self, names: &[&str]) -> Result<Vec<f64>> {
        let j = names
            .iter()
            .find_map(|n| self.index_of(n))
            .ok_or_else(|| Error::InvalidInput(format!("{}: none of the columns {names:?} found", self.path.display())))?;
        self.numeric(j)
    }

    fn bad_value(&self, row: usize, col: usize, s: &str) -> Error {
        let line = row + 1 + usize::from(self.header);
        Error::parse(&self.path, line, format!("column {}: not a number: {s:?}", self.names[col]))
    }
}

pub(crate) fn parse_f64(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// A header row of names followed by rows of finite numbers.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let t = Table::read(path, b',', true)?;
    let cols = (0..t.names.len()).map(|j| t.numeric(j)).collect::<Result<Vec<_>>>()?;
    let rows = (0..t.nrows()).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    Ok((t.names, rows))
}

/// Mean-corrected percentage log returns y_t = 100{log(r_t/r_{t−1}) − mean}.
///
/// Reads one value per line, optionally after a header; with several
/// comma-separated columns the last one holds the rate.
pub fn load_returns(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rates = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or("").trim().trim_matches('"');
        match parse_f64(field) {
            Some(r) if r > 0.0 => rates.push(r),
            Some(r) => return Err(Error::parse(path, k + 1, format!("rate must be positive, got {r}"))),
            None if rates.is_empty() && k == 0 => continue,
            None => return Err(Error::parse(path, k + 1, format!("not a number: {field:?}"))),
        }
    }
    returns_from_rates(&rates).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::InvalidInput(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn returns_from_rates(rates: &[f64]) -> Result<Vec<f64>> {
    if rates.len() < 2 {
        return Err(Error::InvalidInput("need at least two rates".into()));
    }
    if let Some(r) = rates.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::InvalidInput(format!("rate must be positive, got {r}")));
    }
    let raw: Vec<f64> = rates.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    Ok(raw.iter().map(|v| 100.0 * (v - mean)).collect())
}
