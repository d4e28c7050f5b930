use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::path::Path;

/// Rows of (0-based index, value) pairs with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LibsvmData {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub y: Vec<f64>,
    pub n_features: usize,
}

impl LibsvmData {
    /// Dense design; with `intercept` a leading column of ones is added.
    pub fn to_dense(&self, intercept: bool) -> DMatrix<f64> {
        let off = usize::from(intercept);
        let mut x = DMatrix::zeros(self.rows.len(), self.n_features + off);
        for (i, row) in self.rows.iter().enumerate() {
            if intercept {
                x[(i, 0)] = 1.0;
            }
            for &(j, v) in row {
                x[(i, j + off)] = v;
            }
        }
        x
    }
}

fn parse_label(tok: &str) -> Option<f64> {
    match tok.parse::<f64>().ok()? {
        1.0 => Some(1.0),
        v if v == -1.0 || v == 0.0 => Some(0.0),
        _ => None,
    }
}

/// Parses `label idx:val ...` lines with 1-based indices. Labels ±1 (or
/// 0/1) become {0, 1}; the feature count is the largest index seen unless
/// `n_features` is given. Text after `#` is ignored.
pub fn load_libsvm(path: &Path, n_features: Option<usize>) -> Result<LibsvmData> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut max_index = 0;
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::parse(path, k + 1, msg);
        let mut toks = line.split_whitespace();
        let label = toks.next().unwrap_or_default();
        y.push(parse_label(label).ok_or_else(|| err(format!("label must be ±1 or 0/1, got {label:?}")))?);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for tok in toks {
            let (idx, val) = tok.split_once(':').ok_or_else(|| err(format!("expected index:value, got {tok:?}")))?;
            let idx: usize = idx.parse().map_err(|_| err(format!("bad feature index {idx:?}")))?;
            if idx == 0 {
                return Err(err("feature indices are 1-based".into()));
            }
            let val: f64 = val
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| err(format!("bad feature value {val:?}")))?;
            if row.iter().any(|&(j, _)| j == idx - 1) {
                return Err(err(format!("feature index {idx} repeated")));
            }
            max_index = max_index.max(idx);
            row.push((idx - 1, val));
        }
        row.sort_by_key(|e| e.0);
        rows.push(row);
    }
    let n_features = match n_features {
        Some(n) if n < max_index => {
            return Err(Error::InvalidInput(format!(
                "{}: feature index {max_index} exceeds the declared {n} features",
                path.display()
            )))
        }
        Some(n) => n,
        None => max_index,
    };
    Ok(LibsvmData { rows, y, n_features })
}
