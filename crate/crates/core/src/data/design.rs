use super::{parse_f64, Table};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::Serialize;
use std::collections::BTreeSet;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct DesignOptions {
    pub delimiter: u8,
    pub has_header: bool,
    /// Response column name (V1, V2, … without a header).
    pub response: String,
    /// Columns to dummy-encode even though their values parse as numbers.
    /// Columns with any non-numeric value are always categorical.
    pub categorical: Vec<String>,
    /// Response value coded as 1. Defaults to the larger of the two values.
    pub positive: Option<String>,
    pub intercept: bool,
}

impl DesignOptions {
    pub fn new(response: impl Into<String>) -> Self {
        DesignOptions {
            delimiter: b',',
            has_header: true,
            response: response.into(),
            categorical: Vec::new(),
            positive: None,
            intercept: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ColumnScaling {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

/// Design matrix with column names. Quantitative columns are standardized
/// with the sample s.d.; a categorical column with k levels becomes k − 1
/// indicators, the smallest level in sorted order being the reference.
#[derive(Debug, Clone)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub names: Vec<String>,
    pub scaling: Vec<ColumnScaling>,
}

fn sorted_levels(values: &[String]) -> Vec<String> {
    let numeric = values.iter().all(|v| parse_f64(v).is_some());
    let mut levels: Vec<String> = values.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if numeric {
        levels.sort_by(|a, b| parse_f64(a).unwrap().total_cmp(&parse_f64(b).unwrap()));
    }
    levels
}

pub fn load_csv_design(path: &Path, opts: &DesignOptions) -> Result<Design> {
    let table = Table::read(path, opts.delimiter, opts.has_header)?;
    let n = table.nrows();
    if n == 0 {
        return Err(Error::InvalidInput(format!("{}: no data rows", path.display())));
    }
    let resp = table
        .index_of(&opts.response)
        .ok_or_else(|| Error::InvalidInput(format!("{}: no response column {}", path.display(), opts.response)))?;
    let levels = sorted_levels(&table.columns[resp]);
    if levels.len() != 2 {
        return Err(Error::InvalidInput(format!(
            "{}: response {} must take exactly two values, found {}",
            path.display(),
            opts.response,
            levels.len()
        )));
    }
    let positive = match &opts.positive {
        Some(p) if levels.contains(p) => p.clone(),
        Some(p) => return Err(Error::InvalidInput(format!("{}: response value {p} does not occur", path.display()))),
        None => levels[1].clone(),
    };
    let y = table.columns[resp].iter().map(|v| f64::from(u8::from(*v == positive))).collect();

    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    let mut scaling = Vec::new();
    if opts.intercept {
        cols.push(vec![1.0; n]);
        names.push("(Intercept)".to_string());
    }
    for (j, name) in table.names.iter().enumerate() {
        if j == resp {
            continue;
        }
        let raw = &table.columns[j];
        let forced = opts.categorical.iter().any(|c| c.eq_ignore_ascii_case(name));
        let numeric: Option<Vec<f64>> = raw.iter().map(|s| parse_f64(s)).collect();
        match numeric {
            Some(v) if !forced => {
                let mean = v.iter().sum::<f64>() / n as f64;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
                let sd = var.sqrt();
                if !(sd > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "{}: column {name} has zero standard deviation",
                        path.display()
                    )));
                }
                cols.push(v.iter().map(|x| (x - mean) / sd).collect());
                names.push(name.clone());
                scaling.push(ColumnScaling {
                    name: name.clone(),
                    mean,
                    sd,
                });
            }
            _ => {
                let levels = sorted_levels(raw);
                if levels.len() < 2 {
                    return Err(Error::InvalidInput(format!("{}: column {name} has a single level", path.display())));
                }
                for level in &levels[1..] {
                    cols.push(raw.iter().map(|v| f64::from(u8::from(v == level))).collect());
                    names.push(format!("{name}{level}"));
                }
            }
        }
    }
    let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    Ok(Design { x, y, names, scaling })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn toy_table_by_hand() {
        // x: mean 2.5, sample sd √(5/3); colour has levels blue < green < red
        let f = file("x,colour,y\n1,red,yes\n2,green,no\n3,blue,yes\n4,red,no\n");
        let mut opts = DesignOptions::new("y");
        opts.positive = Some("yes".into());
        let d = load_csv_design(f.path(), &opts).unwrap();
        assert_eq!(d.names, vec!["(Intercept)", "x", "colourgreen", "colourred"]);
        assert_eq!(d.y, vec![1.0, 0.0, 1.0, 0.0]);
        let sd = (5.0f64 / 3.0).sqrt();
        let expect = [
            [1.0, -1.5 / sd, 0.0, 1.0],
            [1.0, -0.5 / sd, 1.0, 0.0],
            [1.0, 0.5 / sd, 0.0, 0.0],
            [1.0, 1.5 / sd, 0.0, 1.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((d.x[(i, j)] - expect[i][j]).abs() < 1e-12);
            }
        }
        assert_eq!(d.scaling[0].mean, 2.5);
    }

    #[test]
    fn constant_column_is_rejected() {
        let f = file("a,b,y\n1,5,0\n2,5,1\n3,5,1\n");
        let err = load_csv_design(f.path(), &DesignOptions::new("y")).unwrap_err().to_string();
        assert!(err.contains("column b"), "{err}");
    }

    #[test]
    fn numeric_codes_can_be_forced_categorical() {
        let f = file("V1 V2 V3\n1 10 1\n2 20 2\n3 10 1\n");
        let mut opts = DesignOptions::new("V3");
        opts.delimiter = b' ';
        opts.categorical = vec!["V1".into()];
        let d = load_csv_design(f.path(), &opts).unwrap();
        assert_eq!(d.names, vec!["(Intercept)", "V12", "V13", "V2"]);
        assert_eq!(d.y, vec![0.0, 1.0, 0.0]);
    }
}
