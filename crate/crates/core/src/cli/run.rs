use super::config::{GlmmRecipe, ModelSpec, RunConfig};
use crate::data::{self, EpilepsyModel};
use crate::diagnostics::{compare, CompareSettings, ComparisonReport, ReferenceSamples};
use crate::error::{Error, Result};
use crate::optim::{fit, FitResult};
use crate::targets::{GaussianTarget, LogisticModel, SvModel, TargetModel};
use nalgebra::DMatrix;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Numbers separated by commas or whitespace, one matrix row per line.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| data::parse_f64(s).ok_or_else(|| Error::parse(path, k + 1, format!("not a number: {s:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(path, k + 1, format!("expected {} values, found {}", first.len(), row.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(path, 1, "no numbers found"));
    }
    Ok(DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]))
}

/// A vector stored either as one row or as one column.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let m = read_matrix(path)?;
    if m.nrows() != 1 && m.ncols() != 1 {
        return Err(Error::InvalidInput(format!("{}: expected a single row or column", path.display())));
    }
    Ok(m.iter().copied().collect())
}

pub fn build_model(spec: &ModelSpec) -> Result<Box<dyn TargetModel>> {
    Ok(match spec {
        ModelSpec::Gaussian { nu, lambda } => Box::new(GaussianTarget::new(read_vector(nu)?, read_matrix(lambda)?)?),
        ModelSpec::LogisticCsv { path, options, sigma0_sq } => {
            let d = data::load_csv_design(path, options)?;
            Box::new(LogisticModel::new(d.x, d.y, *sigma0_sq)?)
        }
        ModelSpec::LogisticLibsvm {
            path,
            features,
            intercept,
            sigma0_sq,
        } => {
            let d = data::load_libsvm(path, *features)?;
            Box::new(LogisticModel::new(d.to_dense(*intercept), d.y, *sigma0_sq)?)
        }
        ModelSpec::Glmm { recipe, path } => Box::new(match recipe {
            GlmmRecipe::EpilepsyI => data::epilepsy(path, EpilepsyModel::I)?,
            GlmmRecipe::EpilepsyII => data::epilepsy(path, EpilepsyModel::II)?,
            GlmmRecipe::Toenail => data::toenail(path)?,
            GlmmRecipe::Polypharmacy => data::polypharmacy(path)?,
        }),
        ModelSpec::Sv { path, sigma0_sq } => Box::new(SvModel::new(data::load_returns(path)?, *sigma0_sq)?),
    })
}

pub struct RunOutput {
    pub fit: FitResult,
    pub comparison: Option<ComparisonReport>,
    pub fit_path: PathBuf,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_trace_csv(fit: &FitResult, window: usize, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "window,last_iteration,lower_bound")?;
    for (k, lb) in fit.lower_bound_trace.iter().enumerate() {
        let last = ((k + 1) * window).min(fit.iterations);
        writeln!(out, "{},{last},{lb:.10e}", k + 1)?;
    }
    Ok(())
}

/// Fits the configured model and writes `fit.json`, `trace.csv`,
/// `config.txt` and, with a reference sample, `comparison.{json,csv}`
/// into the output directory.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let model = build_model(&cfg.model)?;
    let result = fit(model.as_ref(), &cfg.fit)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let fit_path = dir.join("fit.json");
    write_file(&fit_path, result.to_json().as_bytes())?;
    let mut trace = Vec::new();
    write_trace_csv(&result, cfg.fit.window, &mut trace).map_err(|e| Error::io(dir.join("trace.csv"), e))?;
    write_file(&dir.join("trace.csv"), &trace)?;
    write_file(&dir.join("config.txt"), cfg.echo().as_bytes())?;
    let comparison = match &cfg.compare {
        Some(spec) => {
            let reference = ReferenceSamples::from_csv(&spec.reference)?;
            let settings = CompareSettings {
                replicates: spec.replicates,
                m: spec.m,
                seed: cfg.fit.seed,
            };
            let report = compare(&result, &reference, &settings)?;
            write_comparison(&report, dir)?;
            Some(report)
        }
        None => None,
    };
    Ok(RunOutput {
        fit: result,
        comparison,
        fit_path,
    })
}

pub fn write_comparison(report: &ComparisonReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("comparison.json"), report.to_json().as_bytes())?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv).map_err(|e| Error::io(dir.join("comparison.csv"), e))?;
    write_file(&dir.join("comparison.csv"), &csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_reader() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.txt");
        std::fs::write(&p, "1, 2\n# note\n3 4\n").unwrap();
        let m = read_matrix(&p).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        std::fs::write(&p, "1\n2\n3\n").unwrap();
        assert_eq!(read_vector(&p).unwrap(), vec![1.0, 2.0, 3.0]);
        std::fs::write(&p, "1 2\n3\n").unwrap();
        assert!(read_matrix(&p).unwrap_err().to_string().contains(":2:"));
    }
}
