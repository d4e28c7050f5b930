//! Covariate constructions for the epilepsy, toenail and polypharmacy
//! mixed models, starting from long-format CSV files (one row per
//! observation, with a header). Subjects keep their order of first
//! appearance.

use super::{parse_f64, Table};
use crate::error::{Error, Result};
use crate::targets::{GlmmFamily, GlmmModel, GlmmSubject};
use nalgebra::DMatrix;
use std::collections::HashMap;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpilepsyModel {
    /// Random intercept, V4 indicator.
    I,
    /// Random intercept and Visit slope.
    II,
}

/// Row indices grouped by subject id.
fn group(ids: &[String]) -> Vec<Vec<usize>> {
    let mut order: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let k = *order.entry(id.as_str()).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[k].push(i);
    }
    groups
}

/// 0/1 from a number or a label; `ones` lists the labels meaning 1.
fn binary(t: &Table, col: &[&str], ones: &[&str], zeros: &[&str]) -> Result<Vec<f64>> {
    let values = t.column_any(col)?;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let lower = v.to_ascii_lowercase();
            match parse_f64(v) {
                Some(x) if x == 0.0 || x == 1.0 => Ok(x),
                None if ones.iter().any(|o| lower == *o) => Ok(1.0),
                None if zeros.iter().any(|o| lower == *o) => Ok(0.0),
                _ => Err(Error::parse(t.path(), i + 2, format!("column {}: expected a 0/1 code, got {v:?}", col[0]))),
            }
        })
        .collect()
}

fn build(
    family: GlmmFamily,
    ids: &[String],
    rows: impl Fn(usize) -> (Vec<f64>, Vec<f64>),
    y: &[f64],
) -> Result<GlmmModel> {
    let subjects = group(ids)
        .into_iter()
        .map(|idx| {
            let cols: Vec<_> = idx.iter().map(|&i| rows(i)).collect();
            let (p, r) = (cols[0].0.len(), cols[0].1.len());
            GlmmSubject {
                x: DMatrix::from_fn(idx.len(), p, |a, b| cols[a].0[b]),
                z: DMatrix::from_fn(idx.len(), r, |a, b| cols[a].1[b]),
                y: idx.iter().map(|&i| y[i]).collect(),
            }
        })
        .collect();
    GlmmModel::new(family, subjects, 100.0, 100.0)
}

/// Poisson model for seizure counts. Columns: subject, y, trt, base
/// (eight-week baseline count), age, period (1–4).
///
/// Base = log(base/4), Age = log(age) centred over patients, Visit codes
/// periods 1–4 as −0.3, −0.1, 0.1, 0.3, V4 flags period 4.
pub fn epilepsy(path: &Path, which: EpilepsyModel) -> Result<GlmmModel> {
    let t = Table::read(path, b',', true)?;
    let ids = t.column_any(&["subject", "id"])?;
    let y = t.numeric_by_name(&["y", "seizures"])?;
    let trt = binary(&t, &["trt", "treatment"], &["progabide"], &["placebo"])?;
    let base = t.numeric_by_name(&["base"])?;
    let age = t.numeric_by_name(&["age"])?;
    let period = t.numeric_by_name(&["period", "visit"])?;
    if let Some(i) = (0..t.nrows()).find(|&i| !(base[i] > 0.0 && age[i] > 0.0)) {
        return Err(Error::parse(path, i + 2, "base and age must be positive"));
    }
    if let Some(i) = period.iter().position(|p| ![1.0, 2.0, 3.0, 4.0].contains(p)) {
        return Err(Error::parse(path, i + 2, format!("period must be 1 to 4, got {}", period[i])));
    }
    let groups = group(ids);
    let mean_log_age = groups.iter().map(|g| age[g[0]].ln()).sum::<f64>() / groups.len() as f64;
    let row = |i: usize| {
        let b = (base[i] / 4.0).ln();
        let visit = -0.3 + 0.2 * (period[i] - 1.0);
        let last = if which == EpilepsyModel::I {
            f64::from(u8::from(period[i] == 4.0))
        } else {
            visit
        };
        let x = vec![1.0, b, trt[i], age[i].ln() - mean_log_age, b * trt[i], last];
        let z = match which {
            EpilepsyModel::I => vec![1.0],
            EpilepsyModel::II => vec![1.0, visit],
        };
        (x, z)
    };
    build(GlmmFamily::PoissonLog, ids, row, &y)
}

/// Logistic random-intercept model. Columns: id, outcome, treatment,
/// time (months). Time is standardized over all observations.
pub fn toenail(path: &Path) -> Result<GlmmModel> {
    let t = Table::read(path, b',', true)?;
    let ids = t.column_any(&["id", "patientid", "patient"])?;
    let y = binary(&t, &["outcome"], &["moderate or severe"], &["none or mild"])?;
    let trt = binary(&t, &["treatment", "trt"], &["terbinafine"], &["itraconazole"])?;
    let time = t.numeric_by_name(&["time"])?;
    let n = time.len() as f64;
    let mean = time.iter().sum::<f64>() / n;
    let sd = (time.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 0.0) {
        return Err(Error::InvalidInput(format!("{}: time is constant", path.display())));
    }
    let row = |i: usize| {
        let s = (time[i] - mean) / sd;
        (vec![1.0, trt[i], s, trt[i] * s], vec![1.0])
    };
    build(GlmmFamily::BernoulliLogit, ids, row, &y)
}

/// Logistic random-intercept model. Columns: id, polypharmacy, gender,
/// race, age, and either mhv4 (0–3 band codes) or mhv (visit counts), and
/// either inptmhv3 or inptmhv. Race and INPTMHV are 1 when nonzero,
/// Age = log(age/10), MHV bands are 1–5, 6–14 and 15 or more visits.
pub fn polypharmacy(path: &Path) -> Result<GlmmModel> {
    let t = Table::read(path, b',', true)?;
    let ids = t.column_any(&["id"])?;
    let y = binary(&t, &["polypharmacy"], &[], &[])?;
    let gender = binary(&t, &["gender"], &[], &[])?;
    let race: Vec<f64> = t.numeric_by_name(&["race"])?.iter().map(|&r| f64::from(u8::from(r != 0.0))).collect();
    let age = t.numeric_by_name(&["age"])?;
    if let Some(i) = age.iter().position(|a| !(*a > 0.0)) {
        return Err(Error::parse(path, i + 2, "age must be positive"));
    }
    let band: Vec<u8> = if t.index_of("mhv4").is_some() {
        t.numeric_by_name(&["mhv4"])?.iter().map(|&c| c.clamp(0.0, 3.0) as u8).collect()
    } else {
        t.numeric_by_name(&["mhv"])?
            .iter()
            .map(|&v| match v {
                v if v >= 15.0 => 3,
                v if v >= 6.0 => 2,
                v if v >= 1.0 => 1,
                _ => 0,
            })
            .collect()
    };
    let inpt: Vec<f64> = t
        .numeric_by_name(&["inptmhv3", "inptmhv"])?
        .iter()
        .map(|&v| f64::from(u8::from(v != 0.0)))
        .collect();
    let row = |i: usize| {
        let m = |k: u8| f64::from(u8::from(band[i] == k));
        let x = vec![1.0, gender[i], race[i], (age[i] / 10.0).ln(), m(1), m(2), m(3), inpt[i]];
        (x, vec![1.0])
    };
    build(GlmmFamily::BernoulliLogit, ids, row, &y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::TargetModel;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    const EPIL: &str = "y,trt,base,age,period,subject\n\
        5,placebo,11,31,1,1\n3,placebo,11,31,2,1\n3,placebo,11,31,3,1\n3,placebo,11,31,4,1\n\
        2,progabide,76,18,1,2\n4,progabide,76,18,2,2\n0,progabide,76,18,3,2\n5,progabide,76,18,4,2\n";

    #[test]
    fn epilepsy_dimensions_and_covariates() {
        let f = file(EPIL);
        let m1 = epilepsy(f.path(), EpilepsyModel::I).unwrap();
        // 2 subjects × 1 effect + 6 fixed + 1 covariance parameter
        assert_eq!(m1.dim(), 2 + 6 + 1);
        let m2 = epilepsy(f.path(), EpilepsyModel::II).unwrap();
        assert_eq!(m2.dim(), 2 * 2 + 6 + 3);
        assert_eq!(m2.n_random(), 2);
        // log h at θ = 0 depends on the design only through η = 0
        assert!(m1.log_h(&vec![0.0; m1.dim()]).unwrap().is_finite());
    }

    #[test]
    fn toenail_and_polypharmacy_parse() {
        let f = file("id,outcome,treatment,time\n1,none or mild,terbinafine,0\n1,moderate or severe,terbinafine,1\n2,0,0,0.5\n");
        let m = toenail(f.path()).unwrap();
        assert_eq!((m.n_subjects(), m.n_fixed(), m.dim()), (2, 4, 2 + 4 + 1));
        let f = file("ID,POLYPHARMACY,GENDER,RACE,AGE,MHV4,INPTMHV3\n1,0,1,0,40,0,0\n1,1,1,0,41,3,1\n2,1,0,2,60,1,0\n");
        let m = polypharmacy(f.path()).unwrap();
        assert_eq!((m.n_subjects(), m.n_fixed()), (2, 8));
        let bad = file("id,outcome,treatment,time\n1,maybe,0,0\n");
        assert!(toenail(bad.path()).unwrap_err().to_string().contains(":2:"));
    }

    #[test]
    fn first_appearance_order() {
        let ids: Vec<String> = ["b", "a", "b", "c", "a"].iter().map(|s| s.to_string()).collect();
        assert_eq!(group(&ids), vec![vec![0, 2], vec![1, 4], vec![3]]);
    }
}
