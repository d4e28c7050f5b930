//! Flat `key = value` run configuration. Dotted keys group settings
//! (`model.kind`, `fit.method`, …); `#` starts a comment.

use crate::data::DesignOptions;
use crate::error::{Error, Result};
use crate::optim::{FitConfig, Method};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

const PATH_KEYS: [&str; 5] = ["model.data", "model.nu", "model.lambda", "compare.reference", "output.dir"];

const KNOWN_KEYS: [&str; 27] = [
    "seed",
    "model.kind",
    "model.data",
    "model.nu",
    "model.lambda",
    "model.format",
    "model.response",
    "model.delimiter",
    "model.header",
    "model.categorical",
    "model.positive",
    "model.features",
    "model.intercept",
    "model.sigma0_sq",
    "fit.method",
    "fit.batch_size",
    "fit.max_iter",
    "fit.window",
    "fit.adadelta_decay",
    "fit.adadelta_eps",
    "fit.init_mu",
    "fit.init_t",
    "fit.stopping_rule",
    "output.dir",
    "compare.reference",
    "compare.replicates",
    "compare.m",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlmmRecipe {
    EpilepsyI,
    EpilepsyII,
    Toenail,
    Polypharmacy,
}

#[derive(Debug, Clone)]
pub enum ModelSpec {
    /// ν and Λ read from plain numeric text files.
    Gaussian { nu: PathBuf, lambda: PathBuf },
    LogisticCsv { path: PathBuf, options: DesignOptions, sigma0_sq: f64 },
    LogisticLibsvm { path: PathBuf, features: Option<usize>, intercept: bool, sigma0_sq: f64 },
    Glmm { recipe: GlmmRecipe, path: PathBuf },
    Sv { path: PathBuf, sigma0_sq: f64 },
}

#[derive(Debug, Clone)]
pub struct CompareSpec {
    pub reference: PathBuf,
    pub replicates: usize,
    pub m: usize,
}

/// A fully resolved run. `entries` holds every setting, defaults
/// included, and is what gets echoed next to the outputs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub entries: BTreeMap<String, String>,
    pub model: ModelSpec,
    pub fit: FitConfig,
    pub output_dir: PathBuf,
    pub compare: Option<CompareSpec>,
}

/// Parses `key = value` lines. Relative paths are resolved against
/// `base` when given.
pub fn parse_entries(text: &str, origin: &Path, base: Option<&Path>) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, k + 1, format!("expected key = value, got {line:?}")))?;
        let key = key.trim().to_ascii_lowercase();
        let mut value = value.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::parse(origin, k + 1, format!("unknown key {key}")));
        }
        if let (Some(base), true) = (base, PATH_KEYS.contains(&key.as_str())) {
            if Path::new(&value).is_relative() {
                value = base.join(&value).display().to_string();
            }
        }
        if map.insert(key.clone(), value).is_some() {
            return Err(Error::parse(origin, k + 1, format!("duplicate key {key}")));
        }
    }
    Ok(map)
}

pub fn read_entries(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_entries(&text, path, path.parent())
}

/// `key=value` overrides from the command line.
pub fn apply_overrides(map: &mut BTreeMap<String, String>, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("override must be key=value, got {o:?}")))?;
        let key = key.trim().to_ascii_lowercase();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::InvalidInput(format!("unknown key {key}")));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(())
}

struct Reader<'a> {
    map: &'a mut BTreeMap<String, String>,
}

impl Reader<'_> {
    fn req(&self, key: &str) -> Result<String> {
        self.map
            .get(key)
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("missing setting {key}")))
    }

    fn or<T: std::str::FromStr + ToString>(&mut self, key: &str, default: T) -> Result<T> {
        match self.map.get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::InvalidInput(format!("{key}: cannot parse {v:?}"))),
            None => {
                self.map.insert(key.to_string(), default.to_string());
                Ok(default)
            }
        }
    }

    fn path(&self, key: &str) -> Result<PathBuf> {
        let p = PathBuf::from(self.req(key)?);
        if key != "output.dir" && !p.is_file() {
            return Err(Error::io(
                &p,
                std::io::Error::new(std::io::ErrorKind::NotFound, format!("{key} does not exist")),
            ));
        }
        Ok(p)
    }
}

fn delimiter(s: &str) -> Result<u8> {
    match s {
        "comma" | "," => Ok(b','),
        "space" | "whitespace" | " " => Ok(b' '),
        "tab" | "\\t" => Ok(b'\t'),
        "semicolon" | ";" => Ok(b';'),
        _ => Err(Error::InvalidInput(format!("model.delimiter: unsupported {s:?}"))),
    }
}

impl RunConfig {
    pub fn from_entries(mut entries: BTreeMap<String, String>) -> Result<Self> {
        let mut r = Reader { map: &mut entries };
        let seed: u64 = r.req("seed")?.parse().map_err(|_| Error::InvalidInput("seed must be a non-negative integer".into()))?;
        let kind = r.req("model.kind")?.to_ascii_lowercase();
        let model = match kind.as_str() {
            "gaussian" => ModelSpec::Gaussian {
                nu: r.path("model.nu")?,
                lambda: r.path("model.lambda")?,
            },
            "logistic" => {
                let sigma0_sq = r.or("model.sigma0_sq", 100.0)?;
                let format: String = r.or("model.format", "csv".to_string())?;
                let path = r.path("model.data")?;
                match format.as_str() {
                    "csv" => {
                        let mut options = DesignOptions::new(r.req("model.response")?);
                        options.delimiter = delimiter(&r.or("model.delimiter", "comma".to_string())?)?;
                        options.has_header = r.or("model.header", true)?;
                        let cats: String = r.or("model.categorical", String::new())?;
                        options.categorical = cats.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
                        options.positive = r.map.get("model.positive").cloned();
                        options.intercept = r.or("model.intercept", true)?;
                        ModelSpec::LogisticCsv { path, options, sigma0_sq }
                    }
                    "libsvm" => ModelSpec::LogisticLibsvm {
                        path,
                        features: r.map.get("model.features").map(|v| v.parse()).transpose().map_err(|_| Error::InvalidInput("model.features must be an integer".into()))?,
                        intercept: r.or("model.intercept", true)?,
                        sigma0_sq,
                    },
                    other => return Err(Error::InvalidInput(format!("model.format: expected csv or libsvm, got {other:?}"))),
                }
            }
            "sv" => ModelSpec::Sv {
                sigma0_sq: r.or("model.sigma0_sq", 10.0)?,
                path: r.path("model.data")?,
            },
            "epilepsy1" | "epilepsy2" | "toenail" | "polypharmacy" => ModelSpec::Glmm {
                recipe: match kind.as_str() {
                    "epilepsy1" => GlmmRecipe::EpilepsyI,
                    "epilepsy2" => GlmmRecipe::EpilepsyII,
                    "toenail" => GlmmRecipe::Toenail,
                    _ => GlmmRecipe::Polypharmacy,
                },
                path: r.path("model.data")?,
            },
            other => {
                return Err(Error::InvalidInput(format!(
                    "model.kind: unknown {other:?} (gaussian, logistic, sv, epilepsy1, epilepsy2, toenail, polypharmacy)"
                )))
            }
        };
        let method: Method = r.req("fit.method")?.parse()?;
        let d = FitConfig::new(method, seed);
        let fit = FitConfig {
            method,
            batch_size: r.or("fit.batch_size", d.batch_size)?,
            max_iter: r.or("fit.max_iter", d.max_iter)?,
            window: r.or("fit.window", d.window)?,
            adadelta_decay: r.or("fit.adadelta_decay", d.adadelta_decay)?,
            adadelta_eps: r.or("fit.adadelta_eps", d.adadelta_eps)?,
            init_mu: r.or("fit.init_mu", d.init_mu)?,
            init_t: r.or("fit.init_t", d.init_t)?,
            use_stopping_rule: r.or("fit.stopping_rule", d.use_stopping_rule)?,
            seed,
        };
        let output_dir = PathBuf::from(r.or("output.dir", "out".to_string())?);
        let compare = if r.map.contains_key("compare.reference") {
            Some(CompareSpec {
                reference: r.path("compare.reference")?,
                replicates: r.or("compare.replicates", 50)?,
                m: r.or("compare.m", 1000)?,
            })
        } else {
            None
        };
        Ok(RunConfig {
            entries,
            model,
            fit,
            output_dir,
            compare,
        })
    }

    /// The resolved settings as `key = value` lines.
    pub fn echo(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(text: &str) -> Result<BTreeMap<String, String>> {
        parse_entries(text, Path::new("test.cfg"), None)
    }

    #[test]
    fn parses_comments_and_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let nu = dir.path().join("nu.txt");
        std::fs::write(&nu, "0 0\n").unwrap();
        let text = format!(
            "# smoke\nseed = 3\nmodel.kind = gaussian\nmodel.nu = {0}\nmodel.lambda = {0}  # reused\nfit.method = sdb\n",
            nu.display()
        );
        let cfg = RunConfig::from_entries(entries(&text).unwrap()).unwrap();
        assert_eq!(cfg.fit.method, Method::Sdb);
        assert_eq!(cfg.fit.batch_size, 5);
        assert_eq!(cfg.fit.seed, 3);
        assert!(cfg.echo().contains("fit.max_iter = 50000\n"));
        // the echo parses back to the same settings
        let again = RunConfig::from_entries(entries(&cfg.echo()).unwrap()).unwrap();
        assert_eq!(again.fit, cfg.fit);
        assert_eq!(again.echo(), cfg.echo());
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(entries("seed 3\n").unwrap_err().to_string().contains("test.cfg:1"));
        assert!(entries("colour = red\n").is_err());
        assert!(entries("seed = 1\nseed = 2\n").is_err());
    }

    #[test]
    fn missing_file_is_named() {
        let map = entries("seed = 1\nmodel.kind = sv\nmodel.data = /no/such/rates.csv\nfit.method = KLD\n").unwrap();
        let msg = RunConfig::from_entries(map).unwrap_err().to_string();
        assert!(msg.contains("/no/such/rates.csv"), "{msg}");
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let map = parse_entries("model.data = rates.csv\n", Path::new("cfg"), Some(Path::new("/tmp/runs"))).unwrap();
        assert_eq!(map["model.data"], "/tmp/runs/rates.csv");
    }
}
