//! Command-line front end: `fit`, `compare`, `meanfield`, `unilab`,
//! `recursion`, `gradvar` and `sweep`.

pub mod config;
mod run;

pub use config::{apply_overrides, parse_entries, read_entries, CompareSpec, GlmmRecipe, ModelSpec, RunConfig};
pub use run::{build_model, read_matrix, read_vector, run, write_comparison, write_trace_csv, RunOutput};

use crate::analytics::{
    grad_variance_formulas, meanfield_kl, meanfield_sd_nqp, meanfield_weighted, natural_sdb_recursion, ordering_check,
    region_sweep, write_region_csv,
};
use crate::diagnostics::{compare, CompareSettings, ReferenceSamples};
use crate::error::{Error, Result};
use crate::optim::FitResult;
use crate::unilab::{uni_table, write_uni_csv, UniTarget};
use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "wfvi", version, about = "Gaussian variational inference with weighted Fisher, score and KL divergences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a variational Gaussian to a model and write fit.json, trace.csv and config.txt.
    Fit(FitArgs),
    /// Compare a saved fit with reference posterior draws.
    Compare(CompareArgs),
    /// Mean-field optima for a Gaussian target, or the three-dimensional region sweep.
    Meanfield(MeanfieldArgs),
    /// Univariate fits of the KL, Fisher and score divergences.
    Unilab(UnilabArgs),
    /// Infinite-batch recursion of natural-gradient SDb.
    Recursion(RecursionArgs),
    /// Closed-form gradient variances for diagonal Λ and T.
    Gradvar(GradvarArgs),
    /// Run several fit configurations in parallel.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Run configuration (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// KLD, FDr, SDr, FDb, SDb or BaM.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Extra settings as key=value, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// fit.json written by `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// CSV of reference draws with a header row.
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1000)]
    pub m: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MeanfieldArgs {
    /// Target precision matrix.
    #[arg(long, required_unless_present = "region_out")]
    pub lambda: Option<PathBuf>,
    /// Target mean (zero if omitted).
    #[arg(long)]
    pub nu: Option<PathBuf>,
    /// Diagonal weights M_ii, comma-separated (ones if omitted).
    #[arg(long, value_delimiter = ',')]
    pub weights: Vec<f64>,
    /// Write the region sweep over Λ = [[1,a,b],[a,1,c],[b,c,1]] to this CSV.
    #[arg(long)]
    pub region_out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.3, 0.5, 0.7])]
    pub c: Vec<f64>,
    /// Grid intervals per axis over [−1, 1].
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct UnilabArgs {
    /// t:ν, lig:a1,b1 or sn:m,t,λ; repeatable. Defaults to Student-t
    /// ν ∈ {3, 5, 10} and skew normals (t, λ) ∈ {(1,1), (1,2), (5,5)}.
    #[arg(long = "target")]
    pub targets: Vec<String>,
    /// CSV destination (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecursionArgs {
    #[arg(long, default_value_t = 5)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.8)]
    pub beta: f64,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradvarArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub lambda_diag: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub t_diag: Vec<f64>,
    /// Zeros if omitted.
    #[arg(long, value_delimiter = ',')]
    pub mu: Vec<f64>,
    /// Zeros if omitted.
    #[arg(long, value_delimiter = ',')]
    pub nu: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Configuration files; each must set `seed` and `output.dir`.
    #[arg(required = true)]
    pub configs: Vec<PathBuf>,
    /// Worker threads (all cores if omitted).
    #[arg(long)]
    pub threads: Option<usize>,
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Error::io(p, e)),
        None => std::io::stdout().write_all(bytes).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes") + "\n"
}

fn fit_config(args: &FitArgs) -> Result<RunConfig> {
    let mut entries = match &args.config {
        Some(p) => read_entries(p)?,
        None => BTreeMap::new(),
    };
    entries.insert("seed".into(), args.seed.to_string());
    let flags = [
        ("fit.method", args.method.clone()),
        ("fit.batch_size", args.batch_size.map(|v| v.to_string())),
        ("fit.max_iter", args.max_iter.map(|v| v.to_string())),
        ("output.dir", args.out.as_ref().map(|p| p.display().to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            entries.insert(k.into(), v);
        }
    }
    apply_overrides(&mut entries, &args.set)?;
    RunConfig::from_entries(entries)
}

fn summarize(out: &RunOutput) -> String {
    let f = &out.fit;
    let lb = f.lower_bound_trace.last().copied().unwrap_or(f64::NAN);
    let mut s = format!(
        "{}: d = {}, {} iterations ({:?}), final lower bound {lb:.4}, {} rejected steps, {:.2} s -> {}",
        f.method,
        f.dim,
        f.iterations,
        f.stop_reason,
        f.rejected_steps,
        f.elapsed.as_secs_f64(),
        out.fit_path.display()
    );
    if let Some(c) = &out.comparison {
        s += &format!("\nM* = {:.3} ± {:.3} over {} replicates", c.mstar_mean, c.mstar_sd, c.mstar.len());
    }
    s
}

fn parse_target(spec: &str) -> Result<UniTarget> {
    let (kind, params) = spec
        .split_once(':')
        .ok_or_else(|| Error::InvalidInput(format!("target {spec:?}: expected kind:params")))?;
    let v: Vec<f64> = params
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::InvalidInput(format!("target {spec:?}: bad number {s:?}"))))
        .collect::<Result<_>>()?;
    match (kind.trim(), v.as_slice()) {
        ("t", [nu]) => UniTarget::student_t(*nu),
        ("lig", [a1, b1]) => UniTarget::log_inv_gamma(*a1, *b1),
        ("sn", [m, t, l]) => UniTarget::skew_normal(*m, *t, *l),
        _ => Err(Error::InvalidInput(format!("target {spec:?}: use t:ν, lig:a1,b1 or sn:m,t,λ"))),
    }
}

/// Random SPD matrix with eigenvalues spread over roughly [0.2, 5].
pub fn random_spd(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = a.qr().q();
    let ev = DVector::from_fn(d, |_, _| (rng.gen_range(-1.6..1.6f64)).exp());
    &q * DMatrix::from_diagonal(&ev) * q.transpose()
}

fn cmd_fit(args: &FitArgs) -> Result<String> {
    let cfg = fit_config(args)?;
    Ok(summarize(&run(&cfg)?))
}

fn cmd_compare(args: &CompareArgs) -> Result<String> {
    let text = std::fs::read_to_string(&args.fit).map_err(|e| Error::io(&args.fit, e))?;
    let fit = FitResult::from_json(&text)?;
    let reference = ReferenceSamples::from_csv(&args.reference)?;
    let settings = CompareSettings {
        replicates: args.replicates,
        m: args.m,
        seed: args.seed,
    };
    let report = compare(&fit, &reference, &settings)?;
    write_comparison(&report, &args.out)?;
    Ok(format!(
        "M* = {:.3} ± {:.3} over {} replicates (bandwidth {:.4}) -> {}",
        report.mstar_mean,
        report.mstar_sd,
        report.mstar.len(),
        report.bandwidth,
        args.out.join("comparison.json").display()
    ))
}

fn cmd_meanfield(args: &MeanfieldArgs) -> Result<String> {
    if let Some(out) = &args.region_out {
        let rows = region_sweep(&args.c, args.steps)?;
        let mut buf = Vec::new();
        write_region_csv(&rows, &mut buf).map_err(|e| Error::io(out, e))?;
        write_out(Some(out), &buf)?;
        return Ok(format!("{} grid points -> {}", rows.len(), out.display()));
    }
    let lambda_path = args.lambda.as_ref().expect("clap enforces --lambda");
    let lambda = read_matrix(lambda_path)?;
    let d = lambda.nrows();
    let nu = match &args.nu {
        Some(p) => read_vector(p)?,
        None => vec![0.0; d],
    };
    let weights = if args.weights.is_empty() { vec![1.0; d] } else { args.weights.clone() };
    let report = serde_json::json!({
        "kl": meanfield_kl(&lambda, &nu)?,
        "weighted": meanfield_weighted(&lambda, &nu, &weights)?,
        "fisher": meanfield_weighted(&lambda, &nu, &vec![1.0; d])?,
        "score": meanfield_sd_nqp(&lambda, &nu)?,
        "ordering": ordering_check(&lambda, &weights)?,
    });
    Ok(json(&report))
}

fn cmd_unilab(args: &UnilabArgs) -> Result<String> {
    let targets: Vec<UniTarget> = if args.targets.is_empty() {
        let mut t: Vec<UniTarget> = [3.0, 5.0, 10.0].iter().map(|&nu| UniTarget::student_t(nu)).collect::<Result<_>>()?;
        for (s, l) in [(1.0, 1.0), (1.0, 2.0), (5.0, 5.0)] {
            t.push(UniTarget::skew_normal(0.0, s, l)?);
        }
        t
    } else {
        args.targets.iter().map(|s| parse_target(s)).collect::<Result<_>>()?
    };
    let fits = uni_table(&targets)?;
    let mut buf = Vec::new();
    write_uni_csv(&fits, &mut buf).map_err(|e| Error::io("<buffer>", e))?;
    write_out(args.out.as_deref(), &buf)?;
    Ok(match &args.out {
        Some(p) => format!("{} fits -> {}", fits.len(), p.display()),
        None => String::new(),
    })
}

fn cmd_recursion(args: &RecursionArgs) -> Result<String> {
    if args.dim == 0 {
        return Err(Error::InvalidInput("--dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let j0 = random_spd(args.dim, &mut rng);
    let eps0: Vec<f64> = (0..args.dim).map(|_| rng.sample(StandardNormal)).collect();
    let trace = natural_sdb_recursion(&j0, &eps0, args.beta, args.steps)?;
    let mut buf = Vec::new();
    writeln!(buf, "t,eps_norm,delta_norm,eps_bound,delta_bound").expect("vec write");
    for t in 0..trace.eps_norm.len() {
        writeln!(
            buf,
            "{t},{:.6e},{:.6e},{:.6e},{:.6e}",
            trace.eps_norm[t], trace.delta_norm[t], trace.eps_bound[t], trace.delta_bound[t]
        )
        .expect("vec write");
    }
    write_out(args.out.as_deref(), &buf)?;
    Ok(format!(
        "bound violations: {}, sandwich gap: {:.3e}",
        trace.bound_violations, trace.min_sandwich_gap
    ))
}

fn cmd_gradvar(args: &GradvarArgs) -> Result<String> {
    let d = args.lambda_diag.len();
    let or_zero = |v: &Vec<f64>| if v.is_empty() { vec![0.0; d] } else { v.clone() };
    let v = grad_variance_formulas(&args.lambda_diag, &args.t_diag, &or_zero(&args.mu), &or_zero(&args.nu))?;
    Ok(json(&v))
}

fn cmd_sweep(args: &SweepArgs) -> Result<String> {
    let configs = args
        .configs
        .iter()
        .map(|p| RunConfig::from_entries(read_entries(p)?))
        .collect::<Result<Vec<_>>>()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let results: Vec<Result<RunOutput>> = pool.install(|| configs.par_iter().map(run).collect());
    let mut lines = Vec::new();
    let mut failed = None;
    for (path, r) in args.configs.iter().zip(results) {
        match r {
            Ok(out) => lines.push(format!("{}: {}", path.display(), summarize(&out))),
            Err(e) => {
                lines.push(format!("{}: error: {e}", path.display()));
                failed.get_or_insert(e);
            }
        }
    }
    match failed {
        Some(e) => {
            eprintln!("{}", lines.join("\n"));
            Err(e)
        }
        None => Ok(lines.join("\n")),
    }
}

pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Meanfield(a) => cmd_meanfield(a),
        Command::Unilab(a) => cmd_unilab(a),
        Command::Recursion(a) => cmd_recursion(a),
        Command::Gradvar(a) => cmd_gradvar(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(msg) => {
            if !msg.is_empty() {
                // a closed pipe (e.g. `| head`) is not an error
                let mut out = std::io::stdout().lock();
                if let Err(e) = writeln!(out, "{}", msg.trim_end()) {
                    if e.kind() != std::io::ErrorKind::BrokenPipe {
                        eprintln!("error: writing output: {e}");
                        return ExitCode::FAILURE;
                    }
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_specs() {
        assert_eq!(parse_target("t:5").unwrap(), UniTarget::StudentT { nu: 5.0 });
        assert_eq!(parse_target("sn:0,1,2").unwrap(), UniTarget::SkewNormal { m: 0.0, t: 1.0, lambda: 2.0 });
        assert!(parse_target("t:1").is_err());
        assert!(parse_target("lig:3").is_err());
        assert!(parse_target("cauchy").is_err());
    }

    #[test]
    fn seed_is_mandatory_for_fit() {
        assert!(Cli::try_parse_from(["wfvi", "fit", "--config", "x.cfg"]).is_err());
        assert!(Cli::try_parse_from(["wfvi", "fit", "--config", "x.cfg", "--seed", "4"]).is_ok());
    }

    #[test]
    fn random_spd_is_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_spd(6, &mut rng);
        assert!((&m - m.transpose()).norm() < 1e-12);
        assert!(m.cholesky().is_some());
    }
}
