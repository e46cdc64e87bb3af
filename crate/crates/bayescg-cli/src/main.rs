//! Experiment driver CLI: solve benchmark systems, reproduce convergence and
//! error-estimation runs as CSV artifacts, describe problems, and generate
//! problem files.
//!
//! Exit codes: 0 success, 1 solver/runtime failure, 2 configuration error.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bayescg::error::Error;
use bayescg::harness::{
    describe_problem, fmt_f64, run_convergence_experiment, run_estimation_experiment,
    ExperimentConfig, PriorChoice, SolverChoice,
};
use bayescg::linalg::vec::{norm2, sub};
use bayescg::linalg::{a_norm_sq, SpdOperator};
use bayescg::problem::{write_matrix_market, ProblemKind, ProblemSpec, SolutionMode, SpectrumSpec};
use bayescg::solver::{BayesCgConfig, Prior, PriorSpec};
use bayescg::{bayescg_krylov_solve, bayescg_solve, cg_solve_with_truth, CgConfig, KrylovFactors};

#[derive(Parser)]
#[command(
    name = "bayescg",
    about = "Conjugate gradient solvers with factored Gaussian posteriors and error estimates",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured solver once and print a summary.
    Solve(SolveArgs),
    /// Per-iteration convergence experiment (residual, error, posterior
    /// trace, posterior samples) written as CSV.
    Converge(RunArgs),
    /// Per-iteration error-estimation experiment (krylov solver only).
    Estimate(RunArgs),
    /// Print size, sparsity, and extremal Ritz estimates of the problem.
    Describe(ConfigArgs),
    /// Assemble a problem and write its config and matrix artifacts.
    GenProblem(GenArgs),
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory for CSV, manifest, and plot stub.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Write the per-iteration trace as CSV.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Write posterior mean and covariance factors into this directory.
    #[arg(long)]
    posterior_out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory for spec.cfg and problem artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Also write the assembled matrix in Matrix Market format (synthesized
    /// problems only).
    #[arg(long)]
    emit_matrix: bool,
}

/// Every experiment-config field is reachable by flag; `--config` loads a
/// file first and flags override it.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// Config file in the flat key = value format.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Problem kind: prescribed-spectrum | matrix-market-preconditioned | explicit.
    #[arg(long)]
    problem: Option<String>,
    /// Problem dimension.
    #[arg(long)]
    n: Option<usize>,
    /// Generator seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Spectrum family for synthesized problems: geometric | strakos.
    #[arg(long)]
    spectrum: Option<String>,
    /// Condition number for the geometric spectrum.
    #[arg(long)]
    kappa: Option<f64>,
    /// Smallest eigenvalue (strakos spectrum).
    #[arg(long)]
    lam_min: Option<f64>,
    /// Largest eigenvalue (strakos spectrum).
    #[arg(long)]
    lam_max: Option<f64>,
    /// Clustering parameter (strakos spectrum).
    #[arg(long)]
    rho: Option<f64>,
    /// Matrix Market file path (file-backed problems).
    #[arg(long)]
    path: Option<PathBuf>,
    /// Incomplete-Cholesky drop tolerance (matrix-market-preconditioned).
    #[arg(long)]
    drop_tol: Option<f64>,
    /// Solution mode: all-ones | sampled-from-inverse.
    #[arg(long)]
    solution: Option<String>,

    /// Solver: cg | bayescg | krylov.
    #[arg(long)]
    solver: Option<String>,
    /// Prior for the bayescg solver: inverse | natural | identity | rank-one.
    #[arg(long)]
    prior: Option<String>,
    /// Delay (posterior rank) for the krylov solver; "full" keeps all factors.
    #[arg(long)]
    delay: Option<String>,

    /// Reorthogonalize residuals (CGS2).
    #[arg(long)]
    reorthogonalize: Option<bool>,
    /// Fixed iteration count (otherwise run to the residual tolerance).
    #[arg(long)]
    iters: Option<usize>,
    /// Relative residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Posterior samples per iteration.
    #[arg(long)]
    samples: Option<usize>,
    /// Credible level in percent.
    #[arg(long)]
    alpha: Option<f64>,
    /// Seed for posterior sampling.
    #[arg(long)]
    sample_seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                ExperimentConfig::from_key_values(&text)?
            }
            None => default_config(),
        };
        if let Some(kind) = &self.problem {
            cfg.problem.kind = match kind.as_str() {
                "prescribed-spectrum" => ProblemKind::PrescribedSpectrum {
                    spectrum: SpectrumSpec::Geometric { kappa: 1e3 },
                },
                "matrix-market-preconditioned" => ProblemKind::MatrixMarketPreconditioned {
                    path: self
                        .path
                        .clone()
                        .ok_or_else(|| Error::Config("--path is required for file problems".into()))?,
                    drop_tol: self.drop_tol.unwrap_or(1e-6),
                },
                "explicit" => ProblemKind::Explicit {
                    path: self
                        .path
                        .clone()
                        .ok_or_else(|| Error::Config("--path is required for file problems".into()))?,
                },
                other => return Err(Error::Config(format!("unknown problem kind {other:?}"))),
            };
        }
        if let Some(spectrum) = &self.spectrum {
            let inner = match spectrum.as_str() {
                "geometric" => SpectrumSpec::Geometric {
                    kappa: self.kappa.unwrap_or(1e3),
                },
                "strakos" => SpectrumSpec::Strakos {
                    lam_min: self.lam_min.unwrap_or(0.1),
                    lam_max: self.lam_max.unwrap_or(1e4),
                    rho: self.rho.unwrap_or(0.9),
                },
                other => return Err(Error::Config(format!("unknown spectrum {other:?}"))),
            };
            cfg.problem.kind = ProblemKind::PrescribedSpectrum { spectrum: inner };
        } else if let ProblemKind::PrescribedSpectrum { spectrum } = &mut cfg.problem.kind {
            match spectrum {
                SpectrumSpec::Geometric { kappa } => {
                    if let Some(k) = self.kappa {
                        *kappa = k;
                    }
                }
                SpectrumSpec::Strakos { lam_min, lam_max, rho } => {
                    if let Some(v) = self.lam_min {
                        *lam_min = v;
                    }
                    if let Some(v) = self.lam_max {
                        *lam_max = v;
                    }
                    if let Some(v) = self.rho {
                        *rho = v;
                    }
                }
            }
        }
        if let (Some(path), ProblemKind::MatrixMarketPreconditioned { path: p, .. }) =
            (&self.path, &mut cfg.problem.kind)
        {
            *p = path.clone();
        }
        if let (Some(path), ProblemKind::Explicit { path: p }) = (&self.path, &mut cfg.problem.kind)
        {
            *p = path.clone();
        }
        if let (Some(tol), ProblemKind::MatrixMarketPreconditioned { drop_tol, .. }) =
            (self.drop_tol, &mut cfg.problem.kind)
        {
            *drop_tol = tol;
        }
        if let Some(n) = self.n {
            cfg.problem.n = n;
        }
        if let Some(seed) = self.seed {
            cfg.problem.seed = seed;
        }
        if let Some(solution) = &self.solution {
            cfg.problem.solution = match solution.as_str() {
                "all-ones" => SolutionMode::AllOnes,
                "sampled-from-inverse" => SolutionMode::SampledFromInverse,
                other => return Err(Error::Config(format!("unknown solution mode {other:?}"))),
            };
        }
        if let Some(solver) = &self.solver {
            cfg.solver = match solver.as_str() {
                "cg" => SolverChoice::Cg,
                "bayescg" => SolverChoice::BayesCg(PriorChoice::Identity),
                "krylov" => SolverChoice::Krylov { delay: Some(5) },
                other => return Err(Error::Config(format!("unknown solver {other:?}"))),
            };
        }
        if let Some(prior) = &self.prior {
            let choice = match prior.as_str() {
                "inverse" => PriorChoice::Inverse,
                "natural" => PriorChoice::Natural,
                "identity" => PriorChoice::Identity,
                "rank-one" => PriorChoice::RankOne,
                other => return Err(Error::Config(format!("unknown prior {other:?}"))),
            };
            match &mut cfg.solver {
                SolverChoice::BayesCg(p) => *p = choice,
                _ => {
                    return Err(Error::Config(
                        "--prior applies only to the bayescg solver".into(),
                    ))
                }
            }
        }
        if let Some(delay) = &self.delay {
            let parsed = match delay.as_str() {
                "full" => None,
                d => Some(d.parse::<usize>().map_err(|_| {
                    Error::Config(format!("bad delay {d:?}: expected an integer or \"full\""))
                })?),
            };
            match &mut cfg.solver {
                SolverChoice::Krylov { delay } => *delay = parsed,
                _ => {
                    return Err(Error::Config(
                        "--delay applies only to the krylov solver".into(),
                    ))
                }
            }
        }
        if let Some(v) = self.reorthogonalize {
            cfg.reorthogonalize = v;
        }
        if self.iters.is_some() {
            cfg.iters = self.iters;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.samples {
            cfg.sample_count = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.sample_seed {
            cfg.sample_seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The flagship synthesized problem: geometric spectrum with condition
/// number 1e3 at n = 100, solution drawn from the inverse-covariance prior.
fn default_config() -> ExperimentConfig {
    ExperimentConfig {
        problem: ProblemSpec {
            kind: ProblemKind::PrescribedSpectrum {
                spectrum: SpectrumSpec::Geometric { kappa: 1e3 },
            },
            n: 100,
            seed: 1,
            solution: SolutionMode::SampledFromInverse,
        },
        solver: SolverChoice::Krylov { delay: Some(5) },
        reorthogonalize: true,
        iters: None,
        tol: 1e-8,
        sample_count: 10,
        alpha: 95.0,
        sample_seed: 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => run_solve(&args),
        Command::Converge(args) => args
            .config
            .resolve()
            .and_then(|cfg| run_convergence_experiment(&cfg, &args.out))
            .map(|artifacts| {
                println!(
                    "wrote {} rows to {}",
                    artifacts.rows,
                    artifacts.csv.display()
                );
            }),
        Command::Estimate(args) => args
            .config
            .resolve()
            .and_then(|cfg| run_estimation_experiment(&cfg, &args.out))
            .map(|artifacts| {
                println!(
                    "wrote {} rows to {}",
                    artifacts.rows,
                    artifacts.csv.display()
                );
            }),
        Command::Describe(args) => args.resolve().and_then(|cfg| {
            describe_problem(&cfg).map(|report| print!("{report}"))
        }),
        Command::GenProblem(args) => run_gen_problem(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run_solve(args: &SolveArgs) -> Result<(), Error> {
    let cfg = args.config.resolve()?;
    let problem = cfg.problem.assemble()?;
    let a = &problem.a;
    let n = a.dim();
    let x0 = vec![0.0; n];
    let mut kernel_cfg = CgConfig::for_dim(n);
    kernel_cfg.reorthogonalize = cfg.reorthogonalize;
    kernel_cfg.rel_residual_tol = cfg.tol;
    if let Some(iters) = cfg.iters {
        kernel_cfg.max_iters = iters;
        kernel_cfg.rel_residual_tol = 0.0;
    }

    match &cfg.solver {
        SolverChoice::Cg => {
            let (x, trace) =
                cg_solve_with_truth(a, &problem.b, &x0, &kernel_cfg, Some(&problem.x_star))?;
            print_summary("cg", &trace.records, trace.initial_residual_norm, &trace);
            report_error(a, &x, &problem.x_star);
            if let Some(path) = &args.trace_out {
                let mut w = BufWriter::new(fs::File::create(path)?);
                trace.write_csv(&mut w)?;
            }
            if let Some(dir) = &args.posterior_out {
                fs::create_dir_all(dir)?;
                write_vector(&dir.join("mean.csv"), &x)?;
            }
        }
        SolverChoice::BayesCg(prior_choice) => {
            let spec = match prior_choice {
                PriorChoice::Inverse => PriorSpec::Inverse,
                PriorChoice::Natural => PriorSpec::Natural,
                PriorChoice::Identity => PriorSpec::Identity,
                PriorChoice::RankOne => PriorSpec::RankOne {
                    direction: sub(&problem.x_star, &x0),
                },
            };
            let prior = Prior::realize(&spec, a, x0.clone())?;
            let mut bcfg = BayesCgConfig::for_dim(n);
            bcfg.reorthogonalize = cfg.reorthogonalize;
            bcfg.rel_residual_tol = kernel_cfg.rel_residual_tol;
            bcfg.max_iters = kernel_cfg.max_iters;
            bcfg.dense_covariance =
                args.posterior_out.is_some() && n <= bayescg::linalg::MAX_DENSE_DIM;
            let (post, trace) = bayescg_solve(a, &problem.b, &prior, &bcfg)?;
            print_summary("bayescg", &trace.records, trace.initial_residual_norm, &trace);
            report_error(a, &post.mean, &problem.x_star);
            if let Some(path) = &args.trace_out {
                let mut w = BufWriter::new(fs::File::create(path)?);
                trace.write_csv(&mut w)?;
            }
            if let Some(dir) = &args.posterior_out {
                fs::create_dir_all(dir)?;
                write_vector(&dir.join("mean.csv"), &post.mean)?;
                if let Some(cov) = &post.dense_cov {
                    let factors = dense_cov_factors(cov)?;
                    write_factors(dir, &factors)?;
                }
            }
        }
        SolverChoice::Krylov { delay } => {
            let (x, factors, trace) = match delay {
                Some(d) => bayescg_krylov_solve(a, &problem.b, &x0, *d, &kernel_cfg)?,
                None => bayescg::krylov_full_run(a, &problem.b, &x0)?,
            };
            print_summary("krylov", &trace.records, trace.initial_residual_norm, &trace);
            report_error(a, &x, &problem.x_star);
            println!("posterior_rank = {}", factors.rank());
            println!("trace_estimate = {}", fmt_f64(factors.trace_estimate()));
            if let Some(path) = &args.trace_out {
                let mut w = BufWriter::new(fs::File::create(path)?);
                trace.write_csv(&mut w)?;
            }
            if let Some(dir) = &args.posterior_out {
                fs::create_dir_all(dir)?;
                write_vector(&dir.join("mean.csv"), &x)?;
                write_factors(dir, &factors)?;
            }
        }
    }
    Ok(())
}

/// Spectral factorization of a dense covariance in the shared factor layout
/// (columns are unit eigenvectors, weights the absolute eigenvalues).
fn dense_cov_factors(cov: &bayescg::nalgebra::DMatrix<f64>) -> Result<KrylovFactors, Error> {
    let (values, vectors) = bayescg::linalg::symmetric_eigen(cov)?;
    let lambda_max = values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let keep: Vec<usize> = (0..values.len())
        .filter(|&k| values[k].abs() > 1e-14 * lambda_max.max(1e-300))
        .collect();
    let mut cols = bayescg::nalgebra::DMatrix::zeros(cov.nrows(), keep.len());
    let mut phi = Vec::with_capacity(keep.len());
    for (j, &k) in keep.iter().enumerate() {
        cols.set_column(j, &vectors.column(k));
        phi.push(values[k].abs());
    }
    KrylovFactors::from_parts(1, &cols, phi)
}

fn write_factors(dir: &Path, factors: &KrylovFactors) -> Result<(), Error> {
    let mut csv = BufWriter::new(fs::File::create(dir.join("factors.csv"))?);
    factors.write_csv(&mut csv)?;
    csv.flush()?;
    let mut bin = BufWriter::new(fs::File::create(dir.join("factors.bin"))?);
    factors.write_binary(&mut bin)?;
    bin.flush()?;
    Ok(())
}

fn write_vector(path: &Path, v: &[f64]) -> Result<(), Error> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for x in v {
        writeln!(w, "{}", fmt_f64(*x))?;
    }
    w.flush()?;
    Ok(())
}

fn print_summary(
    solver: &str,
    records: &[bayescg::cg::IterationRecord],
    r0: f64,
    trace: &bayescg::SolveTrace,
) {
    println!("solver = {solver}");
    println!("iterations = {}", records.len());
    println!("termination = {:?}", trace.termination);
    let final_res = records.last().map_or(r0, |r| r.res_norm);
    println!(
        "relative_residual = {}",
        fmt_f64(if r0 > 0.0 { final_res / r0 } else { 0.0 })
    );
}

fn report_error(a: &SpdOperator, x: &[f64], x_star: &[f64]) {
    let err = sub(x_star, x);
    println!("anorm_err_sq = {}", fmt_f64(a_norm_sq(a, &err)));
    println!("l2_err = {}", fmt_f64(norm2(&err)));
}

fn run_gen_problem(args: &GenArgs) -> Result<(), Error> {
    let cfg = args.config.resolve()?;
    let problem = cfg.problem.assemble()?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("spec.cfg"), cfg.to_key_values())?;
    write_vector(&args.out.join("x_star.csv"), &problem.x_star)?;
    write_vector(&args.out.join("b.csv"), &problem.b)?;
    if args.emit_matrix {
        match &problem.a {
            SpdOperator::Dense(m) => {
                let n = m.nrows();
                let mut trips = Vec::new();
                for i in 0..n {
                    for j in 0..=i {
                        trips.push((i, j, m[(i, j)]));
                        if i != j {
                            trips.push((j, i, m[(i, j)]));
                        }
                    }
                }
                let csr = bayescg::CsrMatrix::from_triplets(n, &trips)?;
                let mut w = BufWriter::new(fs::File::create(args.out.join("matrix.mtx"))?);
                write_matrix_market(&mut w, &csr)?;
                w.flush()?;
            }
            SpdOperator::Sparse(m) => {
                let mut w = BufWriter::new(fs::File::create(args.out.join("matrix.mtx"))?);
                write_matrix_market(&mut w, m)?;
                w.flush()?;
            }
            SpdOperator::Preconditioned { .. } => {
                return Err(Error::Config(
                    "--emit-matrix is not available for preconditioned operators \
                     (they are applied matrix-free)"
                        .into(),
                ))
            }
        }
    }
    println!("wrote problem artifacts to {}", args.out.display());
    Ok(())
}
