//! Experiment driver: reproducible convergence and error-estimation runs
//! emitting plot-ready CSV files plus a manifest capturing config, seed, and
//! tool version.

pub mod config;

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::cg::{CgConfig, CgKernel, SolveTrace, StepOutcome};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::krylov::krylov_full_run;
use crate::linalg::vec::{dot, sub};
use crate::linalg::{a_norm_sq, MAX_DENSE_DIM};
use crate::problem::{extremal_ritz_values, Problem};
use crate::solver::{bayescg_solve, BayesCgConfig, Prior, PriorSpec};
use crate::uq::{h_factor, sample_quadratic_forms, ESTIMATE_METHOD};

pub use config::{fmt_f64, ExperimentConfig, PriorChoice, SolverChoice};

const SCHEMA_VERSION: u32 = 1;

/// Mixes an iteration index into the sampling seed so per-iteration sample
/// batches are independent but reproducible.
fn iteration_seed(base: u64, m: usize) -> u64 {
    base ^ (m as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Paths produced by an experiment run.
#[derive(Debug)]
pub struct RunArtifacts {
    pub csv: PathBuf,
    pub manifest: PathBuf,
    pub plot_script: PathBuf,
    pub rows: usize,
}

fn write_manifest(
    out_dir: &Path,
    cfg: &ExperimentConfig,
    experiment: &str,
    csv_name: &str,
) -> Result<PathBuf> {
    let path = out_dir.join("manifest.txt");
    let mut w = BufWriter::new(fs::File::create(&path)?);
    writeln!(w, "schema_version = {SCHEMA_VERSION}")?;
    writeln!(w, "tool_version = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "experiment = {experiment}")?;
    writeln!(w, "output = {csv_name}")?;
    writeln!(w, "estimate_method = {ESTIMATE_METHOD}")?;
    write!(w, "{}", cfg.to_key_values())?;
    w.flush()?;
    Ok(path)
}

fn write_plot_stub(out_dir: &Path, csv_name: &str, ylabel: &str) -> Result<PathBuf> {
    let path = out_dir.join("plot.gp");
    let mut w = BufWriter::new(fs::File::create(&path)?);
    writeln!(w, "set datafile separator ','")?;
    writeln!(w, "set key autotitle columnhead")?;
    writeln!(w, "set logscale y")?;
    writeln!(w, "set xlabel 'iteration'")?;
    writeln!(w, "set ylabel '{ylabel}'")?;
    writeln!(
        w,
        "plot '{csv_name}' using 1:3 with lines, '{csv_name}' using 1:4 with lines"
    )?;
    w.flush()?;
    Ok(path)
}

fn csv_cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, fmt_f64)
}

/// Per-iteration quantities emitted by the windowed Krylov driver.
struct KrylovRow {
    m: usize,
    res_norm: f64,
    err_sq: f64,
    mu: f64,
    sigma_sq: f64,
    samples: Vec<f64>,
}

/// Sliding window over the last `cap` posterior factor columns, maintaining
/// the raw Gram matrix `V^T A V` incrementally.
struct FactorWindow {
    cap: usize,
    cols: VecDeque<Vec<f64>>,
    acols: VecDeque<Vec<f64>>,
    phis: VecDeque<f64>,
    gram: VecDeque<VecDeque<f64>>,
}

impl FactorWindow {
    fn new(cap: usize) -> Self {
        Self {
            cap,
            cols: VecDeque::new(),
            acols: VecDeque::new(),
            phis: VecDeque::new(),
            gram: VecDeque::new(),
        }
    }

    fn len(&self) -> usize {
        self.phis.len()
    }

    fn push(&mut self, col: Vec<f64>, acol: Vec<f64>, phi: f64) {
        if self.len() == self.cap {
            self.cols.pop_front();
            self.acols.pop_front();
            self.phis.pop_front();
            self.gram.pop_front();
            for row in self.gram.iter_mut() {
                row.pop_front();
            }
        }
        let mut new_row = VecDeque::with_capacity(self.len() + 1);
        for c in self.cols.iter() {
            new_row.push_back(dot(c, &acol));
        }
        new_row.push_back(dot(&col, &acol));
        for (i, row) in self.gram.iter_mut().enumerate() {
            row.push_back(new_row[i]);
        }
        self.gram.push_back(new_row);
        self.cols.push_back(col);
        self.acols.push_back(acol);
        self.phis.push_back(phi);
    }

    fn mu(&self) -> f64 {
        self.phis.iter().sum()
    }

    fn sigma_sq(&self) -> f64 {
        2.0 * self.phis.iter().map(|p| p * p).sum::<f64>()
    }

    /// `sqrt(Phi) V^T A V sqrt(Phi)` for quadratic-form sampling.
    fn scaled_gram(&self) -> DMatrix<f64> {
        let d = self.len();
        let mut g = DMatrix::zeros(d, d);
        let roots: Vec<f64> = self.phis.iter().map(|p| p.sqrt()).collect();
        for i in 0..d {
            for j in 0..d {
                let raw = 0.5 * (self.gram[i][j] + self.gram[j][i]);
                g[(i, j)] = roots[i] * roots[j] * raw;
            }
        }
        g
    }
}

/// Drives the shared CG kernel while maintaining the factor window, emitting
/// one row per resolvable iteration `m` (each needs the `d` following
/// iterations). In fixed-iteration mode the kernel runs `iters + d` steps so
/// that estimates cover `m = 0..=iters`; otherwise it runs to the residual
/// tolerance plus `d` delay steps.
fn run_windowed_krylov(
    problem: &Problem,
    cfg: &ExperimentConfig,
    delay: usize,
) -> Result<Vec<KrylovRow>> {
    let a = &problem.a;
    let n = a.dim();
    let x0 = vec![0.0; n];
    let mut kernel_cfg = CgConfig::for_dim(n);
    kernel_cfg.reorthogonalize = cfg.reorthogonalize;
    kernel_cfg.rel_residual_tol = if cfg.iters.is_some() { 0.0 } else { cfg.tol };
    kernel_cfg.max_iters = usize::MAX / 2;
    let mut kernel = CgKernel::new(a, &problem.b, &x0, &kernel_cfg, None)?;

    let mut res_norms = vec![kernel.trace.initial_residual_norm];
    let mut errs = vec![a_norm_sq(a, &sub(&problem.x_star, &x0))];
    let mut window = FactorWindow::new(delay);
    let mut rows = Vec::new();
    let emit_row = |rows: &mut Vec<KrylovRow>,
                    window: &FactorWindow,
                    m: usize,
                    res_norms: &[f64],
                    errs: &[f64]| {
        // window holds columns m+1..=last_iter; a row at m uses them all
        let gram = window.scaled_gram();
        let samples = sample_quadratic_forms(
            &gram,
            cfg.sample_count,
            iteration_seed(cfg.sample_seed, m),
        );
        rows.push(KrylovRow {
            m,
            res_norm: res_norms[m],
            err_sq: errs[m],
            mu: window.mu(),
            sigma_sq: window.sigma_sq(),
            samples,
        });
    };

    let budget_main = cfg.iters.unwrap_or(10 * n);
    let mut exhausted = false;
    // main phase
    let mut steps = 0usize;
    while steps < budget_main {
        if kernel_cfg.rel_residual_tol > 0.0 && kernel.converged() {
            break;
        }
        let rr_before = kernel.current_rr();
        let v_entry = kernel.v.clone();
        let iter_before = kernel.iter;
        let outcome = kernel.step()?;
        if kernel.iter > iter_before {
            steps += 1;
            let rec = *kernel.trace.records.last().expect("recorded");
            res_norms.push(rec.res_norm);
            errs.push(a_norm_sq(a, &sub(&problem.x_star, &kernel.x)));
            let scale = 1.0 / rec.eta.sqrt();
            let col: Vec<f64> = v_entry.iter().map(|v| v * scale).collect();
            let acol = a.apply(&col);
            window.push(col, acol, rec.gamma * rr_before);
            if kernel.iter >= delay {
                emit_row(&mut rows, &window, kernel.iter - delay, &res_norms, &errs);
            }
        }
        match outcome {
            StepOutcome::Continue => {}
            StepOutcome::Converged => {
                if cfg.iters.is_none() {
                    break;
                }
            }
            StepOutcome::GradeReached => {
                exhausted = true;
                break;
            }
        }
    }
    // delay phase: d more iterations so the last main iterate gets a window
    if !exhausted {
        for _ in 0..delay {
            let rr_before = kernel.current_rr();
            let v_entry = kernel.v.clone();
            let iter_before = kernel.iter;
            let outcome = kernel.step()?;
            if kernel.iter > iter_before {
                let rec = *kernel.trace.records.last().expect("recorded");
                res_norms.push(rec.res_norm);
                errs.push(a_norm_sq(a, &sub(&problem.x_star, &kernel.x)));
                let scale = 1.0 / rec.eta.sqrt();
                let col: Vec<f64> = v_entry.iter().map(|v| v * scale).collect();
                let acol = a.apply(&col);
                window.push(col, acol, rec.gamma * rr_before);
                if kernel.iter >= delay {
                    emit_row(&mut rows, &window, kernel.iter - delay, &res_norms, &errs);
                }
            }
            if matches!(outcome, StepOutcome::GradeReached) {
                exhausted = true;
                break;
            }
        }
    }
    // grade-truncated tail: shrink the window from the left so every
    // remaining iterate still gets its exact posterior tail
    if exhausted {
        let last = kernel.iter;
        let emitted_upto = rows.last().map_or(0, |r: &KrylovRow| r.m + 1);
        for m in emitted_upto..last {
            let keep = last - m;
            let mut tail = FactorWindow::new(keep);
            for idx in window.len() - keep..window.len() {
                tail.push(
                    window.cols[idx].clone(),
                    window.acols[idx].clone(),
                    window.phis[idx],
                );
            }
            emit_row(&mut rows, &tail, m, &res_norms, &errs);
        }
    }
    Ok(rows)
}

/// Full-rank variant: every factor column is kept and each iteration `m`
/// gets the complete posterior tail `m+1..K`.
fn run_full_krylov(problem: &Problem, cfg: &ExperimentConfig) -> Result<Vec<KrylovRow>> {
    let a = &problem.a;
    let n = a.dim();
    if n > MAX_DENSE_DIM {
        return Err(Error::Unsupported(format!(
            "full-rank posterior runs are limited to n <= {MAX_DENSE_DIM}, got {n}"
        )));
    }
    let x0 = vec![0.0; n];
    let (_, factors, trace) = krylov_full_run(a, &problem.b, &x0)?;
    let k = factors.rank();
    let iterates = trace.iterates.as_ref().expect("full run captures iterates");
    // raw Gram of all columns
    let mut gram = DMatrix::zeros(k, k);
    for j in 0..k {
        let acol = a.apply(factors.column(j));
        for i in 0..k {
            gram[(i, j)] = dot(factors.column(i), &acol);
        }
    }
    let gram = (&gram + gram.transpose()) * 0.5;
    let mut rows = Vec::new();
    for m in 0..k {
        let x_m = if m == 0 { &x0 } else { &iterates[m - 1] };
        let err_sq = a_norm_sq(a, &sub(&problem.x_star, x_m));
        let d = k - m;
        let mut scaled = DMatrix::zeros(d, d);
        let roots: Vec<f64> = factors.phi[m..].iter().map(|p| p.sqrt()).collect();
        for i in 0..d {
            for j in 0..d {
                scaled[(i, j)] = roots[i] * roots[j] * gram[(m + i, m + j)];
            }
        }
        let samples =
            sample_quadratic_forms(&scaled, cfg.sample_count, iteration_seed(cfg.sample_seed, m));
        let mu: f64 = factors.phi[m..].iter().sum();
        let sigma_sq: f64 = 2.0 * factors.phi[m..].iter().map(|p| p * p).sum::<f64>();
        rows.push(KrylovRow {
            m,
            res_norm: trace.residual_norm(m),
            err_sq,
            mu,
            sigma_sq,
            samples,
        });
    }
    Ok(rows)
}

fn sample_header(count: usize) -> String {
    (1..=count).map(|i| format!(",sample_{i}")).collect()
}

/// Convergence experiment: per-iteration residual, squared A-norm error,
/// posterior-trace column and posterior samples (solver dependent; see the
/// workspace README for the exact schema).
pub fn run_convergence_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<RunArtifacts> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let problem = cfg.problem.assemble()?;
    let csv_name = "convergence.csv";
    let path = out_dir.join(csv_name);
    let mut w = BufWriter::new(fs::File::create(&path)?);
    let rows = match &cfg.solver {
        SolverChoice::Cg => {
            let trace = run_plain_cg(&problem, cfg)?;
            writeln!(w, "iter,res_norm,anorm_err_sq")?;
            let mut count = 0;
            let x0 = vec![0.0; problem.a.dim()];
            let err0 = a_norm_sq(&problem.a, &sub(&problem.x_star, &x0));
            writeln!(w, "0,{},{}", fmt_f64(trace.initial_residual_norm), fmt_f64(err0))?;
            count += 1;
            for rec in &trace.records {
                writeln!(
                    w,
                    "{},{},{}",
                    rec.iter,
                    fmt_f64(rec.res_norm),
                    csv_cell(rec.anorm_err_sq)
                )?;
                count += 1;
            }
            count
        }
        SolverChoice::BayesCg(prior) => {
            let rows = run_bayescg_convergence(&problem, cfg, *prior)?;
            writeln!(w, "iter,res_norm,anorm_err_sq,trace_cov{}", sample_header(cfg.sample_count))?;
            for row in &rows {
                write_krylov_row(&mut w, row)?;
            }
            rows.len()
        }
        SolverChoice::Krylov { delay } => {
            let rows = match delay {
                Some(d) => run_windowed_krylov(&problem, cfg, *d)?,
                None => run_full_krylov(&problem, cfg)?,
            };
            writeln!(w, "iter,res_norm,anorm_err_sq,trace_cov{}", sample_header(cfg.sample_count))?;
            for row in &rows {
                write_krylov_row(&mut w, row)?;
            }
            rows.len()
        }
    };
    w.flush()?;
    let manifest = write_manifest(out_dir, cfg, "converge", csv_name)?;
    let plot = write_plot_stub(out_dir, csv_name, "squared A-norm error / trace")?;
    Ok(RunArtifacts { csv: path, manifest, plot_script: plot, rows })
}

fn write_krylov_row<W: Write>(w: &mut W, row: &KrylovRow) -> Result<()> {
    write!(
        w,
        "{},{},{},{}",
        row.m,
        fmt_f64(row.res_norm),
        fmt_f64(row.err_sq),
        fmt_f64(row.mu)
    )?;
    for s in &row.samples {
        write!(w, ",{}", fmt_f64(*s))?;
    }
    writeln!(w)?;
    Ok(())
}

fn run_plain_cg(problem: &Problem, cfg: &ExperimentConfig) -> Result<SolveTrace> {
    let n = problem.a.dim();
    let x0 = vec![0.0; n];
    let mut kernel_cfg = CgConfig::for_dim(n);
    kernel_cfg.reorthogonalize = cfg.reorthogonalize;
    if let Some(iters) = cfg.iters {
        kernel_cfg.max_iters = iters;
        kernel_cfg.rel_residual_tol = 0.0;
    } else {
        kernel_cfg.rel_residual_tol = cfg.tol;
    }
    let (_, trace) = crate::cg::cg_solve_with_truth(
        &problem.a,
        &problem.b,
        &x0,
        &kernel_cfg,
        Some(&problem.x_star),
    )?;
    Ok(trace)
}

fn run_bayescg_convergence(
    problem: &Problem,
    cfg: &ExperimentConfig,
    prior_choice: PriorChoice,
) -> Result<Vec<KrylovRow>> {
    let a = &problem.a;
    let n = a.dim();
    if n > MAX_DENSE_DIM {
        return Err(Error::Unsupported(format!(
            "generic-prior convergence runs track dense covariances and are \
             limited to n <= {MAX_DENSE_DIM}, got {n}"
        )));
    }
    let x0 = vec![0.0; n];
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
    bcfg.capture_iterates = true;
    if let Some(iters) = cfg.iters {
        bcfg.max_iters = iters;
        bcfg.rel_residual_tol = 0.0;
    } else {
        bcfg.rel_residual_tol = cfg.tol;
    }
    let (post, trace) = bayescg_solve(a, &problem.b, &prior, &bcfg)?;

    // replay the downdates to recover every intermediate covariance
    let mut sigma = prior.materialize_cov()?;
    let mut trace_cov = {
        let g = Gaussian::new_dense(x0.clone(), sigma.clone())?;
        crate::gaussian::trace_quadratic(a, &g)
    };
    let iterates = trace.iterates.as_ref().expect("iterates captured");
    let mut rows = Vec::new();
    for m in 0..=trace.records.len() {
        let x_m = if m == 0 { &x0 } else { &iterates[m - 1] };
        if m > 0 {
            let dd = &post.downdates[m - 1];
            let u = nalgebra::DVector::from_column_slice(&dd.cov_a_s);
            sigma -= &u * u.transpose() / dd.eta_tilde;
            trace_cov -= a_norm_sq(a, &dd.cov_a_s) / dd.eta_tilde;
        }
        let err_sq = a_norm_sq(a, &sub(&problem.x_star, x_m));
        let g = Gaussian::new_dense(x_m.clone(), (&sigma + sigma.transpose()) * 0.5)?;
        let sampler = g.sampler()?;
        let draws = sampler.draw_batch(cfg.sample_count, iteration_seed(cfg.sample_seed, m));
        let samples: Vec<f64> = draws
            .iter()
            .map(|x| a_norm_sq(a, &sub(x, x_m)))
            .collect();
        rows.push(KrylovRow {
            m,
            res_norm: trace.residual_norm(m),
            err_sq,
            mu: trace_cov,
            sigma_sq: f64::NAN,
            samples,
        });
    }
    Ok(rows)
}

/// Estimation experiment (Krylov solver only): per-iteration analytic and
/// empirical credible quantities plus relative accuracies.
pub fn run_estimation_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunArtifacts> {
    cfg.validate()?;
    let delay = match &cfg.solver {
        SolverChoice::Krylov { delay } => *delay,
        _ => {
            return Err(Error::Config(
                "the estimation experiment requires solver = krylov".into(),
            ))
        }
    };
    fs::create_dir_all(out_dir)?;
    let problem = cfg.problem.assemble()?;
    let rows = match delay {
        Some(d) => run_windowed_krylov(&problem, cfg, d)?,
        None => run_full_krylov(&problem, cfg)?,
    };
    let csv_name = "estimates.csv";
    let path = out_dir.join(csv_name);
    let mut w = BufWriter::new(fs::File::create(&path)?);
    writeln!(
        w,
        "iter,res_norm,anorm_err_sq,mu,sigma_sq,s_alpha,mu_hat,s_hat_alpha,rho_mu,rho_s_alpha{}",
        sample_header(cfg.sample_count)
    )?;
    let h = h_factor(cfg.alpha);
    for row in &rows {
        let s_alpha = row.mu + h * row.sigma_sq.sqrt();
        let empirical = crate::uq::EmpiricalEstimate::from_samples(row.samples.clone(), cfg.alpha)
            .ok();
        let (mu_hat, s_hat) = empirical
            .as_ref()
            .map_or((None, None), |e| (Some(e.mu_hat), Some(e.s_hat_alpha)));
        let rho_mu = crate::uq::relative_accuracy(row.mu, row.err_sq).ok();
        let rho_s = crate::uq::relative_accuracy(s_alpha, row.err_sq).ok();
        write!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            row.m,
            fmt_f64(row.res_norm),
            fmt_f64(row.err_sq),
            fmt_f64(row.mu),
            fmt_f64(row.sigma_sq),
            fmt_f64(s_alpha),
            csv_cell(mu_hat),
            csv_cell(s_hat),
            csv_cell(rho_mu),
            csv_cell(rho_s)
        )?;
        for s in &row.samples {
            write!(w, ",{}", fmt_f64(*s))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    let manifest = write_manifest(out_dir, cfg, "estimate", csv_name)?;
    let plot = write_plot_stub(out_dir, csv_name, "squared A-norm error / estimates")?;
    Ok(RunArtifacts { csv: path, manifest, plot_script: plot, rows: rows.len() })
}

/// Structural and spectral summary of a problem.
#[derive(Debug, Clone)]
pub struct ProblemReport {
    pub n: usize,
    pub nnz: usize,
    pub ritz_min: f64,
    pub ritz_max: f64,
    pub condition_estimate: f64,
    pub shift_constant: Option<f64>,
    pub factor_off_diagonal_nnz: Option<usize>,
}

impl fmt::Display for ProblemReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n = {}", self.n)?;
        writeln!(f, "nnz = {}", self.nnz)?;
        writeln!(f, "ritz_min = {}", fmt_f64(self.ritz_min))?;
        writeln!(f, "ritz_max = {}", fmt_f64(self.ritz_max))?;
        writeln!(f, "condition_estimate = {}", fmt_f64(self.condition_estimate))?;
        if let Some(c) = self.shift_constant {
            writeln!(f, "shift_constant = {}", fmt_f64(c))?;
        }
        if let Some(fill) = self.factor_off_diagonal_nnz {
            writeln!(f, "factor_off_diagonal_nnz = {fill}")?;
        }
        Ok(())
    }
}

/// Lanczos steps used for the spectral estimates in `describe_problem`.
pub const DESCRIBE_LANCZOS_STEPS: usize = 200;

/// Assembles the problem and reports size, sparsity, extremal Ritz values
/// (Lanczos, up to 200 steps), and the derived condition-number estimate.
pub fn describe_problem(cfg: &ExperimentConfig) -> Result<ProblemReport> {
    cfg.validate()?;
    let problem = cfg.problem.assemble()?;
    let (ritz_min, ritz_max) =
        extremal_ritz_values(&problem.a, DESCRIBE_LANCZOS_STEPS, cfg.problem.seed)?;
    Ok(ProblemReport {
        n: problem.a.dim(),
        nnz: problem.a.nnz(),
        ritz_min,
        ritz_max,
        condition_estimate: ritz_max / ritz_min,
        shift_constant: problem.shift_constant,
        factor_off_diagonal_nnz: problem.factor_off_diagonal_nnz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{ProblemKind, ProblemSpec, SolutionMode, SpectrumSpec};

    fn eigs_config(solver: SolverChoice) -> ExperimentConfig {
        ExperimentConfig {
            problem: ProblemSpec {
                kind: ProblemKind::PrescribedSpectrum {
                    spectrum: SpectrumSpec::Geometric { kappa: 1e3 },
                },
                n: 60,
                seed: 5,
                solution: SolutionMode::SampledFromInverse,
            },
            solver,
            reorthogonalize: true,
            iters: None,
            tol: 1e-8,
            sample_count: 4,
            alpha: 95.0,
            sample_seed: 13,
        }
    }

    #[test]
    fn converge_krylov_emits_consistent_rows() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = eigs_config(SolverChoice::Krylov { delay: Some(5) });
        let artifacts = run_convergence_experiment(&cfg, dir.path()).unwrap();
        let text = std::fs::read_to_string(&artifacts.csv).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert_eq!(
            header,
            "iter,res_norm,anorm_err_sq,trace_cov,sample_1,sample_2,sample_3,sample_4"
        );
        let mut rows = 0;
        for line in lines {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells.len(), 8);
            for c in &cells {
                assert!(!c.contains("NaN") && !c.contains("inf"), "{line}");
            }
            // underestimate property in the emitted data
            let err: f64 = cells[2].parse().unwrap();
            let mu: f64 = cells[3].parse().unwrap();
            assert!(mu <= err * (1.0 + 1e-8), "{line}");
            rows += 1;
        }
        assert_eq!(rows, artifacts.rows);
        assert!(rows > 10);
        assert!(artifacts.manifest.exists());
        assert!(artifacts.plot_script.exists());
    }

    #[test]
    fn converge_is_deterministic() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let cfg = eigs_config(SolverChoice::Krylov { delay: Some(3) });
        let a1 = run_convergence_experiment(&cfg, d1.path()).unwrap();
        let a2 = run_convergence_experiment(&cfg, d2.path()).unwrap();
        let b1 = std::fs::read(&a1.csv).unwrap();
        let b2 = std::fs::read(&a2.csv).unwrap();
        assert_eq!(b1, b2);
        let m1 = std::fs::read(&a1.manifest).unwrap();
        let m2 = std::fs::read(&a2.manifest).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn estimation_rows_cover_requested_iterations() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = eigs_config(SolverChoice::Krylov { delay: Some(4) });
        cfg.iters = Some(30);
        let artifacts = run_estimation_experiment(&cfg, dir.path()).unwrap();
        let text = std::fs::read_to_string(&artifacts.csv).unwrap();
        // m = 0..=30 inclusive
        assert_eq!(text.lines().count(), 32);
        let last = text.lines().last().unwrap();
        assert!(last.starts_with("30,"));
    }

    #[test]
    fn full_rank_trace_matches_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = eigs_config(SolverChoice::Krylov { delay: None });
        cfg.problem.n = 40;
        let artifacts = run_convergence_experiment(&cfg, dir.path()).unwrap();
        let text = std::fs::read_to_string(&artifacts.csv).unwrap();
        let mut err0 = None;
        for line in text.lines().skip(1) {
            let cells: Vec<&str> = line.split(',').collect();
            let err: f64 = cells[2].parse().unwrap();
            let mu: f64 = cells[3].parse().unwrap();
            let e0 = *err0.get_or_insert(err);
            if err > 1e-8 * e0 {
                assert!((mu - err).abs() <= 1e-6 * e0, "{line}");
            }
        }
    }

    #[test]
    fn cg_schema_has_no_sample_columns() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = eigs_config(SolverChoice::Cg);
        let artifacts = run_convergence_experiment(&cfg, dir.path()).unwrap();
        let text = std::fs::read_to_string(&artifacts.csv).unwrap();
        assert!(text.starts_with("iter,res_norm,anorm_err_sq\n"));
    }

    #[test]
    fn describe_reports_condition_number() {
        let cfg = eigs_config(SolverChoice::Cg);
        let report = describe_problem(&cfg).unwrap();
        assert_eq!(report.n, 60);
        assert!((report.condition_estimate - 1e3).abs() / 1e3 < 0.05);
        let text = report.to_string();
        assert!(text.contains("condition_estimate"));
    }

    #[test]
    fn estimation_requires_krylov() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = eigs_config(SolverChoice::Cg);
        let err = run_estimation_experiment(&cfg, dir.path()).unwrap_err();
        assert!(err.is_config());
    }
}
