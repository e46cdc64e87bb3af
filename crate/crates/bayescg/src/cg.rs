//! Hestenes-Stiefel conjugate gradient with optional residual
//! reorthogonalization (CGS2) and full per-iteration trace capture.

use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::vec::{axpy, dot, sub};
use crate::linalg::{a_norm_sq, OrthoBasis, SpdOperator};

/// Breakdown threshold for the curvature `v^T A v`.
pub(crate) const BREAKDOWN_TOL: f64 = 1e-30;

#[derive(Debug, Clone)]
pub struct CgConfig {
    pub max_iters: usize,
    pub rel_residual_tol: f64,
    pub reorthogonalize: bool,
    pub capture_directions: bool,
    pub capture_iterates: bool,
}

impl CgConfig {
    /// Defaults for an `n`-dimensional system: tolerance `1e-8`, at most
    /// `10 n` iterations.
    pub fn for_dim(n: usize) -> Self {
        Self {
            max_iters: 10 * n.max(1),
            rel_residual_tol: 1e-8,
            reorthogonalize: false,
            capture_directions: false,
            capture_iterates: false,
        }
    }

    pub fn reorthogonalized(n: usize) -> Self {
        Self {
            reorthogonalize: true,
            ..Self::for_dim(n)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.rel_residual_tol >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rel_residual_tol must be nonnegative, got {}",
                self.rel_residual_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Relative residual dropped below tolerance.
    Converged,
    /// Residual vanished / dependence detected: the Krylov space is exhausted.
    GradeReached,
    /// Iteration budget exhausted; best iterate returned.
    MaxIters,
}

/// One recorded iteration: step size `gamma`, direction-update coefficient
/// `delta`, curvature `eta = v^T A v`, residual norm after the update, and
/// the squared A-norm error when the true solution is known.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub iter: usize,
    pub res_norm: f64,
    pub gamma: f64,
    pub delta: f64,
    pub eta: f64,
    pub anorm_err_sq: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub initial_residual_norm: f64,
    /// Squared A-norm error at the initial guess when the solution is known.
    pub initial_anorm_err_sq: Option<f64>,
    pub records: Vec<IterationRecord>,
    pub directions: Option<Vec<Vec<f64>>>,
    /// Initial guess followed by nothing; populated with `capture_iterates`.
    pub initial_iterate: Option<Vec<f64>>,
    pub iterates: Option<Vec<Vec<f64>>>,
    pub termination: Termination,
}

impl SolveTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    /// `||r_i||_2` with `i = 0` meaning the initial residual.
    pub fn residual_norm(&self, i: usize) -> f64 {
        if i == 0 {
            self.initial_residual_norm
        } else {
            self.records[i - 1].res_norm
        }
    }

    /// `phi_i = gamma_i ||r_{i-1}||^2`, the A-norm error mass resolved by
    /// iteration `i` (1-based).
    pub fn phi(&self, i: usize) -> f64 {
        assert!(i >= 1 && i <= self.records.len());
        let rn = self.residual_norm(i - 1);
        self.records[i - 1].gamma * rn * rn
    }

    /// Writes the per-iteration history as CSV
    /// (`iter,res_norm,gamma,delta,anorm_err_sq`).
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "iter,res_norm,gamma,delta,anorm_err_sq")?;
        for rec in &self.records {
            match rec.anorm_err_sq {
                Some(e) => writeln!(
                    w,
                    "{},{:?},{:?},{:?},{:?}",
                    rec.iter, rec.res_norm, rec.gamma, rec.delta, e
                )?,
                None => writeln!(
                    w,
                    "{},{:?},{:?},{:?},",
                    rec.iter, rec.res_norm, rec.gamma, rec.delta
                )?,
            }
        }
        Ok(())
    }
}

/// Outcome of a single kernel step.
pub(crate) enum StepOutcome {
    Continue,
    Converged,
    GradeReached,
}

/// Shared Hestenes-Stiefel iteration state. Both the plain solver and the
/// delayed posterior-factor solver drive this kernel, so their iterates are
/// produced by the identical instruction sequence.
pub(crate) struct CgKernel<'a> {
    a: &'a SpdOperator,
    truth: Option<&'a [f64]>,
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub v: Vec<f64>,
    av: Vec<f64>,
    rr: f64,
    stop_rr: f64,
    pub iter: usize,
    reorth: Option<OrthoBasis>,
    pub trace: SolveTrace,
}

impl<'a> CgKernel<'a> {
    pub fn new(
        a: &'a SpdOperator,
        b: &[f64],
        x0: &[f64],
        cfg: &CgConfig,
        truth: Option<&'a [f64]>,
    ) -> Result<Self> {
        cfg.validate()?;
        let n = a.dim();
        if b.len() != n || x0.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "operator dimension {n}, b length {}, x0 length {}",
                b.len(),
                x0.len()
            )));
        }
        if let Some(t) = truth {
            if t.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "truth length {} vs dimension {n}",
                    t.len()
                )));
            }
        }
        let mut r = b.to_vec();
        let ax = a.apply(x0);
        axpy(-1.0, &ax, &mut r);
        let rr = dot(&r, &r);
        let r0_norm = rr.sqrt();
        let mut reorth = None;
        if cfg.reorthogonalize {
            let mut basis = OrthoBasis::new(n);
            basis.push_normalized(&r);
            reorth = Some(basis);
        }
        let initial_anorm_err_sq = truth.map(|t| a_norm_sq(a, &sub(t, x0)));
        let trace = SolveTrace {
            initial_residual_norm: r0_norm,
            initial_anorm_err_sq,
            records: Vec::new(),
            directions: cfg.capture_directions.then(Vec::new),
            initial_iterate: cfg.capture_iterates.then(|| x0.to_vec()),
            iterates: cfg.capture_iterates.then(Vec::new),
            termination: Termination::MaxIters,
        };
        Ok(Self {
            a,
            truth,
            x: x0.to_vec(),
            v: r.clone(),
            av: vec![0.0; n],
            r,
            rr,
            stop_rr: (cfg.rel_residual_tol * r0_norm) * (cfg.rel_residual_tol * r0_norm),
            iter: 0,
            reorth,
            trace,
        })
    }

    pub fn converged(&self) -> bool {
        self.rr <= self.stop_rr
    }

    pub fn current_rr(&self) -> f64 {
        self.rr
    }

    /// Runs one HS iteration. `eta <= 0` with a nonvanishing residual is a
    /// breakdown (loss of positive definiteness); a vanishing residual or a
    /// CGS2 dependence is the Krylov grade.
    pub(crate) fn step(&mut self) -> Result<StepOutcome> {
        if self.rr == 0.0 {
            self.trace.termination = Termination::GradeReached;
            return Ok(StepOutcome::GradeReached);
        }
        self.a.apply_into(&self.v, &mut self.av);
        let eta = dot(&self.v, &self.av);
        if !(eta > BREAKDOWN_TOL) {
            if self.rr <= self.stop_rr.max(1e-28 * self.trace.initial_residual_norm.powi(2)) {
                self.trace.termination = Termination::GradeReached;
                return Ok(StepOutcome::GradeReached);
            }
            return Err(Error::Breakdown {
                iter: self.iter + 1,
                quantity: "v^T A v",
                value: eta,
            });
        }
        self.iter += 1;
        let gamma = self.rr / eta;
        if !gamma.is_finite() {
            return Err(Error::Breakdown {
                iter: self.iter,
                quantity: "gamma",
                value: gamma,
            });
        }
        if let Some(dirs) = self.trace.directions.as_mut() {
            dirs.push(self.v.clone());
        }
        axpy(gamma, &self.v, &mut self.x);
        axpy(-gamma, &self.av, &mut self.r);

        let mut grade = false;
        if let Some(basis) = self.reorth.as_mut() {
            let nr = basis.orthogonalize(&mut self.r);
            if nr == 0.0 {
                grade = true;
            } else {
                basis.push_normalized(&self.r);
            }
        }

        let rr_new = dot(&self.r, &self.r);
        let delta = rr_new / self.rr;
        let anorm_err_sq = self.truth.map(|t| a_norm_sq(self.a, &sub(t, &self.x)));
        self.trace.records.push(IterationRecord {
            iter: self.iter,
            res_norm: rr_new.sqrt(),
            gamma,
            delta,
            eta,
            anorm_err_sq,
        });
        if let Some(iterates) = self.trace.iterates.as_mut() {
            iterates.push(self.x.clone());
        }

        // v_{m+1} = r_m + delta_m v_m
        for i in 0..self.v.len() {
            self.v[i] = self.r[i] + delta * self.v[i];
        }
        self.rr = rr_new;

        if grade || rr_new == 0.0 {
            self.trace.termination = Termination::GradeReached;
            return Ok(StepOutcome::GradeReached);
        }
        if self.converged() {
            self.trace.termination = Termination::Converged;
            return Ok(StepOutcome::Converged);
        }
        Ok(StepOutcome::Continue)
    }

    pub fn finish(self) -> (Vec<f64>, SolveTrace) {
        (self.x, self.trace)
    }
}

/// Solves `A x = b` by conjugate gradients.
///
/// With `truth = Some(x_star)` the squared A-norm error is recorded at every
/// iteration. Breakdown surfaces as an error; exhausting `max_iters` returns
/// the best iterate with [`Termination::MaxIters`].
pub fn cg_solve_with_truth(
    a: &SpdOperator,
    b: &[f64],
    x0: &[f64],
    cfg: &CgConfig,
    truth: Option<&[f64]>,
) -> Result<(Vec<f64>, SolveTrace)> {
    let mut kernel = CgKernel::new(a, b, x0, cfg, truth)?;
    if kernel.converged() && cfg.rel_residual_tol > 0.0 {
        kernel.trace.termination = Termination::Converged;
        return Ok(kernel.finish());
    }
    for _ in 0..cfg.max_iters {
        match kernel.step()? {
            StepOutcome::Continue => {}
            StepOutcome::Converged | StepOutcome::GradeReached => break,
        }
    }
    Ok(kernel.finish())
}

pub fn cg_solve(
    a: &SpdOperator,
    b: &[f64],
    x0: &[f64],
    cfg: &CgConfig,
) -> Result<(Vec<f64>, SolveTrace)> {
    cg_solve_with_truth(a, b, x0, cfg, None)
}

/// Evaluates both sides of the Hestenes-Stiefel error-reduction identity
/// `||x*-x_m||_A^2 - ||x*-x_{m+d}||_A^2 = sum_{i=m+1}^{m+d} gamma_i ||r_{i-1}||^2`.
///
/// Requires iterates captured in the trace. Returns `(lhs, rhs)` for the
/// caller to compare.
pub fn hs_error_identity_check(
    trace: &SolveTrace,
    a: &SpdOperator,
    x_star: &[f64],
    m: usize,
    d: usize,
) -> Result<(f64, f64)> {
    let iterates = trace
        .iterates
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("trace did not capture iterates".into()))?;
    let k = trace.records.len();
    if m + d > k {
        return Err(Error::InvalidParameter(format!(
            "window [{m}, {}] exceeds recorded {k} iterations",
            m + d
        )));
    }
    let x0 = trace
        .initial_iterate
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("trace did not capture the initial guess".into()))?;
    let err_at = |i: usize| -> f64 {
        // iterate index 0 is the initial guess; index i >= 1 is x_i
        let x = if i == 0 { x0 } else { &iterates[i - 1] };
        a_norm_sq(a, &sub(x_star, x))
    };
    let lhs = err_at(m) - err_at(m + d);
    let mut rhs = 0.0;
    for i in (m + 1)..=(m + d) {
        rhs += trace.phi(i);
    }
    Ok((lhs, rhs))
}
