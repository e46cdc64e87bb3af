//! Low-rank Krylov posteriors: conjugate gradients followed by delay
//! iterations that assemble a factored posterior covariance
//! `Gamma_m = V Phi V^T` from A-normalized search directions and the
//! per-iteration error mass `phi_j = gamma_j ||r_{j-1}||^2`.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::cg::{CgConfig, CgKernel, SolveTrace, StepOutcome, Termination};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::linalg::vec::{dot, norm2, sub};
use crate::linalg::SpdOperator;
use crate::solver::{bayescg_solve, BayesCgConfig, Prior, PriorSpec};

/// Factored posterior covariance `V diag(phi) V^T`.
///
/// Columns are the A-normalized search directions `v_j / sqrt(v_j^T A v_j)`
/// for iterations `start .. start + rank`, stored column-major. The trace of
/// `A Gamma` equals `sum(phi)` by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct KrylovFactors {
    n: usize,
    /// 1-based index of the first stored iteration (`m + 1` for a posterior
    /// at iteration `m`).
    pub start: usize,
    v: Vec<f64>,
    pub phi: Vec<f64>,
}

impl KrylovFactors {
    pub fn empty(n: usize, start: usize) -> Self {
        Self { n, start, v: Vec::new(), phi: Vec::new() }
    }

    /// Builds factors from explicit columns and weights. Used for exporting
    /// covariances that did not come out of a delay run (the layout is the
    /// same: `Sigma = V diag(phi) V^T`).
    pub fn from_parts(start: usize, columns: &DMatrix<f64>, phi: Vec<f64>) -> Result<Self> {
        if columns.ncols() != phi.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} columns vs {} weights",
                columns.ncols(),
                phi.len()
            )));
        }
        if phi.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidParameter("weights must be nonnegative".into()));
        }
        Ok(Self {
            n: columns.nrows(),
            start,
            v: columns.as_slice().to_vec(),
            phi,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.v[j * self.n..(j + 1) * self.n]
    }

    fn push_column(&mut self, v: &[f64], phi: f64) {
        debug_assert_eq!(v.len(), self.n);
        self.v.extend_from_slice(v);
        self.phi.push(phi);
    }

    /// `trace(A Gamma) = sum_j phi_j`, accumulated in column order.
    pub fn trace_estimate(&self) -> f64 {
        let mut acc = 0.0;
        for &p in &self.phi {
            acc += p;
        }
        acc
    }

    /// `2 sum_j phi_j^2`, the quadratic-form variance under exact
    /// A-orthonormality of the columns.
    pub fn variance_estimate(&self) -> f64 {
        let mut acc = 0.0;
        for &p in &self.phi {
            acc += p * p;
        }
        2.0 * acc
    }

    /// Factors for the posterior at iteration `m >= start - 1` with delay at
    /// most `d`, i.e. stored columns `m + 1 .. min(m + d, end)`.
    pub fn window(&self, m: usize, d: usize) -> Result<Self> {
        if m + 1 < self.start {
            return Err(Error::InvalidParameter(format!(
                "window at iteration {m} precedes stored start {}",
                self.start
            )));
        }
        let offset = m + 1 - self.start;
        if offset > self.rank() {
            return Err(Error::InvalidParameter(format!(
                "window at iteration {m} exceeds stored rank {}",
                self.rank()
            )));
        }
        let take = d.min(self.rank() - offset);
        Ok(Self {
            n: self.n,
            start: m + 1,
            v: self.v[offset * self.n..(offset + take) * self.n].to_vec(),
            phi: self.phi[offset..offset + take].to_vec(),
        })
    }

    /// Sampling factor `F = V diag(sqrt(phi))` as a dense matrix.
    pub fn sampling_factor(&self) -> DMatrix<f64> {
        let d = self.rank();
        let mut f = DMatrix::zeros(self.n, d);
        for j in 0..d {
            let root = self.phi[j].sqrt();
            let col = self.column(j);
            for i in 0..self.n {
                f[(i, j)] = root * col[i];
            }
        }
        f
    }

    pub fn to_gaussian(&self, mean: Vec<f64>) -> Result<Gaussian> {
        Gaussian::new_factored(mean, self.sampling_factor())
    }

    /// Dense `V Phi V^T` (test scale).
    pub fn materialize(&self) -> DMatrix<f64> {
        let f = self.sampling_factor();
        &f * f.transpose()
    }

    /// Gram matrix `diag(sqrt(phi)) V^T A V diag(sqrt(phi))`; the quadratic
    /// form `z^T G z` with standard normal `z` is distributed as the squared
    /// A-norm deviation of a posterior sample.
    pub fn gram(&self, a: &SpdOperator) -> DMatrix<f64> {
        let d = self.rank();
        let mut g = DMatrix::zeros(d, d);
        for j in 0..d {
            let a_col = a.apply(self.column(j));
            for i in 0..d {
                g[(i, j)] = dot(self.column(i), &a_col);
            }
        }
        for j in 0..d {
            let rj = self.phi[j].sqrt();
            for i in 0..d {
                let ri = self.phi[i].sqrt();
                g[(i, j)] *= ri * rj;
            }
        }
        (&g + g.transpose()) * 0.5
    }

    /// Largest deviation `|v_i^T A v_j - delta_ij|` over stored columns.
    pub fn a_orthonormality_defect(&self, a: &SpdOperator) -> f64 {
        let d = self.rank();
        let mut worst: f64 = 0.0;
        for j in 0..d {
            let a_col = a.apply(self.column(j));
            for i in 0..d {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(self.column(i), &a_col) - want).abs());
            }
        }
        worst
    }

    /// CSV layout: `n,rank,start`, then the phi row, then one row per column
    /// of `V` (column-major).
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{},{},{}", self.n, self.rank(), self.start)?;
        let phi_row: Vec<String> = self.phi.iter().map(|p| format!("{p:?}")).collect();
        writeln!(w, "{}", phi_row.join(","))?;
        for j in 0..self.rank() {
            let row: Vec<String> = self.column(j).iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, message: "missing header".into() })?
            .map_err(Error::Io)?;
        let parts: Vec<&str> = header.trim().split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Parse { line: 1, message: "header must be n,rank,start".into() });
        }
        let n: usize = parts[0].parse().map_err(|_| Error::Parse { line: 1, message: "bad n".into() })?;
        let rank: usize = parts[1].parse().map_err(|_| Error::Parse { line: 1, message: "bad rank".into() })?;
        let start: usize = parts[2].parse().map_err(|_| Error::Parse { line: 1, message: "bad start".into() })?;
        let parse_row = |line: String, line_no: usize, want: usize| -> Result<Vec<f64>> {
            if want == 0 && line.trim().is_empty() {
                return Ok(Vec::new());
            }
            let vals: Result<Vec<f64>> = line
                .trim()
                .split(',')
                .map(|t| {
                    t.parse::<f64>().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("bad float {t:?}"),
                    })
                })
                .collect();
            let vals = vals?;
            if vals.len() != want {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {want} values, found {}", vals.len()),
                });
            }
            Ok(vals)
        };
        let phi_line = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 2, message: "missing phi row".into() })?
            .map_err(Error::Io)?;
        let phi = parse_row(phi_line, 2, rank)?;
        let mut v = Vec::with_capacity(n * rank);
        for j in 0..rank {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse { line: 3 + j, message: "missing column row".into() })?
                .map_err(Error::Io)?;
            v.extend(parse_row(line, 3 + j, n)?);
        }
        Ok(Self { n, start, v, phi })
    }

    /// Raw binary layout: magic `KRYF`, u32 version, then little-endian u64
    /// `n`, `rank`, `start`, the phi values, and `V` column-major as f64.
    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(b"KRYF")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.rank() as u64).to_le_bytes())?;
        w.write_all(&(self.start as u64).to_le_bytes())?;
        for p in &self.phi {
            w.write_all(&p.to_le_bytes())?;
        }
        for v in &self.v {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: std::io::Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"KRYF" {
            return Err(Error::Parse { line: 0, message: "bad magic".into() });
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != 1 {
            return Err(Error::Parse { line: 0, message: format!("unsupported version {version}") });
        }
        let mut u64buf = [0u8; 8];
        let mut read_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut u64buf)?;
            Ok(u64::from_le_bytes(u64buf))
        };
        let n = read_u64(r)? as usize;
        let rank = read_u64(r)? as usize;
        let start = read_u64(r)? as usize;
        let mut f64buf = [0u8; 8];
        let mut read_f64 = |r: &mut R| -> Result<f64> {
            r.read_exact(&mut f64buf)?;
            Ok(f64::from_le_bytes(f64buf))
        };
        let mut phi = Vec::with_capacity(rank);
        for _ in 0..rank {
            phi.push(read_f64(r)?);
        }
        let mut v = Vec::with_capacity(n * rank);
        for _ in 0..n * rank {
            v.push(read_f64(r)?);
        }
        Ok(Self { n, start, v, phi })
    }
}

/// Runs CG to convergence, then `d` delay iterations whose A-normalized
/// directions and `phi` weights form the rank-`d` posterior covariance
/// factors. The returned mean is produced by the same kernel as
/// [`cg_solve`](crate::cg::cg_solve), so the iterates agree bit for bit.
///
/// If the Krylov space is exhausted during the delay the factors are
/// truncated (an exhausted space means zero remaining error mass); factors
/// are empty when the grade coincides with convergence.
pub fn bayescg_krylov_solve(
    a: &SpdOperator,
    b: &[f64],
    x0: &[f64],
    d: usize,
    cfg: &CgConfig,
) -> Result<(Vec<f64>, KrylovFactors, SolveTrace)> {
    if d == 0 {
        return Err(Error::InvalidParameter("delay must be >= 1".into()));
    }
    let mut kernel = CgKernel::new(a, b, x0, cfg, None)?;
    let mut exhausted = false;
    if kernel.converged() && cfg.rel_residual_tol > 0.0 {
        kernel.trace.termination = Termination::Converged;
    } else {
        for _ in 0..cfg.max_iters {
            match kernel.step()? {
                StepOutcome::Continue => {}
                StepOutcome::Converged => break,
                StepOutcome::GradeReached => {
                    exhausted = true;
                    break;
                }
            }
        }
    }
    let x_m = kernel.x.clone();
    let m = kernel.iter;

    let mut factors = KrylovFactors::empty(a.dim(), m + 1);
    if !exhausted {
        for _ in 0..d {
            if !advance_with_factor(&mut kernel, &mut factors)? {
                break;
            }
        }
    }
    let trace = kernel.trace;
    Ok((x_m, factors, trace))
}

/// Performs one kernel step and appends the A-normalized direction and its
/// `phi` weight when the step produced an iteration. Returns false once the
/// Krylov space is exhausted.
fn advance_with_factor(kernel: &mut CgKernel<'_>, factors: &mut KrylovFactors) -> Result<bool> {
    let rr_before = kernel.current_rr();
    let v_entry = kernel.v.clone();
    let iter_before = kernel.iter;
    let outcome = kernel.step()?;
    if kernel.iter > iter_before {
        let rec = *kernel.trace.records.last().expect("iteration recorded");
        let scale = 1.0 / rec.eta.sqrt();
        let col: Vec<f64> = v_entry.iter().map(|v| v * scale).collect();
        factors.push_column(&col, rec.gamma * rr_before);
    }
    Ok(!matches!(outcome, StepOutcome::GradeReached))
}

/// Runs reorthogonalized CG to the Krylov grade, capturing every factor
/// column and iterate. The result describes the full-rank posterior family:
/// the window at iteration `m` is `columns m+1..K`. Test scale.
pub fn krylov_full_run(
    a: &SpdOperator,
    b: &[f64],
    x0: &[f64],
) -> Result<(Vec<f64>, KrylovFactors, SolveTrace)> {
    let n = a.dim();
    let mut cfg = CgConfig::reorthogonalized(n);
    cfg.capture_iterates = true;
    cfg.max_iters = n;
    cfg.rel_residual_tol = 0.0;
    let mut kernel = CgKernel::new(a, b, x0, &cfg, None)?;
    let mut factors = KrylovFactors::empty(n, 1);
    while kernel.iter < n {
        if !advance_with_factor(&mut kernel, &mut factors)? {
            break;
        }
    }
    let (x, trace) = kernel.finish();
    Ok((x, factors, trace))
}

/// Builds the full-rank Krylov prior `Gamma_0 = V Phi V^T` by running
/// reorthogonalized CG to the grade (test scale, `n <= 512`).
pub fn build_full_krylov_prior(
    a: &SpdOperator,
    b: &[f64],
    x0: &[f64],
) -> Result<(Gaussian, KrylovFactors)> {
    if a.dim() > crate::linalg::MAX_DENSE_DIM {
        return Err(Error::Unsupported(format!(
            "full Krylov prior construction is limited to n <= {}, got {}",
            crate::linalg::MAX_DENSE_DIM,
            a.dim()
        )));
    }
    let (_, factors, _) = krylov_full_run(a, b, x0)?;
    let gaussian = factors.to_gaussian(x0.to_vec())?;
    Ok((gaussian, factors))
}

/// `phi` weights through the global-orthogonality identity
/// `phi_i = (v_i^T r_0)^2` (A-normalized `v_i`), for comparison against the
/// recursion values; the two agree only when orthogonality is maintained.
pub fn phi_alternative(factors: &KrylovFactors, r0: &[f64]) -> Vec<f64> {
    (0..factors.rank())
        .map(|j| {
            let p = dot(factors.column(j), r0);
            p * p
        })
        .collect()
}

/// Report from a dual run comparing the delayed-factor solver against the
/// generic recursion under the explicitly built truncated Krylov prior.
#[derive(Debug)]
pub struct EquivalenceReport {
    pub max_direction_deviation: f64,
    pub max_iterate_deviation: f64,
    pub covariance_deviation: f64,
}

/// Runs the generic solver under the explicit rank-(m+d) truncated Krylov
/// prior and checks that its search directions and iterates reproduce CG,
/// and that its posterior covariance equals the stored factor window.
pub fn approx_prior_equivalence_check(
    a: &SpdOperator,
    b: &[f64],
    x0: &[f64],
    m: usize,
    d: usize,
) -> Result<EquivalenceReport> {
    let n = a.dim();
    let (_, factors, _) = krylov_full_run(a, b, x0)?;
    if factors.rank() < m + d {
        return Err(Error::InvalidParameter(format!(
            "grade {} is below m + d = {}",
            factors.rank(),
            m + d
        )));
    }
    let truncated = factors.window(0, m + d)?;
    let prior_factor = truncated.sampling_factor();

    // reference CG run
    let mut cg_cfg = CgConfig::reorthogonalized(n);
    cg_cfg.capture_directions = true;
    cg_cfg.capture_iterates = true;
    cg_cfg.max_iters = m;
    cg_cfg.rel_residual_tol = 0.0;
    let mut kernel = CgKernel::new(a, b, x0, &cg_cfg, None)?;
    for _ in 0..m {
        match kernel.step()? {
            StepOutcome::Continue => {}
            _ => break,
        }
    }
    let (_, cg_trace) = kernel.finish();

    // generic recursion under the truncated prior
    let prior = Prior::realize(&PriorSpec::ExplicitFactored(prior_factor), a, x0.to_vec())?;
    let mut bcg_cfg = BayesCgConfig::for_dim(n);
    bcg_cfg.reorthogonalize = true;
    bcg_cfg.capture_directions = true;
    bcg_cfg.capture_iterates = true;
    bcg_cfg.max_iters = m;
    bcg_cfg.rel_residual_tol = 0.0;
    bcg_cfg.dense_covariance = n <= crate::linalg::MAX_DENSE_DIM;
    let (post, bcg_trace) = bayescg_solve(a, b, &prior, &bcg_cfg)?;

    let cg_dirs = cg_trace.directions.as_ref().expect("captured");
    let bcg_dirs = bcg_trace.directions.as_ref().expect("captured");
    let cg_iterates = cg_trace.iterates.as_ref().expect("captured");
    let bcg_iterates = bcg_trace.iterates.as_ref().expect("captured");
    if cg_dirs.len() < m || bcg_dirs.len() < m {
        return Err(Error::InvalidParameter(format!(
            "runs terminated before {m} iterations (cg {}, generic {})",
            cg_dirs.len(),
            bcg_dirs.len()
        )));
    }
    let mut max_dir = 0.0f64;
    let mut max_it = 0.0f64;
    for i in 0..m {
        let dd = norm2(&sub(&cg_dirs[i], &bcg_dirs[i])) / norm2(&cg_dirs[i]).max(1e-300);
        let di = norm2(&sub(&cg_iterates[i], &bcg_iterates[i]))
            / norm2(&cg_iterates[i]).max(1e-300);
        max_dir = max_dir.max(dd);
        max_it = max_it.max(di);
    }

    let cov_dev = match post.dense_cov {
        Some(cov) => {
            let expected = truncated.window(m, d)?.materialize();
            let scale = expected.abs().max().max(1e-300);
            (cov - expected).abs().max() / scale
        }
        None => f64::NAN,
    };
    Ok(EquivalenceReport {
        max_direction_deviation: max_dir,
        max_iterate_deviation: max_it,
        covariance_deviation: cov_dev,
    })
}

/// Dense principal-angle comparison of `K_k(A, r0)` and `K_k(A G A, r0)`:
/// returns the largest deviation of any principal cosine from one, over
/// `k = 1..=depth`.
pub fn krylov_space_equality_defect(
    a: &SpdOperator,
    gamma0: &DMatrix<f64>,
    r0: &[f64],
    depth: usize,
) -> Result<f64> {
    let n = a.dim();
    let aga = {
        let ad = a.to_dense();
        &ad * gamma0 * &ad
    };
    let mut defect: f64 = 0.0;
    let basis_a = arnoldi_basis(|v| a.apply(v), r0, depth, n);
    let basis_g = arnoldi_basis(
        |v| (&aga * DVector::from_column_slice(v)).as_slice().to_vec(),
        r0,
        depth,
        n,
    );
    for k in 1..=depth {
        if basis_a.ncols() < k || basis_g.ncols() < k {
            if basis_a.ncols() != basis_g.ncols() {
                return Err(Error::Singular(format!(
                    "Krylov spaces have grades {} and {} below depth {depth}",
                    basis_a.ncols(),
                    basis_g.ncols()
                )));
            }
            break;
        }
        let qa = basis_a.columns(0, k);
        let qg = basis_g.columns(0, k);
        let overlap = qa.transpose() * qg;
        let svd = overlap.svd(false, false);
        for s in svd.singular_values.iter() {
            defect = defect.max((s - 1.0).abs());
        }
    }
    Ok(defect)
}

/// Orthonormal nested basis of the Krylov spaces `K_k(B, r0)`: each new
/// power-iterate is CGS2-orthogonalized against the previous columns, which
/// keeps the spans well conditioned for principal-angle comparison.
fn arnoldi_basis(
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    r0: &[f64],
    depth: usize,
    n: usize,
) -> DMatrix<f64> {
    let mut basis = crate::linalg::OrthoBasis::new(n);
    let mut cur = r0.to_vec();
    for _ in 0..depth {
        if basis.orthogonalize(&mut cur) == 0.0 {
            break;
        }
        basis.push_normalized(&cur);
        cur = apply(basis.vector(basis.len() - 1));
    }
    let mut out = DMatrix::zeros(n, basis.len());
    for j in 0..basis.len() {
        out.set_column(j, &DVector::from_column_slice(basis.vector(j)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cg::cg_solve;
    use crate::linalg::a_norm_sq;
    use crate::problem::{haar_orthogonal, spectrum_geometric};

    fn dense_spd(n: usize, kappa: f64, seed: u64) -> SpdOperator {
        let d = spectrum_geometric(n, kappa).unwrap();
        let q = haar_orthogonal(n, seed).unwrap();
        let m = &q * DMatrix::from_diagonal(&DVector::from_vec(d)) * q.transpose();
        SpdOperator::Dense((&m + m.transpose()) * 0.5)
    }

    fn delay_cfg(n: usize) -> CgConfig {
        let mut cfg = CgConfig::reorthogonalized(n);
        cfg.capture_directions = true;
        cfg
    }

    #[test]
    fn identity_matrix_yields_empty_factors() {
        let a = SpdOperator::identity(5);
        let b = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let (x, factors, trace) =
            bayescg_krylov_solve(&a, &b, &vec![0.0; 5], 3, &delay_cfg(5)).unwrap();
        assert_eq!(trace.iterations() >= 1, true);
        assert!(factors.is_empty());
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn means_bitwise_equal_to_cg() {
        let n = 40;
        let a = dense_spd(n, 10.0, 21);
        let x_star: Vec<f64> = (0..n).map(|i| (i as f64 * 0.17).sin()).collect();
        let b = a.apply(&x_star);
        let x0 = vec![0.0; n];
        let cfg = delay_cfg(n);
        let (x_cg, _) = cg_solve(&a, &b, &x0, &cfg).unwrap();
        let (x_k, factors, _) = bayescg_krylov_solve(&a, &b, &x0, 5, &cfg).unwrap();
        assert_eq!(factors.rank(), 5);
        for (p, q) in x_cg.iter().zip(&x_k) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
    }

    #[test]
    fn factors_are_a_orthonormal_with_positive_phi() {
        let n = 40;
        let a = dense_spd(n, 10.0, 4);
        let x_star: Vec<f64> = (0..n).map(|i| ((i + 2) as f64).ln()).collect();
        let b = a.apply(&x_star);
        let (_, factors, _) =
            bayescg_krylov_solve(&a, &b, &vec![0.0; n], 6, &delay_cfg(n)).unwrap();
        assert_eq!(factors.rank(), 6);
        assert!(factors.phi.iter().all(|&p| p > 0.0));
        assert!(factors.a_orthonormality_defect(&a) <= 1e-8);
    }

    #[test]
    fn trace_estimate_underestimates_error() {
        let n = 50;
        let a = dense_spd(n, 10.0, 13);
        let x_star: Vec<f64> = (0..n).map(|i| (i as f64 * 0.09).cos()).collect();
        let b = a.apply(&x_star);
        let x0 = vec![0.0; n];
        let (x_m, factors, _) =
            bayescg_krylov_solve(&a, &b, &x0, 5, &delay_cfg(n)).unwrap();
        let err_sq = a_norm_sq(&a, &sub(&x_star, &x_m));
        let mu = factors.trace_estimate();
        assert!(mu <= err_sq * (1.0 + 1e-8), "mu {mu} vs err {err_sq}");
        assert!(mu > 0.0);
    }

    #[test]
    fn full_run_trace_identity_and_nesting() {
        let n = 24;
        let a = dense_spd(n, 200.0, 17);
        let x_star: Vec<f64> = (0..n).map(|i| (i as f64 * 0.31).sin() + 1.0).collect();
        let b = a.apply(&x_star);
        let x0 = vec![0.0; n];
        let (_, factors, trace) = krylov_full_run(&a, &b, &x0).unwrap();
        let k = factors.rank();
        assert!(k >= n - 1, "grade {k} for dimension {n}");
        let iterates = trace.iterates.as_ref().unwrap();
        let err0 = a_norm_sq(&a, &sub(&x_star, &x0));
        for m in 0..k {
            let x_m = if m == 0 { &x0 } else { &iterates[m - 1] };
            let err_sq = a_norm_sq(&a, &sub(&x_star, x_m));
            if err_sq < 1e-8 * err0 {
                continue;
            }
            let tail = factors.window(m, k - m).unwrap();
            let dev = (tail.trace_estimate() - err_sq).abs();
            assert!(dev <= 1e-6 * err0, "m = {m}: dev {dev}");
        }
        // nesting: a window is a prefix-consistent slice of the full factors
        let w = factors.window(3, 4).unwrap();
        assert_eq!(w.rank(), 4);
        assert_eq!(w.phi.as_slice(), &factors.phi[3..7]);
        assert_eq!(w.column(0), factors.column(3));
    }

    #[test]
    fn full_prior_eigen_identity_and_range() {
        let n = 10;
        let a = dense_spd(n, 40.0, 23);
        let x_star: Vec<f64> = (0..n).map(|i| (1.0 + i as f64 * 0.4).sqrt()).collect();
        let b = a.apply(&x_star);
        let x0 = vec![0.0; n];
        let (gaussian, factors) = build_full_krylov_prior(&a, &b, &x0).unwrap();
        let gamma0 = gaussian.dense_covariance();
        // eigen identity Gamma_0 A v_i = phi_i v_i
        for j in 0..factors.rank() {
            let av = a.apply(factors.column(j));
            let gav = (&gamma0 * DVector::from_column_slice(&av)).as_slice().to_vec();
            for i in 0..n {
                let want = factors.phi[j] * factors.column(j)[i];
                assert!(
                    (gav[i] - want).abs() <= 1e-8 * factors.phi[0].abs().max(1.0),
                    "column {j}"
                );
            }
        }
        // range condition: x* - x0 is represented in the factor range
        let f = factors.sampling_factor();
        let e0 = DVector::from_column_slice(&sub(&x_star, &x0));
        let coeffs = f
            .clone()
            .svd(true, true)
            .solve(&e0, 1e-12)
            .expect("least squares");
        let residual = (&f * coeffs - &e0).norm() / e0.norm();
        assert!(residual <= 1e-8, "projection residual {residual}");
        // Krylov space equality through principal angles
        let r0 = b.clone();
        let defect = krylov_space_equality_defect(&a, &gamma0, &r0, factors.rank().min(6)).unwrap();
        assert!(defect <= 1e-6, "principal angle defect {defect}");
    }

    #[test]
    fn phi_alternative_matches_on_reorthogonalized_run() {
        let n = 20;
        let a = dense_spd(n, 100.0, 31);
        let x_star: Vec<f64> = (0..n).map(|i| (i as f64 * 0.23).cos() * 2.0).collect();
        let b = a.apply(&x_star);
        let x0 = vec![0.0; n];
        let (_, factors, _) = krylov_full_run(&a, &b, &x0).unwrap();
        let r0 = b.clone(); // x0 = 0
        let alt = phi_alternative(&factors, &r0);
        for (j, (&p, &q)) in factors.phi.iter().zip(&alt).enumerate() {
            // compare while the error mass is resolvable
            if p <= 1e-12 * factors.phi[0] {
                continue;
            }
            let dev = (p - q).abs() / p;
            assert!(dev <= 1e-6, "phi {j}: recursion {p} vs direct {q}");
        }
    }

    #[test]
    fn equivalence_of_truncated_prior_and_delay_solver() {
        let n = 12;
        let a = dense_spd(n, 60.0, 37);
        let x_star: Vec<f64> = (0..n).map(|i| 0.5 + (i as f64 * 0.61).sin()).collect();
        let b = a.apply(&x_star);
        let report = approx_prior_equivalence_check(&a, &b, &vec![0.0; n], 4, 2).unwrap();
        assert!(report.max_direction_deviation <= 1e-8, "{report:?}");
        assert!(report.max_iterate_deviation <= 1e-8, "{report:?}");
        assert!(report.covariance_deviation <= 1e-8, "{report:?}");
    }

    #[test]
    fn csv_and_binary_roundtrip() {
        let n = 8;
        let a = dense_spd(n, 30.0, 41);
        let x_star: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let b = a.apply(&x_star);
        let (_, factors, _) =
            bayescg_krylov_solve(&a, &b, &vec![0.0; n], 3, &delay_cfg(n)).unwrap();
        let mut csv = Vec::new();
        factors.write_csv(&mut csv).unwrap();
        let from_csv = KrylovFactors::read_csv(std::io::Cursor::new(csv)).unwrap();
        assert_eq!(from_csv, factors);
        let mut bin = Vec::new();
        factors.write_binary(&mut bin).unwrap();
        let from_bin = KrylovFactors::read_binary(&mut std::io::Cursor::new(bin)).unwrap();
        assert_eq!(from_bin, factors);
    }
}
