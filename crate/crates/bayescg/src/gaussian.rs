//! Gaussian distributions with dense or factored covariance: sampling,
//! direct linear conditioning (the oracle for the recursive solvers), and
//! quadratic-form moments.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::eig::{pseudo_inverse, sqrt_factor_abs};
use crate::linalg::vec::dot;
use crate::linalg::{SpdOperator, DEFAULT_RANK_TOL};

/// Sample count below which batch sampling stays serial.
const PAR_MIN_SAMPLES: usize = 256;

/// Covariance representation: dense symmetric, or a factor `F` with
/// `Sigma = F F^T` (positive semi-definite by construction).
#[derive(Debug, Clone)]
pub enum Covariance {
    Dense(DMatrix<f64>),
    Factored(DMatrix<f64>),
}

#[derive(Debug, Clone)]
pub struct Gaussian {
    pub mean: Vec<f64>,
    pub cov: Covariance,
}

impl Gaussian {
    pub fn new_dense(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "mean length {} vs covariance {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        crate::linalg::eig::check_symmetric(&cov, 1e-12)?;
        Ok(Self { mean, cov: Covariance::Dense(cov) })
    }

    pub fn new_factored(mean: Vec<f64>, factor: DMatrix<f64>) -> Result<Self> {
        if factor.nrows() != mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "mean length {} vs factor rows {}",
                mean.len(),
                factor.nrows()
            )));
        }
        Ok(Self { mean, cov: Covariance::Factored(factor) })
    }

    /// Point mass at `mean`.
    pub fn point(mean: Vec<f64>) -> Self {
        let n = mean.len();
        Self { mean, cov: Covariance::Factored(DMatrix::zeros(n, 0)) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn dense_covariance(&self) -> DMatrix<f64> {
        match &self.cov {
            Covariance::Dense(s) => s.clone(),
            Covariance::Factored(f) => f * f.transpose(),
        }
    }

    /// Prepares a sampler, factoring a dense covariance through its spectral
    /// absolute value. A negative eigenvalue below `-1e-10 * lambda_max` is
    /// reported through [`GaussianSampler::negative_eigenvalue`].
    pub fn sampler(&self) -> Result<GaussianSampler> {
        let (factor, negative_eigenvalue) = match &self.cov {
            Covariance::Factored(f) => (f.clone(), None),
            Covariance::Dense(s) => {
                let (f, min_eig) = sqrt_factor_abs(s)?;
                let lambda_max = s.abs().max();
                let flag = if min_eig < -1e-10 * lambda_max.max(1e-300) {
                    Some(min_eig)
                } else {
                    None
                };
                (f, flag)
            }
        };
        Ok(GaussianSampler {
            mean: self.mean.clone(),
            factor,
            negative_eigenvalue,
        })
    }

    /// Draws `count` independent samples; a convenience over [`sampler`].
    ///
    /// [`sampler`]: Self::sampler
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        Ok(self.sampler()?.draw_batch(count, seed))
    }
}

/// Precomputed factor for repeated sampling: `X = mean + F Z`, `Z` standard
/// normal. Sample `i` of a batch uses stream `i` of a counter-based RNG, so
/// batches are reproducible regardless of thread count.
pub struct GaussianSampler {
    mean: Vec<f64>,
    factor: DMatrix<f64>,
    /// Most negative eigenvalue when a dense covariance was repaired through
    /// the absolute-value factorization.
    pub negative_eigenvalue: Option<f64>,
}

impl GaussianSampler {
    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    fn draw_one(&self, seed: u64, stream: u64) -> Vec<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let d = self.factor.ncols();
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut x = self.mean.clone();
        let data = self.factor.as_slice();
        let n = self.mean.len();
        for (j, &zj) in z.iter().enumerate() {
            let col = &data[j * n..(j + 1) * n];
            for i in 0..n {
                x[i] += zj * col[i];
            }
        }
        x
    }

    pub fn draw_batch(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        #[cfg(feature = "parallel")]
        if count >= PAR_MIN_SAMPLES {
            return (0..count)
                .into_par_iter()
                .map(|i| self.draw_one(seed, i as u64))
                .collect();
        }
        (0..count).map(|i| self.draw_one(seed, i as u64)).collect()
    }
}

/// Conditions `prior` on the exact linear observation `M x = y`.
///
/// Returns the Gaussian with mean `x0 + S0 M^T (M S0 M^T)^+ (y - M x0)` and
/// covariance `S0 - S0 M^T (M S0 M^T)^+ M S0`, using the Moore-Penrose
/// inverse so singular prior covariances are admissible. Dense oracle-scale
/// path used to cross-check the recursive solvers.
pub fn condition_on_linear(prior: &Gaussian, m: &DMatrix<f64>, y: &[f64]) -> Result<Gaussian> {
    let n = prior.dim();
    if m.ncols() != n && m.nrows() != 0 {
        return Err(Error::DimensionMismatch(format!(
            "observation matrix has {} columns, prior dimension {n}",
            m.ncols()
        )));
    }
    if m.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "observation matrix has {} rows, value vector length {}",
            m.nrows(),
            y.len()
        )));
    }
    if m.nrows() == 0 {
        return Ok(prior.clone());
    }
    let s0 = prior.dense_covariance();
    let cross = &s0 * m.transpose(); // n x k
    let gram = m * &cross; // k x k, symmetric PSD
    let gram_pinv = pseudo_inverse(&gram, DEFAULT_RANK_TOL)?;
    let x0 = DVector::from_column_slice(&prior.mean);
    let innovation = DVector::from_column_slice(y) - m * &x0;
    let mean = &x0 + &cross * (&gram_pinv * innovation);
    let cov = &s0 - &cross * gram_pinv * cross.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(Gaussian {
        mean: mean.as_slice().to_vec(),
        cov: Covariance::Dense(cov),
    })
}

/// `E ||X - mean||_A^2 = trace(A Sigma)` for `X ~ N(mean, Sigma)`.
///
/// Factored covariances cost one operator application per column; dense ones
/// are an oracle-scale path.
pub fn trace_quadratic(a: &SpdOperator, g: &Gaussian) -> f64 {
    match &g.cov {
        Covariance::Factored(f) => {
            let n = g.dim();
            let data = f.as_slice();
            let mut acc = 0.0;
            for j in 0..f.ncols() {
                let col = &data[j * n..(j + 1) * n];
                acc += dot(col, &a.apply(col));
            }
            acc
        }
        Covariance::Dense(s) => {
            let n = g.dim();
            let mut acc = 0.0;
            let mut col = vec![0.0; n];
            for j in 0..n {
                for i in 0..n {
                    col[i] = s[(i, j)];
                }
                acc += a.apply(&col)[j];
            }
            acc
        }
    }
}

/// `Var ||X - mean||_A^2 = 2 trace((A Sigma)^2)`, computed as
/// `2 ||F^T A F||_F^2` in the factored case.
pub fn variance_quadratic(a: &SpdOperator, g: &Gaussian) -> f64 {
    match &g.cov {
        Covariance::Factored(f) => {
            let n = g.dim();
            let d = f.ncols();
            let data = f.as_slice();
            let mut gram = vec![0.0; d * d];
            for j in 0..d {
                let col = &data[j * n..(j + 1) * n];
                let acol = a.apply(col);
                for i in 0..d {
                    gram[j * d + i] = dot(&data[i * n..(i + 1) * n], &acol);
                }
            }
            2.0 * gram.iter().map(|v| v * v).sum::<f64>()
        }
        Covariance::Dense(s) => {
            let ad = a.to_dense();
            let t = ad * s;
            let n = t.nrows();
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += t[(i, j)] * t[(j, i)];
                }
            }
            2.0 * acc
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eig::symmetric_eigen;
    use crate::linalg::vec::norm2;

    #[test]
    fn zero_covariance_samples_equal_mean() {
        let g = Gaussian::point(vec![1.0, -2.0]);
        for s in g.sample(5, 9).unwrap() {
            assert_eq!(s, vec![1.0, -2.0]);
        }
    }

    #[test]
    fn empirical_covariance_converges() {
        let g = Gaussian::new_dense(vec![0.0, 0.0], DMatrix::identity(2, 2)).unwrap();
        let count = 100_000;
        let samples = g.sample(count, 4).unwrap();
        let mut cov = [[0.0f64; 2]; 2];
        for s in &samples {
            for i in 0..2 {
                for j in 0..2 {
                    cov[i][j] += s[i] * s[j];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (cov[i][j] / count as f64 - want).abs() < 0.05,
                    "entry ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn rank_one_samples_stay_on_line() {
        let f = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let g = Gaussian::new_factored(vec![0.5, -0.5], f).unwrap();
        for s in g.sample(50, 7).unwrap() {
            // collinearity with (1,1) through the mean
            let t = s[0] - 0.5;
            let residual = (s[1] + 0.5) - t;
            assert!(residual.abs() <= 1e-12 * norm2(&s).max(1.0));
        }
    }

    #[test]
    fn batch_sampling_deterministic() {
        let g = Gaussian::new_dense(vec![0.0; 3], DMatrix::identity(3, 3)).unwrap();
        let a = g.sample(10, 3).unwrap();
        let b = g.sample(10, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_observation_collapses_posterior() {
        let g = Gaussian::new_dense(vec![0.0; 3], DMatrix::identity(3, 3)).unwrap();
        let m = DMatrix::identity(3, 3);
        let y = [1.0, 2.0, 3.0];
        let post = condition_on_linear(&g, &m, &y).unwrap();
        for i in 0..3 {
            assert!((post.mean[i] - y[i]).abs() < 1e-12);
        }
        assert!(post.dense_covariance().abs().max() < 1e-12);
    }

    #[test]
    fn empty_observation_returns_prior() {
        let g = Gaussian::new_dense(vec![1.0, 2.0], DMatrix::identity(2, 2) * 3.0).unwrap();
        let m = DMatrix::zeros(0, 2);
        let post = condition_on_linear(&g, &m, &[]).unwrap();
        assert_eq!(post.mean, g.mean);
        assert!((post.dense_covariance() - g.dense_covariance()).abs().max() < 1e-15);
    }

    #[test]
    fn conditioned_directions_have_no_variance() {
        use rand::Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let n = 8;
        let g0 = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let s0 = &g0 * g0.transpose() + DMatrix::identity(n, n) * 0.1;
        let prior = Gaussian::new_dense(vec![0.0; n], s0).unwrap();
        let m = DMatrix::from_fn(3, n, |_, _| rng.random::<f64>() - 0.5);
        let y = [0.3, -0.1, 0.7];
        let post = condition_on_linear(&prior, &m, &y).unwrap();
        let proj = &m * post.dense_covariance() * m.transpose();
        assert!(proj.abs().max() <= 1e-10 * prior.dense_covariance().abs().max());
        // posterior covariance stays PSD
        let (vals, _) = symmetric_eigen(&post.dense_covariance()).unwrap();
        assert!(vals[0] >= -1e-10 * vals[vals.len() - 1].abs());
    }

    #[test]
    fn trace_quadratic_identity() {
        let a = SpdOperator::identity(3);
        let g = Gaussian::new_dense(vec![0.0; 3], DMatrix::identity(3, 3)).unwrap();
        assert!((trace_quadratic(&a, &g) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn trace_quadratic_rank_one_is_quadratic_form() {
        let a = SpdOperator::from_diagonal(&[2.0, 5.0]);
        let f = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let g = Gaussian::new_factored(vec![0.0; 2], f).unwrap();
        // f^T A f = 2 + 20
        assert!((trace_quadratic(&a, &g) - 22.0).abs() < 1e-12);
    }

    #[test]
    fn variance_quadratic_matches_dense_oracle() {
        use rand::Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let n = 10;
        let f = DMatrix::from_fn(n, 3, |_, _| rng.random::<f64>() - 0.5);
        let gd = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let a_dense = &gd * gd.transpose() + DMatrix::identity(n, n);
        let a = SpdOperator::Dense(a_dense);
        let factored = Gaussian::new_factored(vec![0.0; n], f.clone()).unwrap();
        let dense = Gaussian::new_dense(vec![0.0; n], &f * f.transpose()).unwrap();
        let vf = variance_quadratic(&a, &factored);
        let vd = variance_quadratic(&a, &dense);
        assert!((vf - vd).abs() <= 1e-10 * vf.abs().max(1.0));
    }

    #[test]
    fn variance_edge_cases() {
        let a = SpdOperator::identity(4);
        let zero = Gaussian::point(vec![0.0; 4]);
        assert_eq!(variance_quadratic(&a, &zero), 0.0);
        let iso = Gaussian::new_dense(vec![0.0; 4], DMatrix::identity(4, 4)).unwrap();
        assert!((variance_quadratic(&a, &iso) - 8.0).abs() < 1e-12);
    }
}
