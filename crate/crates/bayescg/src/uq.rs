//! Posterior-based error estimation: the sampled squared-A-norm statistic,
//! its Gaussian-approximation credible interval, and relative-accuracy
//! scoring.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::krylov::KrylovFactors;
use crate::linalg::SpdOperator;

/// The credible interval approximates a generalized chi-squared sampling
/// distribution by a Gaussian; emitted in run manifests.
pub const ESTIMATE_METHOD: &str = "gaussian-approximation";

/// Sample count below which batch quadratic-form sampling stays serial.
const PAR_MIN_SAMPLES: usize = 512;

/// Analytic error estimate from a factored posterior: mean
/// `mu = sum phi_i`, variance `sigma^2 = 2 sum phi_i^2`, and the one-sided
/// upper credible bound `S(alpha) = mu + h(alpha) sigma`.
#[derive(Debug, Clone, Copy)]
pub struct ErrorEstimate {
    pub mu: f64,
    pub sigma_sq: f64,
    /// Credibility level in percent.
    pub alpha: f64,
    pub s_alpha: f64,
    /// Iteration the estimate refers to.
    pub iteration: usize,
    /// Number of delay iterations backing the estimate.
    pub delay: usize,
}

/// Empirical counterpart built from samples of the squared A-norm statistic.
#[derive(Debug, Clone)]
pub struct EmpiricalEstimate {
    pub samples: Vec<f64>,
    pub mu_hat: f64,
    pub s_hat_alpha: f64,
    pub alpha: f64,
}

impl EmpiricalEstimate {
    /// Mean and one-sided bound with the unbiased (N-1) standard deviation.
    pub fn from_samples(samples: Vec<f64>, alpha: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 samples for an empirical interval, got {}",
                samples.len()
            )));
        }
        check_alpha(alpha)?;
        let n = samples.len() as f64;
        let mu_hat = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mu_hat).powi(2)).sum::<f64>() / (n - 1.0);
        let s_hat_alpha = mu_hat + h_factor(alpha) * var.sqrt();
        Ok(Self { samples, mu_hat, s_hat_alpha, alpha })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 100.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 100), got {alpha}"
        )));
    }
    Ok(())
}

/// `h(alpha) = sqrt(2) * erf^{-1}(alpha / 100)`; `h(95) ~= 1.96`.
pub fn h_factor(alpha: f64) -> f64 {
    std::f64::consts::SQRT_2 * erf_inverse(alpha / 100.0).expect("alpha validated by callers")
}

/// Analytic one-sided credible interval for the posterior error statistic.
pub fn credible_interval(factors: &KrylovFactors, alpha: f64) -> Result<ErrorEstimate> {
    check_alpha(alpha)?;
    let mu = factors.trace_estimate();
    let sigma_sq = factors.variance_estimate();
    Ok(ErrorEstimate {
        mu,
        sigma_sq,
        alpha,
        s_alpha: mu + h_factor(alpha) * sigma_sq.sqrt(),
        iteration: factors.start.saturating_sub(1),
        delay: factors.rank(),
    })
}

/// Draws `count` samples of `||X - x_m||_A^2` for `X ~ N(x_m, V Phi V^T)`.
///
/// Each sample reduces to `z^T G z` with `z ~ N(0, I_d)` and the d-by-d Gram
/// matrix `G = sqrt(Phi) V^T A V sqrt(Phi)`, so no n-dimensional work happens
/// per sample. Sample `i` uses RNG stream `i`, making batches reproducible
/// under any thread count.
pub fn s_statistic_samples(
    a: &SpdOperator,
    factors: &KrylovFactors,
    count: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if factors.dim() != a.dim() {
        return Err(Error::DimensionMismatch(format!(
            "factors dimension {} vs operator dimension {}",
            factors.dim(),
            a.dim()
        )));
    }
    let gram = factors.gram(a);
    Ok(sample_quadratic_forms(&gram, count, seed))
}

/// Samples `z^T G z` for standard normal `z`; `G` must be symmetric.
pub fn sample_quadratic_forms(gram: &nalgebra::DMatrix<f64>, count: usize, seed: u64) -> Vec<f64> {
    let d = gram.nrows();
    let draw = |i: usize| -> f64 {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut acc = 0.0;
        for j in 0..d {
            let mut gz = 0.0;
            for k in 0..d {
                gz += gram[(j, k)] * z[k];
            }
            acc += z[j] * gz;
        }
        acc
    };
    #[cfg(feature = "parallel")]
    if count >= PAR_MIN_SAMPLES && d > 0 {
        return (0..count).into_par_iter().map(draw).collect();
    }
    (0..count).map(draw).collect()
}

/// Relative accuracy `rho(E) = |E - err_sq| / min(E, err_sq)`; symmetric in
/// over- and underestimation.
pub fn relative_accuracy(estimate: f64, true_err_sq: f64) -> Result<f64> {
    if !(estimate > 0.0) || !(true_err_sq > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "relative accuracy needs positive inputs, got {estimate} and {true_err_sq}"
        )));
    }
    Ok((estimate - true_err_sq).abs() / estimate.min(true_err_sq))
}

/// Error function, accurate to roughly 1e-14: Maclaurin series for small
/// arguments, Lentz-evaluated continued fraction for the complement above.
pub fn erf(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 2.0 {
        erf_series(x)
    } else if ax < 6.5 {
        let c = erfc_continued_fraction(ax);
        if x > 0.0 {
            1.0 - c
        } else {
            c - 1.0
        }
    } else {
        1.0_f64.copysign(x)
    }
}

pub fn erfc(x: f64) -> f64 {
    1.0 - erf(x)
}

fn erf_series(x: f64) -> f64 {
    // erf(x) = 2/sqrt(pi) * sum_k (-1)^k x^(2k+1) / (k! (2k+1))
    let two_over_sqrt_pi = 2.0 / std::f64::consts::PI.sqrt();
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for k in 1..200 {
        term *= -x2 / k as f64;
        let contrib = term / (2 * k + 1) as f64;
        sum += contrib;
        if contrib.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    two_over_sqrt_pi * sum
}

fn erfc_continued_fraction(x: f64) -> f64 {
    // erfc(x) = exp(-x^2)/sqrt(pi) / K with the continued fraction
    // K = x + 1/(2x + 2/(x + 3/(2x + 4/(x + ...)))),
    // evaluated by the modified Lentz algorithm. Only called for x >= 2.
    let tiny = 1e-300;
    let mut f = x;
    let mut c = f;
    let mut d = 0.0;
    for n in 1..300 {
        let a_n = n as f64;
        let b_n = if n % 2 == 1 { 2.0 * x } else { x };
        d = b_n + a_n * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b_n + a_n / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / std::f64::consts::PI.sqrt() / f
}

/// Inverse error function on (-1, 1): initial rational estimate refined by
/// Newton iterations on `erf`, giving `erf(erf_inverse(p)) = p` to about
/// 1e-12.
pub fn erf_inverse(p: f64) -> Result<f64> {
    if !(p > -1.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "erf_inverse needs |p| < 1, got {p}"
        )));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    // Winitzki's approximation as the starting point
    let a = 0.147;
    let ln1p2 = (1.0 - p * p).ln();
    let term = 2.0 / (std::f64::consts::PI * a) + ln1p2 / 2.0;
    let mut z = (term * term - ln1p2 / a).sqrt();
    z = (z - term).sqrt().copysign(p);
    // Newton: z -= (erf(z) - p) / erf'(z), erf'(z) = 2/sqrt(pi) exp(-z^2)
    let two_over_sqrt_pi = 2.0 / std::f64::consts::PI.sqrt();
    for _ in 0..6 {
        let err = erf(z) - p;
        let deriv = two_over_sqrt_pi * (-z * z).exp();
        let step = err / deriv;
        z -= step;
        if step.abs() <= 1e-16 * z.abs().max(1e-300) {
            break;
        }
    }
    Ok(z)
}
