//! Prescribed eigenvalue distributions for synthetic test matrices.

use crate::error::{Error, Result};

/// Geometrically spaced eigenvalues `d_i = kappa^{(i-1)/(n-1)}`, increasing
/// from 1 to `kappa`.
pub fn spectrum_geometric(n: usize, kappa: f64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "geometric spectrum needs n >= 2, got {n}"
        )));
    }
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "geometric spectrum needs kappa > 0, got {kappa}"
        )));
    }
    Ok((0..n)
        .map(|i| kappa.powf(i as f64 / (n - 1) as f64))
        .collect())
}

/// Strakos-type eigenvalues
/// `d_i = lam_min + (i-1)/(n-1) * (lam_max - lam_min) * rho^(n-i)`,
/// accumulating near `lam_min` for `rho < 1`.
pub fn spectrum_strakos(n: usize, lam_min: f64, lam_max: f64, rho: f64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "strakos spectrum needs n >= 2, got {n}"
        )));
    }
    if !(lam_min > 0.0 && lam_min < lam_max) {
        return Err(Error::InvalidParameter(format!(
            "strakos spectrum needs 0 < lam_min < lam_max, got [{lam_min}, {lam_max}]"
        )));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "strakos spectrum needs 0 < rho <= 1, got {rho}"
        )));
    }
    Ok((1..=n)
        .map(|i| {
            lam_min
                + ((i - 1) as f64 / (n - 1) as f64)
                    * (lam_max - lam_min)
                    * rho.powi((n - i) as i32)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_endpoints_exact() {
        let d = spectrum_geometric(100, 1e3).unwrap();
        assert_eq!(d[0], 1.0);
        assert_eq!(d[99], 1000.0);
        assert!(d.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn geometric_two_point() {
        let d = spectrum_geometric(2, 4.0).unwrap();
        assert_eq!(d, vec![1.0, 4.0]);
    }

    #[test]
    fn strakos_endpoints_exact() {
        let d = spectrum_strakos(48, 0.1, 1e4, 0.9).unwrap();
        assert_eq!(d[0], 0.1);
        assert_eq!(d[47], 1e4);
        assert!(d.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn strakos_rho_one_is_linear() {
        let d = spectrum_strakos(2, 1.0, 2.0, 1.0).unwrap();
        assert_eq!(d, vec![1.0, 2.0]);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(spectrum_geometric(1, 10.0).is_err());
        assert!(spectrum_geometric(4, 0.0).is_err());
        assert!(spectrum_strakos(4, 2.0, 1.0, 0.9).is_err());
        assert!(spectrum_strakos(4, 0.1, 1.0, 0.0).is_err());
        assert!(spectrum_strakos(4, 0.1, 1.0, 1.5).is_err());
    }
}
