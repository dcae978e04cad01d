use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Gaussian noise model stored as the square-root information matrix `W`,
/// with `WᵀW = Σ⁻¹`, so that `‖W·e‖² = eᵀ·Σ⁻¹·e`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    sqrt_info: DMatrix<f64>,
}

impl NoiseModel {
    pub fn from_covariance(cov: &DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() || cov.nrows() == 0 {
            return Err(Error::NotPositiveDefinite(format!(
                "covariance has shape {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let asym = (cov - cov.transpose()).abs().max();
        let scale = cov.abs().max().max(f64::MIN_POSITIVE);
        if asym > 1e-9 * scale || cov.iter().any(|x| !x.is_finite()) {
            return Err(Error::NotPositiveDefinite("covariance is not symmetric".into()));
        }
        let sym = (cov + cov.transpose()) * 0.5;
        let chol = sym
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
        let n = cov.nrows();
        let l = chol.l();
        let sqrt_info = l
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
        Ok(NoiseModel { sqrt_info })
    }

    pub fn diagonal(sigmas: &[f64]) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::NotPositiveDefinite("empty sigma list".into()));
        }
        if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::NotPositiveDefinite(format!("sigma {s} is not positive")));
        }
        let diag = DVector::from_iterator(sigmas.len(), sigmas.iter().map(|s| 1.0 / s));
        Ok(NoiseModel {
            sqrt_info: DMatrix::from_diagonal(&diag),
        })
    }

    pub fn isotropic(dim: usize, sigma: f64) -> Result<Self> {
        Self::diagonal(&vec![sigma; dim])
    }

    pub fn dim(&self) -> usize {
        self.sqrt_info.nrows()
    }

    pub fn sqrt_information(&self) -> &DMatrix<f64> {
        &self.sqrt_info
    }

    pub fn information(&self) -> DMatrix<f64> {
        self.sqrt_info.transpose() * &self.sqrt_info
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.dim();
        let w_inv = self
            .sqrt_info
            .clone()
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .unwrap_or_else(|| DMatrix::identity(n, n));
        &w_inv * w_inv.transpose()
    }

    pub fn whiten(&self, e: &DVector<f64>) -> DVector<f64> {
        &self.sqrt_info * e
    }

    pub fn whiten_matrix(&self, j: &DMatrix<f64>) -> DMatrix<f64> {
        &self.sqrt_info * j
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mahalanobis_matches_inverse_covariance() {
        let cov = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let n = NoiseModel::from_covariance(&cov).unwrap();
        let e = DVector::from_column_slice(&[0.3, -1.0, 2.0]);
        let direct = (e.transpose() * cov.clone().try_inverse().unwrap() * &e)[0];
        assert!((n.whiten(&e).norm_squared() - direct).abs() < 1e-12);
        assert!((n.covariance() - cov).abs().max() < 1e-12);
    }

    #[test]
    fn doubling_covariance_scales_whitened_norm() {
        let cov = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.1, 0.2, 0.3]));
        let e = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let a = NoiseModel::from_covariance(&cov).unwrap().whiten(&e).norm();
        let b = NoiseModel::from_covariance(&(cov * 2.0))
            .unwrap()
            .whiten(&e)
            .norm();
        assert!((b / a - 1.0 / 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_pd() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            NoiseModel::from_covariance(&cov),
            Err(Error::NotPositiveDefinite(_))
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(NoiseModel::from_covariance(&asym).is_err());
        assert!(NoiseModel::diagonal(&[1.0, 0.0]).is_err());
    }
}
