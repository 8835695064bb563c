//! Closed-form posterior means, independent posterior draws and the functionals
//! built on them.

pub(crate) mod correlation;
mod covariance;
mod draws;
mod fit;
mod latent;

pub use correlation::{correlation_intervals, CorrelationSummary, DEFAULT_SUBSET_CAP};
pub use covariance::{covariance_posterior_mean, expected_covariance, LowRankCovariance};
pub use draws::{sample_posterior, PosteriorDraws, SampleOptions};
pub use fit::{fit, FactorModelFit, FitConfig, FitDiagnostics, KChoice};
pub use latent::{latent_factor_posterior, latent_factor_posterior_mean_mc, GaussianSummary};

use nalgebra::DMatrix;

use crate::error::{BasilError, Result};

/// `1 / (n + 1/τ²)`, the posterior variance scale of a loading block.
///
/// `τ² = 0` gives 0 (the block collapses to zero) and `τ² = ∞` gives `1/n`.
pub fn shrinkage_factor(n: usize, tau_sq: f64) -> f64 {
    1.0 / (n as f64 + 1.0 / tau_sq)
}

/// Everything needed to draw from the posterior of `(Λ, σ²)` and to form
/// covariance summaries; a fit reduces to this, and it can be rebuilt from
/// saved artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorParams {
    /// `p × k` posterior mean of the loadings.
    pub lambda_bar: DMatrix<f64>,
    /// `p × r` orthonormal basis of the gene-set span.
    pub basis: DMatrix<f64>,
    /// Posterior variance scale of the gene-set block, `1/(n + τ_Γ⁻²)`.
    pub shrink_c: f64,
    /// Posterior variance scale of the residual block, `1/(n + τ_Ψ⁻²)`.
    pub shrink_n: f64,
    pub rho: f64,
    pub v_n: f64,
    pub sigma_n_sq: f64,
}

impl PosteriorParams {
    pub fn validate(&self) -> Result<()> {
        if self.basis.nrows() != self.lambda_bar.nrows() {
            return Err(BasilError::DimensionMismatch(alloc::format!(
                "basis has {} rows, loadings {}",
                self.basis.nrows(),
                self.lambda_bar.nrows()
            )));
        }
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.shrink_c) || !ok(self.shrink_n) || !ok(self.rho) {
            return Err(BasilError::InvalidArgument("shrinkage and rho must be finite and >= 0".into()));
        }
        if !(self.v_n > 0.0 && self.sigma_n_sq > 0.0 && self.sigma_n_sq.is_finite()) {
            return Err(BasilError::InvalidArgument("v_n and sigma_n_sq must be positive".into()));
        }
        if self.lambda_bar.iter().any(|v| !v.is_finite()) {
            return Err(BasilError::InvalidArgument("loading mean is not finite".into()));
        }
        Ok(())
    }

    pub fn n_genes(&self) -> usize {
        self.lambda_bar.nrows()
    }

    pub fn n_factors(&self) -> usize {
        self.lambda_bar.ncols()
    }

    pub fn subspace_dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Posterior mean of `σ²`, `v_n σ_n² / (v_n − 2)`.
    pub fn sigma_sq_mean(&self) -> Result<f64> {
        if !(self.v_n > 2.0) {
            return Err(BasilError::UndefinedMean { v_n: self.v_n });
        }
        Ok(self.v_n * self.sigma_n_sq / (self.v_n - 2.0))
    }
}
