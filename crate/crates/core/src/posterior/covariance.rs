use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::PosteriorParams;
use crate::error::{BasilError, Result};
use crate::math;

/// `Σ = LLᵀ + δI` with `L` of size `p × k`.
///
/// Determinants and inverse quadratic forms go through the `k × k` capacitance
/// matrix `K = I + LᵀL/δ`: `log|Σ| = p log δ + log|K|` and
/// `yᵀΣ⁻¹y = (yᵀy − wᵀK⁻¹w/δ)/δ` with `w = Lᵀy`.
#[derive(Debug, Clone)]
pub struct LowRankCovariance {
    loadings: DMatrix<f64>,
    noise_var: f64,
    capacitance: Cholesky<f64, Dyn>,
}

impl LowRankCovariance {
    pub fn new(loadings: DMatrix<f64>, noise_var: f64) -> Result<Self> {
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(BasilError::InvalidArgument(alloc::format!(
                "noise variance must be positive, got {noise_var}"
            )));
        }
        if loadings.iter().any(|v| !v.is_finite()) {
            return Err(BasilError::InvalidArgument("loadings are not finite".into()));
        }
        let k = loadings.ncols();
        let mut cap = loadings.tr_mul(&loadings) / noise_var;
        for i in 0..k {
            cap[(i, i)] += 1.0;
        }
        let capacitance = Cholesky::new(cap)
            .ok_or_else(|| BasilError::Numerical("capacitance matrix is not positive definite".into()))?;
        Ok(LowRankCovariance { loadings, noise_var, capacitance })
    }

    pub fn dim(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn rank(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// `log |Σ|`.
    pub fn log_det(&self) -> f64 {
        let l = self.capacitance.l_dirty();
        let log_det_cap: f64 = (0..self.rank()).map(|i| 2.0 * math::ln(l[(i, i)])).sum();
        self.dim() as f64 * math::ln(self.noise_var) + log_det_cap
    }

    /// `yᵀ Σ⁻¹ y`.
    pub fn quad_form(&self, y: &DVector<f64>) -> Result<f64> {
        if y.len() != self.dim() {
            return Err(BasilError::DimensionMismatch(alloc::format!(
                "vector of length {} for a {}-dimensional covariance",
                y.len(),
                self.dim()
            )));
        }
        let w = self.loadings.tr_mul(y);
        let solved = self.capacitance.solve(&w);
        Ok((y.norm_squared() - w.dot(&solved) / self.noise_var) / self.noise_var)
    }

    /// `yᵢᵀ Σ⁻¹ yᵢ` for every row `yᵢ` of `y`.
    pub fn row_quad_forms(&self, y: &DMatrix<f64>) -> Result<Vec<f64>> {
        if y.ncols() != self.dim() {
            return Err(BasilError::DimensionMismatch(alloc::format!(
                "{} columns for a {}-dimensional covariance",
                y.ncols(),
                self.dim()
            )));
        }
        let w = (y * &self.loadings).transpose();
        let solved = self.capacitance.solve(&w);
        Ok((0..y.nrows())
            .map(|i| {
                let corr = w.column(i).dot(&solved.column(i));
                (y.row(i).norm_squared() - corr / self.noise_var) / self.noise_var
            })
            .collect())
    }

    /// Sum of Gaussian log-densities `N(0, Σ)` over the rows of `y`.
    pub fn log_density_sum(&self, y: &DMatrix<f64>) -> Result<f64> {
        let quad: f64 = self.row_quad_forms(y)?.iter().sum();
        let nt = y.nrows() as f64;
        let p = self.dim() as f64;
        Ok(-0.5 * nt * p * math::ln(math::TWO_PI) - 0.5 * nt * self.log_det() - 0.5 * quad)
    }

    /// Entry `(f, g)` of `Σ`.
    pub fn entry(&self, f: usize, g: usize) -> f64 {
        let v = self.loadings.row(f).dot(&self.loadings.row(g));
        if f == g {
            v + self.noise_var
        } else {
            v
        }
    }

    /// `Σ` restricted to `rows` (in both dimensions).
    pub fn submatrix(&self, rows: &[usize]) -> DMatrix<f64> {
        let l = self.loadings.select_rows(rows);
        let mut s = &l * l.transpose();
        for i in 0..rows.len() {
            s[(i, i)] += self.noise_var;
        }
        s
    }

    /// Dense `p × p` matrix; for small `p` only.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut s = &self.loadings * self.loadings.transpose();
        for i in 0..self.dim() {
            s[(i, i)] += self.noise_var;
        }
        s
    }
}

/// Posterior mean of the covariance in the low-rank-plus-isotropic form
/// `Λ̄Λ̄ᵀ + δ̄I` with `δ̄ = E[σ²]·{1 + ρ²(a_C + a_N)}`.
pub fn covariance_posterior_mean(params: &PosteriorParams) -> Result<LowRankCovariance> {
    let sigma_mean = params.sigma_sq_mean()?;
    let rho_sq = params.rho * params.rho;
    let delta = sigma_mean * (1.0 + rho_sq * (params.shrink_c + params.shrink_n));
    LowRankCovariance::new(params.lambda_bar.clone(), delta)
}

/// Exact expectation of `ΛΛᵀ + σ²I` under the draw distribution, restricted to
/// `rows`:
///
/// `Λ̄Λ̄ᵀ + E[σ²]·ρ²k·(a_C P + a_N (I − P)) + E[σ²]·I`
///
/// where `ρ` is replaced by 1 when `coverage_corrected` is false.
pub fn expected_covariance(params: &PosteriorParams, rows: &[usize], coverage_corrected: bool) -> Result<DMatrix<f64>> {
    let sigma_mean = params.sigma_sq_mean()?;
    let rho_sq = if coverage_corrected { params.rho * params.rho } else { 1.0 };
    let scale = sigma_mean * rho_sq * params.n_factors() as f64;
    let l = params.lambda_bar.select_rows(rows);
    let b = params.basis.select_rows(rows);
    let mut out = &l * l.transpose() + (&b * b.transpose()) * (scale * (params.shrink_c - params.shrink_n));
    for i in 0..rows.len() {
        out[(i, i)] += sigma_mean + scale * params.shrink_n;
    }
    Ok(out)
}
