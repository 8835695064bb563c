use nalgebra::{DMatrix, DVector};

use super::PosteriorDraws;
use crate::error::{BasilError, Result};
use crate::par;

/// Mean and covariance of a Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

fn check(y: &DVector<f64>, lambda: &DMatrix<f64>) -> Result<()> {
    if y.len() != lambda.nrows() {
        return Err(BasilError::DimensionMismatch(alloc::format!(
            "observation of length {} for {} loading rows",
            y.len(),
            lambda.nrows()
        )));
    }
    Ok(())
}

// Cholesky factor of ΛᵀΛ + σ²I and Λᵀy.
fn normal_equations(
    y: &DVector<f64>,
    lambda: &DMatrix<f64>,
    sigma_sq: f64,
) -> Result<(nalgebra::Cholesky<f64, nalgebra::Dyn>, DVector<f64>)> {
    let mut g = lambda.tr_mul(lambda);
    for i in 0..g.nrows() {
        g[(i, i)] += sigma_sq;
    }
    let chol =
        g.cholesky().ok_or_else(|| BasilError::Numerical("latent-factor system is not positive definite".into()))?;
    Ok((chol, lambda.tr_mul(y)))
}

/// Posterior of the latent factors of one sample `y` given loadings and noise
/// variance: mean `(ΛᵀΛ + σ²I)⁻¹Λᵀy`, covariance `(ΛᵀΛ/σ² + I)⁻¹`.
pub fn latent_factor_posterior(y: &DVector<f64>, lambda: &DMatrix<f64>, sigma_sq: f64) -> Result<GaussianSummary> {
    check(y, lambda)?;
    if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
        return Err(BasilError::InvalidArgument("sigma^2 must be positive".into()));
    }
    let (chol, rhs) = normal_equations(y, lambda, sigma_sq)?;
    let mean = chol.solve(&rhs);
    let covariance = chol.inverse() * sigma_sq;
    Ok(GaussianSummary { mean, covariance })
}

/// Monte Carlo posterior mean of the latent factors: the conditional mean
/// averaged over the loading and noise draws.
pub fn latent_factor_posterior_mean_mc(y: &DVector<f64>, draws: &PosteriorDraws) -> Result<DVector<f64>> {
    check(y, &draws.params().lambda_bar)?;
    let means = par::map_range(draws.n_draws(), |s| {
        let lambda = draws.draw(s);
        normal_equations(y, &lambda, draws.sigma_sq()[s]).map(|(chol, rhs)| chol.solve(&rhs))
    });
    let mut acc = DVector::zeros(draws.params().n_factors());
    for m in means {
        acc += m?;
    }
    Ok(acc / draws.n_draws() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::{sample_posterior, PosteriorParams, SampleOptions};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = crate::rng::stream(seed, &[95]);
        DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn zero_loadings_recover_prior() {
        let y = DVector::from_element(5, 2.0);
        let s = latent_factor_posterior(&y, &DMatrix::zeros(5, 3), 0.7).unwrap();
        assert_eq!(s.mean, DVector::zeros(3));
        assert!((s.covariance - DMatrix::identity(3, 3)).amax() < 1e-15);
    }

    #[test]
    fn orthogonal_loadings() {
        // Columns with squared norm c = 4.
        let mut lam = DMatrix::zeros(6, 2);
        for i in 0..4 {
            lam[(i, 0)] = 1.0;
        }
        lam[(4, 1)] = 2.0f64.sqrt();
        lam[(5, 1)] = 2.0f64.sqrt();
        let y = DVector::from_vec(alloc::vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let s = latent_factor_posterior(&y, &lam, 1.0).unwrap();
        let expected = lam.tr_mul(&y) / 5.0;
        assert!((s.mean - expected).amax() < 1e-14);
        assert!((s.covariance - DMatrix::identity(2, 2) / 5.0).amax() < 1e-15);
    }

    #[test]
    fn matches_dense_computation() {
        // Oracle: the p × p form Λᵀ(ΛΛᵀ + σ²I)⁻¹y and I − Λᵀ(ΛΛᵀ + σ²I)⁻¹Λ.
        let lam = gaussian(40, 3, 1);
        let y = gaussian(40, 1, 2).column(0).into_owned();
        let s2 = 0.8;
        let mut big = &lam * lam.transpose();
        for i in 0..40 {
            big[(i, i)] += s2;
        }
        let inv = big.try_inverse().unwrap();
        let mean = lam.transpose() * &inv * &y;
        let cov = DMatrix::identity(3, 3) - lam.transpose() * &inv * &lam;
        let s = latent_factor_posterior(&y, &lam, s2).unwrap();
        assert!((s.mean - mean).amax() < 1e-10);
        assert!((s.covariance - cov).amax() < 1e-10);
    }

    #[test]
    fn single_draw_mc_equals_plugin() {
        let params = PosteriorParams {
            lambda_bar: gaussian(10, 2, 3),
            basis: DMatrix::from_fn(10, 1, |i, _| if i == 0 { 1.0 } else { 0.0 }),
            shrink_c: 0.01,
            shrink_n: 0.01,
            rho: 1.2,
            v_n: 30.0,
            sigma_n_sq: 1.0,
        };
        let draws = sample_posterior(&params, &SampleOptions::new(1, 4)).unwrap();
        let y = gaussian(10, 1, 5).column(0).into_owned();
        let mc = latent_factor_posterior_mean_mc(&y, &draws).unwrap();
        let plug = latent_factor_posterior(&y, &draws.draw(0), draws.sigma_sq()[0]).unwrap();
        assert!((mc - plug.mean).amax() < 1e-14);
    }
}
