use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::PosteriorParams;
use crate::error::{BasilError, Result};
use crate::math;
use crate::par;
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOptions {
    pub n_draws: usize,
    pub seed: u64,
    /// Inflate the loading variance by `rho²`.
    pub coverage_corrected: bool,
    /// Hold `σ²` at this value instead of drawing it (conditional sampling).
    pub fixed_sigma_sq: Option<f64>,
}

impl SampleOptions {
    pub fn new(n_draws: usize, seed: u64) -> Self {
        SampleOptions { n_draws, seed, coverage_corrected: true, fixed_sigma_sq: None }
    }
}

/// Independent posterior draws of `(Λ, σ²)`, stored in factorized form.
///
/// Only the `σ²` draws are kept; each loading draw is regenerated on demand from
/// its own random streams, keyed by `(seed, draw, column)`:
///
/// `Λ⁽ˢ⁾ = Λ̄ + σ⁽ˢ⁾ρ (√a_C · B Z_C + √a_N · (Z − B BᵀZ))`
///
/// with `Z_C` (`r × k`) and `Z` (`p × k`) standard normal. Projecting an isotropic
/// `p`-dimensional Gaussian onto the complement of `span(B)` has the same law as
/// drawing in an explicit orthonormal basis of that complement.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    params: PosteriorParams,
    seed: u64,
    coverage_corrected: bool,
    sigma_sq: Vec<f64>,
}

/// Draws `n_draws` independent samples from the posterior.
pub fn sample_posterior(params: &PosteriorParams, options: &SampleOptions) -> Result<PosteriorDraws> {
    params.validate()?;
    if options.n_draws == 0 {
        return Err(BasilError::InvalidArgument("n_draws must be at least 1".into()));
    }
    let sigma_sq = match options.fixed_sigma_sq {
        Some(s) => {
            if !(s > 0.0 && s.is_finite()) {
                return Err(BasilError::InvalidArgument("fixed sigma^2 must be positive".into()));
            }
            alloc::vec![s; options.n_draws]
        }
        None => {
            // σ² ~ IG(v_n/2, v_n σ_n²/2), i.e. 1/σ² ~ Gamma(shape v_n/2, scale 2/(v_n σ_n²)).
            let gamma = Gamma::new(0.5 * params.v_n, 2.0 / (params.v_n * params.sigma_n_sq))
                .map_err(|e| BasilError::Numerical(alloc::format!("{e}")))?;
            let seed = options.seed;
            par::map_range(options.n_draws, |s| {
                let mut rng = rng::stream(seed, &[tag::SIGMA_DRAW, s as u64]);
                1.0 / gamma.sample(&mut rng)
            })
        }
    };
    Ok(PosteriorDraws {
        params: params.clone(),
        seed: options.seed,
        coverage_corrected: options.coverage_corrected,
        sigma_sq,
    })
}

impl PosteriorDraws {
    pub fn n_draws(&self) -> usize {
        self.sigma_sq.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn coverage_corrected(&self) -> bool {
        self.coverage_corrected
    }

    pub fn sigma_sq(&self) -> &[f64] {
        &self.sigma_sq
    }

    pub fn params(&self) -> &PosteriorParams {
        &self.params
    }

    /// Variance inflation actually applied: `rho` or 1.
    pub fn inflation(&self) -> f64 {
        if self.coverage_corrected {
            self.params.rho
        } else {
            1.0
        }
    }

    // Standard normals of draw `s`: Z_C (r × k) and Z (p × k).
    fn normals(&self, s: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let (p, k, r) = (self.params.n_genes(), self.params.n_factors(), self.params.subspace_dim());
        let mut z_c = DMatrix::zeros(r, k);
        let mut z = DMatrix::zeros(p, k);
        for h in 0..k {
            let mut rng = rng::stream(self.seed, &[tag::LOADING_COLUMN, s as u64, h as u64]);
            for v in z_c.column_mut(h).iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            for v in z.column_mut(h).iter_mut() {
                *v = rng.sample(StandardNormal);
            }
        }
        (z_c, z)
    }

    // Returns the subspace coefficients `√a_C Z_C − √a_N BᵀZ` and the scaled
    // isotropic part `√a_N Z`, both already multiplied by σρ.
    fn perturbation(&self, s: usize) -> (DMatrix<f64>, DMatrix<f64>, f64) {
        let scale = math::sqrt(self.sigma_sq[s]) * self.inflation();
        let sc = math::sqrt(self.params.shrink_c);
        let sn = math::sqrt(self.params.shrink_n);
        let (z_c, z) = self.normals(s);
        let coef = (z_c * sc - self.params.basis.tr_mul(&z) * sn) * scale;
        (coef, z, sn * scale)
    }

    /// Loading matrix of draw `s` (`p × k`).
    pub fn draw(&self, s: usize) -> DMatrix<f64> {
        let (coef, z, iso) = self.perturbation(s);
        &self.params.lambda_bar + &self.params.basis * coef + z * iso
    }

    /// Rows `rows` of the loading matrix of draw `s`.
    pub fn draw_rows(&self, s: usize, rows: &[usize]) -> DMatrix<f64> {
        let (coef, z, iso) = self.perturbation(s);
        let b = self.params.basis.select_rows(rows);
        let mut out = self.params.lambda_bar.select_rows(rows) + b * coef;
        for (i, &row) in rows.iter().enumerate() {
            for h in 0..out.ncols() {
                out[(i, h)] += iso * z[(row, h)];
            }
        }
        out
    }

    /// Draws restricted to `rows`, for every draw, computed in parallel.
    pub fn materialize_rows(&self, rows: &[usize]) -> Result<Vec<DMatrix<f64>>> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.params.n_genes()) {
            return Err(BasilError::DimensionMismatch(alloc::format!("gene index {bad} out of range")));
        }
        Ok(par::map_range(self.n_draws(), |s| self.draw_rows(s, rows)))
    }

    /// Element-wise mean of all loading draws.
    pub fn mean_loadings(&self) -> DMatrix<f64> {
        let draws = par::map_range(self.n_draws(), |s| self.draw(s));
        let mut acc = DMatrix::zeros(self.params.n_genes(), self.params.n_factors());
        for d in draws {
            acc += d;
        }
        acc / self.n_draws() as f64
    }
}
