//! Synthetic data under the model, random gene-set catalogs, evaluation
//! metrics and the comparison estimators used by the replication study.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::ebayes;
use crate::error::{BasilError, Result};
use crate::genesets::GeneSetMatrix;
use crate::math;
use crate::matrixcore::{column_space_basis, gram_spectrum, DataMatrix};
use crate::par;
use crate::posterior::correlation::equal_tailed_interval;
use crate::posterior::{LowRankCovariance, PosteriorDraws};
use crate::rng::{self, tag};

/// Fewest posterior draws accepted by [`coverage_rate`].
pub const MIN_COVERAGE_DRAWS: usize = 100;

/// Default density of the synthetic gene-set matrix.
pub const DEFAULT_DENSITY: f64 = 0.05;

/// Parameters of a simulation study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationDesign {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub q: usize,
    pub tau_gamma_sq: f64,
    pub tau_psi_sq: f64,
    pub sigma_sq: f64,
    /// Density of the synthetic gene-set matrix.
    pub density: f64,
    pub min_genes: usize,
    pub n_replications: usize,
    pub seed: u64,
}

impl SimulationDesign {
    /// Strong gene-set signal: `τ_Γ² = 0.7`, `τ_Ψ² = 0.1`, `σ² = 15`.
    pub fn high_signal() -> Self {
        SimulationDesign {
            n: 500,
            p: 1000,
            k: 10,
            q: 100,
            tau_gamma_sq: 0.7,
            tau_psi_sq: 0.1,
            sigma_sq: 15.0,
            density: DEFAULT_DENSITY,
            min_genes: 10,
            n_replications: 25,
            seed: 0,
        }
    }

    /// Weak gene-set signal: `τ_Γ² = 0.4`, `τ_Ψ² = 0.7`, `σ² = 15`.
    pub fn low_signal() -> Self {
        SimulationDesign { tau_gamma_sq: 0.4, tau_psi_sq: 0.7, ..Self::high_signal() }
    }

    /// Looks up a named preset.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "high-signal" => Some(Self::high_signal()),
            "low-signal" => Some(Self::low_signal()),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 2] = ["high-signal", "low-signal"];

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v >= 0.0 && v.is_finite();
        if !(positive(self.tau_gamma_sq)
            && positive(self.tau_psi_sq)
            && self.sigma_sq > 0.0
            && self.sigma_sq.is_finite())
        {
            return Err(BasilError::InvalidArgument("variances must be finite, sigma^2 positive".into()));
        }
        if self.n < 2 || self.k == 0 || self.k >= self.n.min(self.p) {
            return Err(BasilError::InvalidArgument(alloc::format!(
                "need 1 <= k < min(n, p); got k = {}, n = {}, p = {}",
                self.k,
                self.n,
                self.p
            )));
        }
        if self.q == 0 || self.q >= self.p {
            return Err(BasilError::InvalidArgument(alloc::format!(
                "need 1 <= q < p; got q = {}, p = {}",
                self.q,
                self.p
            )));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(BasilError::InvalidArgument(alloc::format!("density {} outside (0, 1]", self.density)));
        }
        Ok(())
    }
}

/// Planted parameters behind a synthetic data set.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    /// `Λ₀ = CΓ₀ + Ψ₀`, `p × k`.
    pub lambda0: DMatrix<f64>,
    pub gamma0: DMatrix<f64>,
    pub psi0: DMatrix<f64>,
    pub m0: DMatrix<f64>,
    pub sigma0_sq: f64,
}

fn normal_matrix(rows: usize, cols: usize, seed: u64, path: &[u64], sd: f64) -> DMatrix<f64> {
    let mut rng = rng::stream(seed, path);
    DMatrix::from_fn(rows, cols, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

/// Draws `Γ₀`, `Ψ₀ = (I − P)G`, `M₀` and noise under the model and returns
/// `Y = M₀Λ₀ᵀ + E` with the gene ids of `c`.
pub fn generate_synthetic(
    design: &SimulationDesign,
    c: &GeneSetMatrix,
    seed: u64,
) -> Result<(DataMatrix, SyntheticTruth)> {
    let (n, p, k) = (design.n, c.n_genes(), design.k);
    if p != design.p {
        return Err(BasilError::DimensionMismatch(alloc::format!(
            "gene sets cover {p} genes, design has p = {}",
            design.p
        )));
    }
    let basis = column_space_basis(c)?;
    let gamma0 =
        normal_matrix(c.n_sets(), k, seed, &[tag::SIM_GAMMA], math::sqrt(design.tau_gamma_sq * design.sigma_sq));
    let g = normal_matrix(p, k, seed, &[tag::SIM_PSI], math::sqrt(design.tau_psi_sq * design.sigma_sq));
    let psi0 = &g - basis.lift(&basis.coordinates(&g)?)?;
    let lambda0 = c.membership() * &gamma0 + &psi0;
    let m0 = normal_matrix(n, k, seed, &[tag::SIM_FACTORS], 1.0);
    let noise = normal_matrix(n, p, seed, &[tag::SIM_NOISE], math::sqrt(design.sigma_sq));
    let y = &m0 * lambda0.transpose() + noise;
    let data = DataMatrix::new(y, c.gene_ids().to_vec())?;
    Ok((data, SyntheticTruth { lambda0, gamma0, psi0, m0, sigma0_sq: design.sigma_sq }))
}

/// Fresh samples from the same planted model, for out-of-sample evaluation.
pub fn generate_test_data(
    truth: &SyntheticTruth,
    gene_ids: &[alloc::string::String],
    n_test: usize,
    seed: u64,
) -> Result<DataMatrix> {
    let (p, k) = truth.lambda0.shape();
    let m = normal_matrix(n_test, k, seed, &[tag::SIM_TEST_FACTORS], 1.0);
    let noise = normal_matrix(n_test, p, seed, &[tag::SIM_TEST_NOISE], math::sqrt(truth.sigma0_sq));
    DataMatrix::new(m * truth.lambda0.transpose() + noise, gene_ids.to_vec())
}

/// Random binary gene-set matrix with i.i.d. Bernoulli(`density`) entries; each
/// column is redrawn until it has at least `min_genes` members.
pub fn generate_random_genesets(
    p: usize,
    q: usize,
    density: f64,
    min_genes: usize,
    seed: u64,
) -> Result<GeneSetMatrix> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(BasilError::InvalidArgument(alloc::format!("density {density} outside (0, 1]")));
    }
    if p == 0 || q == 0 {
        return Err(BasilError::InvalidArgument("need p >= 1 and q >= 1".into()));
    }
    if density * (p as f64) < min_genes as f64 / 3.0 || min_genes > p {
        return Err(BasilError::InfeasibleDensity { density, p, min_genes });
    }
    let columns = par::map_range(q, |l| {
        let mut rng = rng::stream(seed, &[tag::SIM_GENESETS, l as u64]);
        loop {
            let col: Vec<f64> = (0..p).map(|_| if rng.random_bool(density) { 1.0 } else { 0.0 }).collect();
            if col.iter().sum::<f64>() >= min_genes as f64 {
                return col;
            }
        }
    });
    let mut membership = DMatrix::zeros(p, q);
    for (l, col) in columns.iter().enumerate() {
        membership.column_mut(l).copy_from_slice(col);
    }
    let genes = (1..=p).map(|j| alloc::format!("g{j}")).collect();
    let sets = (1..=q).map(|l| alloc::format!("set{l}")).collect();
    GeneSetMatrix::new(membership, genes, sets)
}

/// `‖ÂÂᵀ − Λ₀Λ₀ᵀ‖_F / ‖Λ₀Λ₀ᵀ‖_F` through `k`-dimensional Gram matrices:
/// `‖AAᵀ − BBᵀ‖² = ‖AᵀA‖² − 2‖AᵀB‖² + ‖BᵀB‖²`.
pub fn relative_frobenius_error(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if estimate.nrows() != truth.nrows() {
        return Err(BasilError::DimensionMismatch(alloc::format!(
            "estimate has {} rows, truth {}",
            estimate.nrows(),
            truth.nrows()
        )));
    }
    let tt = truth.tr_mul(truth).norm_squared();
    if tt == 0.0 {
        return Err(BasilError::ZeroTruth);
    }
    let ee = estimate.tr_mul(estimate).norm_squared();
    let et = estimate.tr_mul(truth).norm_squared();
    Ok(math::sqrt((ee - 2.0 * et + tt).max(0.0) / tt))
}

/// Seed-deterministic uniform subset of `size` genes out of `p`, ascending.
pub fn gene_subset(p: usize, size: usize, seed: u64) -> Result<Vec<usize>> {
    if size > p {
        return Err(BasilError::InvalidArgument(alloc::format!("subset of {size} genes out of {p}")));
    }
    let mut rng = rng::stream(seed, &[tag::SUBSET]);
    let mut genes = index::sample(&mut rng, p, size).into_vec();
    genes.sort_unstable();
    Ok(genes)
}

/// Fraction of the entries of `target` (`s × s`, symmetric) inside the
/// equal-tailed `level` intervals of the draws of `(ΛΛᵀ)_fg` on `genes`.
/// Off-diagonal pairs count twice, as in the full `s × s` matrix.
pub fn interval_coverage(draws: &PosteriorDraws, genes: &[usize], target: &DMatrix<f64>, level: f64) -> Result<f64> {
    if draws.n_draws() < MIN_COVERAGE_DRAWS {
        return Err(BasilError::InsufficientDraws { n_draws: draws.n_draws(), required: MIN_COVERAGE_DRAWS });
    }
    if !(0.0..1.0).contains(&level) {
        return Err(BasilError::InvalidArgument(alloc::format!("level {level} outside [0, 1)")));
    }
    let s = genes.len();
    if target.shape() != (s, s) {
        return Err(BasilError::DimensionMismatch("target must be s x s".into()));
    }
    if s == 0 || level == 0.0 {
        return Ok(0.0);
    }
    let rows = draws.materialize_rows(genes)?;
    let n_draws = rows.len();
    let hits = par::map_range(s, |f| {
        let mut buf = alloc::vec![0.0; n_draws];
        let mut count = 0usize;
        for g in f..s {
            for t in 0..n_draws {
                buf[t] = rows[t].row(f).dot(&rows[t].row(g));
            }
            let (lo, hi) = equal_tailed_interval(&mut buf, level);
            let truth = target[(f, g)];
            if lo <= truth && truth <= hi {
                count += if f == g { 1 } else { 2 };
            }
        }
        count
    });
    Ok(hits.iter().sum::<usize>() as f64 / (s * s) as f64)
}

/// Coverage of the entries of `Λ₀Λ₀ᵀ` on a random `subset_size` gene subset.
pub fn coverage_rate(
    draws: &PosteriorDraws,
    truth: &DMatrix<f64>,
    subset_size: usize,
    level: f64,
    seed: u64,
) -> Result<f64> {
    if truth.nrows() != draws.params().n_genes() {
        return Err(BasilError::DimensionMismatch("truth and draws differ in p".into()));
    }
    let genes = gene_subset(truth.nrows(), subset_size, seed)?;
    let rows = truth.select_rows(&genes);
    interval_coverage(draws, &genes, &(&rows * rows.transpose()), level)
}

/// Out-of-sample Gaussian log-likelihood of the rows of `y_test` under `N(0, Σ̂)`.
pub fn oos_loglik(cov: &LowRankCovariance, y_test: &DataMatrix) -> Result<f64> {
    if y_test.n_genes() != cov.dim() {
        return Err(BasilError::DimensionMismatch(alloc::format!(
            "test data has {} genes, covariance {}",
            y_test.n_genes(),
            cov.dim()
        )));
    }
    cov.log_density_sum(y_test.values())
}

/// Log-likelihood under a diagonal Gaussian with the given variances.
pub fn diagonal_loglik(variances: &[f64], y_test: &DataMatrix) -> Result<f64> {
    let p = y_test.n_genes();
    if variances.len() != p {
        return Err(BasilError::DimensionMismatch(alloc::format!(
            "test data has {p} genes, {} variances",
            variances.len()
        )));
    }
    if variances.iter().any(|v| !(*v > 0.0)) {
        return Err(BasilError::InvalidArgument("variances must be positive".into()));
    }
    let nt = y_test.n_samples() as f64;
    let log_det: f64 = variances.iter().map(|v| math::ln(*v)).sum();
    let mut quad = 0.0;
    for (j, col) in y_test.values().column_iter().enumerate() {
        quad += col.norm_squared() / variances[j];
    }
    Ok(-0.5 * nt * p as f64 * math::ln(math::TWO_PI) - 0.5 * nt * log_det - 0.5 * quad)
}

/// Spectral loadings `VD/√n` at rank `k` with the residual variance estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBaseline {
    pub loadings: DMatrix<f64>,
    pub sigma_hat_sq: f64,
}

impl SpectralBaseline {
    pub fn covariance(&self) -> Result<LowRankCovariance> {
        LowRankCovariance::new(self.loadings.clone(), self.sigma_hat_sq)
    }
}

pub fn spectral_baseline(y: &DataMatrix, k: usize) -> Result<SpectralBaseline> {
    y.require_estimable()?;
    let spectrum = gram_spectrum(y.values())?;
    let (n, p) = (y.n_samples(), y.n_genes());
    let svd = spectrum.truncate(y.values(), k)?;
    let sigma_hat_sq = ebayes::sigma_hat_from_residual(spectrum.residual_energy(k), spectrum.total_energy(), n, p, k)?;
    Ok(SpectralBaseline { loadings: svd.scaled_right() / math::sqrt(n as f64), sigma_hat_sq })
}

/// Per-gene sample variances (n − 1 denominator) around the column means.
pub fn empirical_variances(y: &DataMatrix) -> Result<Vec<f64>> {
    y.require_estimable()?;
    let n = y.n_samples() as f64;
    Ok(y.values()
        .column_iter()
        .map(|c| {
            let m = c.sum() / n;
            c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::{sample_posterior, PosteriorParams, SampleOptions};

    fn small_design() -> SimulationDesign {
        SimulationDesign { n: 40, p: 60, k: 3, q: 6, min_genes: 5, density: 0.2, ..SimulationDesign::high_signal() }
    }

    #[test]
    fn presets() {
        let h = SimulationDesign::preset("high-signal").unwrap();
        assert_eq!((h.tau_gamma_sq, h.tau_psi_sq, h.sigma_sq, h.n, h.k), (0.7, 0.1, 15.0, 500, 10));
        let l = SimulationDesign::preset("low-signal").unwrap();
        assert_eq!((l.tau_gamma_sq, l.tau_psi_sq, l.sigma_sq), (0.4, 0.7, 15.0));
        assert!(SimulationDesign::preset("medium").is_none());
    }

    #[test]
    fn genesets_density_one_and_constraints() {
        let c = generate_random_genesets(20, 3, 1.0, 10, 1).unwrap();
        assert!(c.membership().iter().all(|v| *v == 1.0));
        let c = generate_random_genesets(1000, 50, 0.05, 10, 2).unwrap();
        assert!(c.column_sums().iter().all(|s| *s >= 10));
        assert_eq!(c, generate_random_genesets(1000, 50, 0.05, 10, 2).unwrap());
        assert!(matches!(generate_random_genesets(100, 5, 0.01, 10, 3), Err(BasilError::InfeasibleDensity { .. })));
    }

    #[test]
    fn residual_loadings_orthogonal_to_sets() {
        let d = small_design();
        let c = generate_random_genesets(d.p, d.q, d.density, d.min_genes, 4).unwrap();
        let (y, truth) = generate_synthetic(&d, &c, 5).unwrap();
        assert_eq!(y.n_samples(), 40);
        assert!(c.membership().tr_mul(&truth.psi0).amax() < 1e-10);
        let zero_psi = SimulationDesign { tau_psi_sq: 0.0, ..d };
        let (_, truth) = generate_synthetic(&zero_psi, &c, 5).unwrap();
        assert_eq!(truth.psi0.amax(), 0.0);
        assert!((&truth.lambda0 - c.membership() * &truth.gamma0).amax() < 1e-12);
    }

    #[test]
    fn relative_error_properties() {
        let a = normal_matrix(30, 3, 1, &[1], 1.0);
        assert_eq!(relative_frobenius_error(&a, &a).unwrap(), 0.0);
        let (qm, _) = normal_matrix(3, 3, 2, &[1], 1.0).qr().unpack();
        assert!(relative_frobenius_error(&(&a * qm), &a).unwrap() < 1e-7);
        let b = normal_matrix(30, 2, 3, &[1], 1.0);
        let dense = (&b * b.transpose() - &a * a.transpose()).norm() / (&a * a.transpose()).norm();
        assert!((relative_frobenius_error(&b, &a).unwrap() - dense).abs() < 1e-10);
        assert_eq!(relative_frobenius_error(&b, &DMatrix::zeros(30, 2)), Err(BasilError::ZeroTruth));
    }

    fn draws(n: usize) -> PosteriorDraws {
        let params = PosteriorParams {
            lambda_bar: normal_matrix(8, 2, 4, &[1], 1.0),
            basis: DMatrix::from_fn(8, 2, |i, j| if i == j { 1.0 } else { 0.0 }),
            shrink_c: 0.02,
            shrink_n: 0.01,
            rho: 1.0,
            v_n: 51.0,
            sigma_n_sq: 1.0,
        };
        sample_posterior(&params, &SampleOptions::new(n, 6)).unwrap()
    }

    #[test]
    fn coverage_by_construction() {
        let d = draws(201);
        let genes: Vec<usize> = (0..8).collect();
        let rows = d.materialize_rows(&genes).unwrap();
        let median = DMatrix::from_fn(8, 8, |f, g| {
            let mut v: Vec<f64> = rows.iter().map(|l| l.row(f).dot(&l.row(g))).collect();
            v.sort_by(f64::total_cmp);
            v[100]
        });
        assert_eq!(interval_coverage(&d, &genes, &median, 0.95).unwrap(), 1.0);
        assert_eq!(interval_coverage(&d, &genes, &median, 0.0).unwrap(), 0.0);
        assert!(matches!(
            interval_coverage(&draws(50), &genes, &median, 0.95),
            Err(BasilError::InsufficientDraws { n_draws: 50, required: 100 })
        ));
    }

    #[test]
    fn oos_loglik_values() {
        let cov = LowRankCovariance::new(DMatrix::zeros(3, 1), 1.0).unwrap();
        let y = DataMatrix::with_default_ids(DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0])).unwrap();
        let expected = -3.0 * math::TWO_PI.ln() - 1.5;
        assert!((oos_loglik(&cov, &y).unwrap() - expected).abs() < 1e-13);
        assert!((diagonal_loglik(&[1.0; 3], &y).unwrap() - expected).abs() < 1e-13);
        let wrong = DataMatrix::with_default_ids(DMatrix::zeros(2, 4)).unwrap();
        assert!(matches!(oos_loglik(&cov, &wrong), Err(BasilError::DimensionMismatch(_))));
    }

    #[test]
    fn oos_loglik_decreases_with_noise_on_zero_data() {
        let l = normal_matrix(10, 2, 7, &[1], 1.0);
        let y = DataMatrix::with_default_ids(DMatrix::zeros(3, 10)).unwrap();
        let vals: Vec<f64> = [0.5, 1.0, 2.0]
            .iter()
            .map(|d| oos_loglik(&LowRankCovariance::new(l.clone(), *d).unwrap(), &y).unwrap())
            .collect();
        assert!(vals[0] > vals[1] && vals[1] > vals[2]);
    }
}
