//! Empirical-Bayes estimates of the noise variance, the two prior shrinkage
//! variances and the coverage-correction factor.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::seq::index;

use crate::error::{BasilError, Result};
use crate::math;
use crate::matrixcore::{DataMatrix, SpectralDecomposition, SubspaceBasis};
use crate::par;
use crate::rng::{self, tag};
use crate::selection::is_degenerate_residual;

/// Default number of gene pairs used to estimate `rho`.
pub const DEFAULT_PAIR_BUDGET: usize = 100_000;

/// Pairs whose combined squared row norm is below this are skipped in `rho`.
pub const ZERO_ROW_THRESHOLD: f64 = 1e-15;

/// Prior settings and their data-driven estimates.
///
/// The shrinkage variances may be `+∞` when set by hand, which disables
/// shrinkage for that block; estimates are always finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters {
    pub v0: f64,
    pub sigma0_sq: f64,
    pub tau_gamma_sq: f64,
    pub tau_psi_sq: f64,
    pub rho: f64,
    pub sigma_hat_sq: f64,
    pub pair_budget: usize,
}

/// Shrinkage variances and the loading energies they came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauEstimate {
    pub tau_gamma_sq: f64,
    pub tau_psi_sq: f64,
    /// `‖P·VD‖² / n`.
    pub l_c: f64,
    /// `‖(I − P)·VD‖² / n`.
    pub l_n: f64,
}

/// The coverage-correction factor and how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoEstimate {
    pub rho: f64,
    pub pairs_evaluated: usize,
    pub pairs_skipped: usize,
    pub exhaustive: bool,
}

/// `σ̂²` from a residual sum of squares `‖Y − Y_k‖²`.
pub fn sigma_hat_from_residual(residual: f64, total: f64, n: usize, p: usize, k: usize) -> Result<f64> {
    if k >= n {
        return Err(BasilError::InvalidArgument(alloc::format!("k = {k} must be below n = {n}")));
    }
    if is_degenerate_residual(residual, total, (n * p) as f64) {
        return Err(BasilError::DegenerateResidual { k });
    }
    Ok(residual / ((n - k) * p) as f64)
}

/// `σ̂² = (‖Y‖² − Σ_{l≤k} d_l²) / ((n − k) p)`.
pub fn sigma_hat(y: &DataMatrix, svd: &SpectralDecomposition, k: usize) -> Result<f64> {
    if k > svd.rank() {
        return Err(BasilError::DimensionMismatch(alloc::format!(
            "k = {k} exceeds the decomposition rank {}",
            svd.rank()
        )));
    }
    let total = y.frobenius_sq();
    let captured: f64 = svd.singular_values.iter().take(k).map(|d| d * d).sum();
    let residual = (total - captured).max(0.0);
    sigma_hat_from_residual(residual, total, y.n_samples(), y.n_genes(), k)
}

/// Shrinkage variances from the split of the loading energy between the gene-set
/// span (dimension `r`) and its complement.
pub(crate) fn tau_from_energies(
    energy_c: f64,
    energy_n: f64,
    n: usize,
    p: usize,
    r: usize,
    k: usize,
    sigma_hat_sq: f64,
) -> TauEstimate {
    let l_c = energy_c / n as f64;
    let l_n = energy_n / n as f64;
    let tau_gamma_sq = l_c / ((k * r) as f64 * sigma_hat_sq);
    let tau_psi_sq = if p > r { l_n / ((k * (p - r)) as f64 * sigma_hat_sq) } else { 0.0 };
    TauEstimate { tau_gamma_sq, tau_psi_sq, l_c, l_n }
}

/// Estimates the prior variances of the gene-set and residual loading blocks.
/// The block dimension is the numerical rank `r` of the gene-set matrix.
pub fn tau_hats(
    svd: &SpectralDecomposition,
    basis: &SubspaceBasis,
    sigma_hat_sq: f64,
    k: usize,
) -> Result<TauEstimate> {
    if !(sigma_hat_sq > 0.0) {
        return Err(BasilError::InvalidArgument("sigma_hat_sq must be positive".into()));
    }
    if k == 0 || k > svd.rank() {
        return Err(BasilError::DimensionMismatch(alloc::format!("k = {k} outside 1..={}", svd.rank())));
    }
    let vd = svd.scaled_right().columns(0, k).into_owned();
    let coords = basis.coordinates(&vd)?;
    let energy_c = coords.norm_squared();
    let energy_n = (vd.norm_squared() - energy_c).max(0.0);
    Ok(tau_from_energies(
        energy_c,
        energy_n,
        svd.left.nrows(),
        basis.dim_ambient(),
        basis.dim_subspace(),
        k,
        sigma_hat_sq,
    ))
}

fn pair_term(sq: &[f64], mu: &DMatrix<f64>, f: usize, g: usize, sigma_hat_sq: f64) -> Option<f64> {
    let denom = sq[f] + sq[g];
    if denom < ZERO_ROW_THRESHOLD {
        return None;
    }
    if f == g {
        return Some(math::sqrt(1.0 + sq[f] / (2.0 * sigma_hat_sq)));
    }
    let cross = mu.row(f).dot(&mu.row(g));
    Some(math::sqrt(1.0 + (sq[f] * sq[g] + cross * cross) / (sigma_hat_sq * denom)))
}

// Linear index over pairs f <= g in row-major order; returns (f, g) for a sorted
// list of indices.
fn unrank_sorted(indices: &[usize], p: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(indices.len());
    let mut f = 0;
    let mut row_start = 0;
    for &t in indices {
        while t >= row_start + (p - f) {
            row_start += p - f;
            f += 1;
        }
        out.push((f, f + (t - row_start)));
    }
    out
}

#[derive(Clone, Copy, Default)]
struct PairSum {
    sum: f64,
    evaluated: usize,
    skipped: usize,
}

impl PairSum {
    fn add(&mut self, b: Option<f64>) {
        match b {
            Some(v) => {
                self.sum += v;
                self.evaluated += 1;
            }
            None => self.skipped += 1,
        }
    }
}

/// Coverage-correction factor: the mean of the pair terms `b_fg` over gene pairs
/// `f ≤ g` built from the rows of the loading mean. All pairs are used when they
/// fit in `pair_budget`, otherwise a seeded uniform sample without replacement.
pub fn rho_hat(lambda_bar: &DMatrix<f64>, sigma_hat_sq: f64, pair_budget: usize, seed: u64) -> Result<RhoEstimate> {
    if pair_budget == 0 {
        return Err(BasilError::InvalidArgument("pair_budget must be at least 1".into()));
    }
    if !(sigma_hat_sq > 0.0) {
        return Err(BasilError::InvalidArgument("sigma_hat_sq must be positive".into()));
    }
    let p = lambda_bar.nrows();
    let sq: Vec<f64> = lambda_bar.row_iter().map(|r| r.norm_squared()).collect();
    let n_pairs = p * (p + 1) / 2;
    let exhaustive = n_pairs <= pair_budget;

    let parts: Vec<PairSum> = if exhaustive {
        par::map_range(p, |f| {
            let mut acc = PairSum::default();
            for g in f..p {
                acc.add(pair_term(&sq, lambda_bar, f, g, sigma_hat_sq));
            }
            acc
        })
    } else {
        let mut rng = rng::stream(seed, &[tag::RHO_PAIRS]);
        let mut idx = index::sample(&mut rng, n_pairs, pair_budget).into_vec();
        idx.sort_unstable();
        let pairs = unrank_sorted(&idx, p);
        par::map_range(pairs.len(), |i| {
            let (f, g) = pairs[i];
            let mut acc = PairSum::default();
            acc.add(pair_term(&sq, lambda_bar, f, g, sigma_hat_sq));
            acc
        })
    };
    let mut total = PairSum::default();
    for part in parts {
        total.sum += part.sum;
        total.evaluated += part.evaluated;
        total.skipped += part.skipped;
    }
    let rho = if total.evaluated == 0 { 1.0 } else { (total.sum / total.evaluated as f64).max(1.0) };
    Ok(RhoEstimate { rho, pairs_evaluated: total.evaluated, pairs_skipped: total.skipped, exhaustive })
}
