//! Choice of the number of latent factors by the joint-likelihood information
//! criterion `JIC(k) = −2 l̂_k + k · max(n, p) · log(min(n, p))`.

use alloc::vec::Vec;

use crate::error::{BasilError, Result, Warning};
use crate::math;
use crate::matrixcore::{gram_spectrum, DataMatrix, GramSpectrum};

/// A residual variance below this fraction of the per-entry energy (floored at
/// one) counts as a perfect fit.
pub const DEGENERATE_RESIDUAL: f64 = 1e-12;

/// Fraction of total variance the default `k_max` must explain.
pub const DEFAULT_VARIANCE_FRACTION: f64 = 0.8;

/// Profile of the criterion over `k = 1..=k_max` (possibly truncated).
#[derive(Debug, Clone, PartialEq)]
pub struct JicProfile {
    pub k_values: Vec<usize>,
    pub jic: Vec<f64>,
    pub loglik_hat: Vec<f64>,
    pub penalty: Vec<f64>,
    pub k_selected: usize,
    pub warnings: Vec<Warning>,
}

/// Maximized spectral log-likelihood, or a flag for a perfect rank-`k` fit where
/// the likelihood is unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectralLoglik {
    Finite(f64),
    Degenerate,
}

impl SpectralLoglik {
    pub fn value(self) -> Option<f64> {
        match self {
            SpectralLoglik::Finite(v) => Some(v),
            SpectralLoglik::Degenerate => None,
        }
    }
}

fn check_k(k: usize, n: usize, p: usize) -> Result<()> {
    if k == 0 || k >= n.min(p) {
        return Err(BasilError::InvalidArgument(alloc::format!(
            "k = {k} must satisfy 1 <= k < min(n, p) = {}",
            n.min(p)
        )));
    }
    Ok(())
}

/// True when `residual` (a sum of squares over `entries` cells) is numerically zero.
pub(crate) fn is_degenerate_residual(residual: f64, total: f64, entries: f64) -> bool {
    residual / entries < DEGENERATE_RESIDUAL * (total / entries).max(1.0)
}

/// `l̂_k` from a precomputed spectrum.
pub fn spectral_loglik_from(spectrum: &GramSpectrum, k: usize) -> Result<SpectralLoglik> {
    let (n, p) = spectrum.shape();
    check_k(k, n, p)?;
    let np = (n * p) as f64;
    let residual = spectrum.residual_energy(k);
    if is_degenerate_residual(residual, spectrum.total_energy(), np) {
        return Ok(SpectralLoglik::Degenerate);
    }
    let var = residual / np;
    Ok(SpectralLoglik::Finite(-0.5 * np * math::ln(math::TWO_PI * var) - 0.5 * np))
}

/// Gaussian log-likelihood of `Y` at its rank-`k` spectral fit with the residual
/// variance at its maximum-likelihood value.
pub fn spectral_loglik(y: &DataMatrix, k: usize) -> Result<SpectralLoglik> {
    check_k(k, y.n_samples(), y.n_genes())?;
    spectral_loglik_from(&gram_spectrum(y.values())?, k)
}

/// `k · max(n, p) · log(min(n, p))`.
pub fn jic_penalty(n: usize, p: usize, k: usize) -> f64 {
    k as f64 * n.max(p) as f64 * math::ln(n.min(p) as f64)
}

/// Smallest `k` whose leading components explain at least 80% of the total
/// energy, capped at `min(n, p) − 1`.
pub fn default_k_max(spectrum: &GramSpectrum) -> usize {
    let (n, p) = spectrum.shape();
    let cap = (n.min(p) - 1).max(1);
    let target = DEFAULT_VARIANCE_FRACTION * spectrum.total_energy();
    let mut acc = 0.0;
    for (l, ev) in spectrum.eigenvalues().iter().enumerate() {
        acc += ev;
        if acc >= target {
            return (l + 1).min(cap);
        }
    }
    cap
}

/// Evaluates the criterion for `k = 1..=k_max` on a precomputed spectrum.
/// `None` uses [`default_k_max`].
pub fn select_k_from(spectrum: &GramSpectrum, k_max: Option<usize>) -> Result<JicProfile> {
    let (n, p) = spectrum.shape();
    let k_max = k_max.unwrap_or_else(|| default_k_max(spectrum));
    check_k(k_max, n, p)?;
    let mut profile = JicProfile {
        k_values: Vec::with_capacity(k_max),
        jic: Vec::with_capacity(k_max),
        loglik_hat: Vec::with_capacity(k_max),
        penalty: Vec::with_capacity(k_max),
        k_selected: 0,
        warnings: Vec::new(),
    };
    for k in 1..=k_max {
        let ll = match spectral_loglik_from(spectrum, k)? {
            SpectralLoglik::Finite(v) => v,
            SpectralLoglik::Degenerate => {
                if k == 1 {
                    return Err(BasilError::DegenerateResidual { k });
                }
                profile.warnings.push(Warning::ProfileTruncated { at_k: k });
                break;
            }
        };
        let pen = jic_penalty(n, p, k);
        profile.k_values.push(k);
        profile.loglik_hat.push(ll);
        profile.penalty.push(pen);
        profile.jic.push(-2.0 * ll + pen);
    }
    // Strict comparison keeps the smaller k on ties.
    let mut best = 0;
    for (i, v) in profile.jic.iter().enumerate() {
        if *v < profile.jic[best] {
            best = i;
        }
    }
    profile.k_selected = profile.k_values[best];
    Ok(profile)
}

/// Selects `k` for `Y` by minimizing the criterion over `1..=k_max`.
pub fn select_k(y: &DataMatrix, k_max: Option<usize>) -> Result<JicProfile> {
    y.require_estimable()?;
    select_k_from(&gram_spectrum(y.values())?, k_max)
}
