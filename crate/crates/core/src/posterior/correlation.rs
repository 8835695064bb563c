use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::{covariance_posterior_mean, PosteriorDraws};
use crate::error::{BasilError, Result};
use crate::math;
use crate::par;

/// Default largest gene subset for correlation summaries.
pub const DEFAULT_SUBSET_CAP: usize = 2_000;

/// Posterior summaries of gene-gene correlations on a subset of genes.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSummary {
    /// Gene indices, in the order of the matrix rows.
    pub genes: Vec<usize>,
    pub level: f64,
    /// Posterior mean of the per-draw correlations.
    pub mean: DMatrix<f64>,
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
    /// `mean`, with entries whose interval contains zero set to zero.
    pub masked: DMatrix<f64>,
    /// Correlation implied by the posterior mean of the covariance.
    pub plugin: DMatrix<f64>,
}

impl CorrelationSummary {
    /// Fraction of off-diagonal pairs whose interval contains zero.
    pub fn masked_fraction(&self) -> f64 {
        let s = self.genes.len();
        if s < 2 {
            return 0.0;
        }
        let mut zeroed = 0usize;
        for f in 0..s {
            for g in f + 1..s {
                if self.lower[(f, g)] <= 0.0 && 0.0 <= self.upper[(f, g)] {
                    zeroed += 1;
                }
            }
        }
        zeroed as f64 / (s * (s - 1) / 2) as f64
    }
}

// Type-7 quantile at probability `prob` of the values in `v`, reordering `v`.
fn quantile(v: &mut [f64], prob: f64) -> f64 {
    let h = (v.len() - 1) as f64 * prob;
    let lo = math::floor(h) as usize;
    let frac = h - lo as f64;
    let (_, x_lo, right) = v.select_nth_unstable_by(lo, f64::total_cmp);
    let x_lo = *x_lo;
    if frac == 0.0 || right.is_empty() {
        return x_lo;
    }
    let x_hi = right.iter().copied().fold(f64::INFINITY, f64::min);
    x_lo + frac * (x_hi - x_lo)
}

/// Equal-tailed interval containing probability `level` of the empirical
/// distribution of `v` (type-7 quantiles). `v` is reordered.
pub(crate) fn equal_tailed_interval(v: &mut [f64], level: f64) -> (f64, f64) {
    let tail = 0.5 * (1.0 - level);
    (quantile(v, tail), quantile(v, 1.0 - tail))
}

/// Per-draw correlations of the covariance `ΛΛᵀ + σ²I` on a gene subset,
/// summarized by their mean and equal-tailed `level` credible intervals.
pub fn correlation_intervals(
    draws: &PosteriorDraws,
    genes: &[usize],
    level: f64,
    cap: usize,
) -> Result<CorrelationSummary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(BasilError::InvalidArgument(alloc::format!("level {level} outside (0, 1)")));
    }
    if genes.len() > cap {
        return Err(BasilError::SubsetTooLarge { size: genes.len(), cap });
    }
    let s = genes.len();
    let rows = draws.materialize_rows(genes)?;
    let sigma = draws.sigma_sq();
    let n_draws = rows.len();
    let sd: Vec<Vec<f64>> = rows
        .iter()
        .zip(sigma)
        .map(|(l, s2)| l.row_iter().map(|r| math::sqrt(r.norm_squared() + s2)).collect())
        .collect();

    let per_gene = par::map_range(s, |f| {
        let mut out = Vec::with_capacity(s - f);
        let mut buf = alloc::vec![0.0; n_draws];
        for g in f + 1..s {
            for t in 0..n_draws {
                buf[t] = rows[t].row(f).dot(&rows[t].row(g)) / (sd[t][f] * sd[t][g]);
            }
            let mean = buf.iter().sum::<f64>() / n_draws as f64;
            let (lo, hi) = equal_tailed_interval(&mut buf, level);
            out.push((mean, lo, hi));
        }
        out
    });

    let mut mean = DMatrix::identity(s, s);
    let mut lower = DMatrix::identity(s, s);
    let mut upper = DMatrix::identity(s, s);
    let mut masked = DMatrix::identity(s, s);
    for (f, row) in per_gene.into_iter().enumerate() {
        for (offset, (m, lo, hi)) in row.into_iter().enumerate() {
            let g = f + 1 + offset;
            let keep = if lo <= 0.0 && 0.0 <= hi { 0.0 } else { m };
            for (a, b) in [(f, g), (g, f)] {
                mean[(a, b)] = m;
                lower[(a, b)] = lo;
                upper[(a, b)] = hi;
                masked[(a, b)] = keep;
            }
        }
    }

    let cov = covariance_posterior_mean(draws.params())?.submatrix(genes);
    let plugin =
        DMatrix::from_fn(s, s, |a, b| if a == b { 1.0 } else { cov[(a, b)] / math::sqrt(cov[(a, a)] * cov[(b, b)]) });
    Ok(CorrelationSummary { genes: genes.to_vec(), level, mean, lower, upper, masked, plugin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::{sample_posterior, PosteriorParams, SampleOptions};

    #[test]
    fn type7_quantiles() {
        let mut v = [5.0, 1.0, 4.0, 2.0, 3.0];
        assert_eq!(quantile(&mut v, 0.5), 3.0);
        assert_eq!(quantile(&mut v, 0.0), 1.0);
        assert_eq!(quantile(&mut v, 1.0), 5.0);
        assert!((quantile(&mut v, 0.1) - 1.4).abs() < 1e-15);
        let mut w: Vec<f64> = (1..=100).map(f64::from).collect();
        let (lo, hi) = equal_tailed_interval(&mut w, 0.9);
        assert!((lo - 5.95).abs() < 1e-12 && (hi - 95.05).abs() < 1e-12);
    }

    fn params() -> PosteriorParams {
        // Genes 0 and 1 share a strong factor; gene 2 has no loading.
        let mut lambda_bar = DMatrix::zeros(3, 1);
        lambda_bar[(0, 0)] = 3.0;
        lambda_bar[(1, 0)] = 3.0;
        PosteriorParams {
            lambda_bar,
            basis: DMatrix::from_fn(3, 1, |i, _| if i == 0 { 1.0 } else { 0.0 }),
            shrink_c: 1e-4,
            shrink_n: 1e-4,
            rho: 1.0,
            v_n: 101.0,
            sigma_n_sq: 1.0,
        }
    }

    #[test]
    fn diagonal_and_null_gene() {
        let draws = sample_posterior(&params(), &SampleOptions::new(400, 3)).unwrap();
        let summary = correlation_intervals(&draws, &[0, 1, 2], 0.95, DEFAULT_SUBSET_CAP).unwrap();
        for i in 0..3 {
            assert_eq!(summary.mean[(i, i)], 1.0);
            assert_eq!(summary.lower[(i, i)], summary.upper[(i, i)]);
            assert_eq!(summary.masked[(i, i)], 1.0);
        }
        assert!(summary.masked[(0, 1)] > 0.8);
        assert_eq!(summary.masked[(0, 2)], 0.0);
        assert_eq!(summary.masked[(1, 2)], 0.0);
        assert!(summary.lower[(0, 2)] <= 0.0 && summary.upper[(0, 2)] >= 0.0);
        assert!((summary.masked_fraction() - 2.0 / 3.0).abs() < 1e-15);
        let delta = 101.0 / 99.0 * (1.0 + 2e-4);
        assert!((summary.plugin[(0, 1)] - 9.0 / (9.0 + delta)).abs() < 1e-12);
    }

    #[test]
    fn subset_cap_and_level() {
        let draws = sample_posterior(&params(), &SampleOptions::new(10, 3)).unwrap();
        assert_eq!(
            correlation_intervals(&draws, &[0, 1, 2], 0.95, 2),
            Err(BasilError::SubsetTooLarge { size: 3, cap: 2 })
        );
        assert!(correlation_intervals(&draws, &[0, 1], 1.0, 10).is_err());
    }
}
