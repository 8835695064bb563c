use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{BasilError, Result};
use crate::math;

/// Singular values below this fraction of the largest flag a degenerate rank.
pub const DEGENERATE_RATIO: f64 = 1e-10;

/// Leading `k` singular triplets `A ≈ U diag(D) Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    /// `n × k` left singular vectors `U`.
    pub left: DMatrix<f64>,
    /// Singular values in descending order.
    pub singular_values: DVector<f64>,
    /// `p × k` right singular vectors `V`.
    pub right: DMatrix<f64>,
    /// Set when the trailing singular value is below `1e-10` times the largest.
    pub degenerate: bool,
}

impl SpectralDecomposition {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `V · diag(D)`, the `p × k` scaled right singular vectors.
    pub fn scaled_right(&self) -> DMatrix<f64> {
        let mut vd = self.right.clone();
        for (mut col, d) in vd.column_iter_mut().zip(self.singular_values.iter()) {
            col *= *d;
        }
        vd
    }

    /// `U · diag(D) · Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut ud = self.left.clone();
        for (mut col, d) in ud.column_iter_mut().zip(self.singular_values.iter()) {
            col *= *d;
        }
        ud * self.right.transpose()
    }
}

/// Eigendecomposition of the smaller Gram matrix of `A` (`AAᵀ` when `n ≤ p`,
/// otherwise `AᵀA`). One decomposition serves every truncation rank.
#[derive(Debug, Clone)]
pub struct GramSpectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    row_side: bool,
    total_energy: f64,
    shape: (usize, usize),
}

impl GramSpectrum {
    /// Eigenvalues (squared singular values), descending and clamped at zero.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `‖A‖_F²`.
    pub fn total_energy(&self) -> f64 {
        self.total_energy
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    /// `‖A − A_k‖_F²` for the best rank-`k` approximation `A_k`, as the spectral tail.
    pub fn residual_energy(&self, k: usize) -> f64 {
        self.eigenvalues.iter().skip(k).sum()
    }

    /// Singular value `l` (0-based).
    pub fn singular_value(&self, l: usize) -> f64 {
        math::sqrt(self.eigenvalues[l])
    }

    /// Recovers the leading `k` singular triplets of `a`, which must be the matrix
    /// this spectrum was computed from.
    pub fn truncate(&self, a: &DMatrix<f64>, k: usize) -> Result<SpectralDecomposition> {
        let (n, p) = a.shape();
        if (n, p) != self.shape {
            return Err(BasilError::DimensionMismatch(alloc::format!(
                "spectrum of a {}x{} matrix applied to {n}x{p}",
                self.shape.0,
                self.shape.1
            )));
        }
        check_rank(k, n, p)?;
        let small = self.eigenvectors.columns(0, k).into_owned();
        // Recover the other side as Aᵀu (or Av) and renormalize.
        let other = if self.row_side { a.tr_mul(&small) } else { a * &small };
        let mut d = DVector::zeros(k);
        let mut other_unit = other;
        for l in 0..k {
            let norm = other_unit.column(l).norm();
            d[l] = norm;
            if norm > 0.0 {
                other_unit.column_mut(l).unscale_mut(norm);
            }
        }
        let (mut left, mut right) = if self.row_side { (small, other_unit) } else { (other_unit, small) };
        // Sign convention: largest-magnitude entry of each right vector is positive.
        for l in 0..k {
            let col = right.column(l);
            let mut best = 0.0_f64;
            let mut sign = 1.0;
            for v in col.iter() {
                if v.abs() > best {
                    best = v.abs();
                    sign = if *v < 0.0 { -1.0 } else { 1.0 };
                }
            }
            if sign < 0.0 {
                right.column_mut(l).neg_mut();
                left.column_mut(l).neg_mut();
            }
        }
        let degenerate = d[k - 1] < DEGENERATE_RATIO * d[0] || d[0] == 0.0;
        Ok(SpectralDecomposition { left, singular_values: d, right, degenerate })
    }
}

fn check_rank(k: usize, n: usize, p: usize) -> Result<()> {
    if k == 0 || k > n.min(p) {
        return Err(BasilError::DimensionMismatch(alloc::format!(
            "rank {k} outside 1..={} for a {n}x{p} matrix",
            n.min(p)
        )));
    }
    Ok(())
}

/// Full eigendecomposition of the smaller Gram matrix of `a`.
pub fn gram_spectrum(a: &DMatrix<f64>) -> Result<GramSpectrum> {
    let (n, p) = a.shape();
    if n == 0 || p == 0 {
        return Err(BasilError::DimensionMismatch("empty matrix".into()));
    }
    if let Some(pos) = a.iter().position(|v| !v.is_finite()) {
        return Err(BasilError::NonFinite { row: pos % n, col: pos / n });
    }
    let row_side = n <= p;
    let mut gram = if row_side { a * a.transpose() } else { a.tr_mul(a) };
    let m = gram.nrows();
    for i in 0..m {
        for j in 0..i {
            let s = 0.5 * (gram[(i, j)] + gram[(j, i)]);
            gram[(i, j)] = s;
            gram[(j, i)] = s;
        }
    }
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let eigenvectors = eig.eigenvectors.select_columns(&order);
    Ok(GramSpectrum { eigenvalues, eigenvectors, row_side, total_energy: a.norm_squared(), shape: (n, p) })
}

/// Leading `k` singular triplets of `a` via the small-side Gram matrix.
pub fn truncated_svd(a: &DMatrix<f64>, k: usize) -> Result<SpectralDecomposition> {
    check_rank(k, a.nrows(), a.ncols())?;
    gram_spectrum(a)?.truncate(a, k)
}

/// Spectral plug-in for the latent factors, `√n · U`.
pub fn pca_factor_estimate(svd: &SpectralDecomposition, n: usize) -> Result<DMatrix<f64>> {
    if svd.left.nrows() != n {
        return Err(BasilError::DimensionMismatch(alloc::format!(
            "left singular vectors have {} rows, expected {n}",
            svd.left.nrows()
        )));
    }
    Ok(&svd.left * math::sqrt(n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixcore::orthonormality_defect;
    use nalgebra::dmatrix;

    fn lcg_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        DMatrix::from_fn(n, p, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn embedded_diagonal() {
        let mut a = DMatrix::zeros(3, 5);
        a[(0, 0)] = 3.0;
        a[(1, 1)] = 2.0;
        a[(2, 2)] = 1.0;
        let svd = truncated_svd(&a, 2).unwrap();
        assert!((svd.singular_values[0] - 3.0).abs() < 1e-12);
        assert!((svd.singular_values[1] - 2.0).abs() < 1e-12);
        for l in 0..2 {
            assert!((svd.left[(l, l)].abs() - 1.0).abs() < 1e-12);
            assert!((svd.right[(l, l)] - 1.0).abs() < 1e-12, "sign convention");
        }
        assert!(!svd.degenerate);
    }

    #[test]
    fn rank_one() {
        let u = DVector::from_vec(vec![0.6, 0.8, 0.0]);
        let v = DVector::from_vec(vec![0.0, 1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt(), 0.0]);
        let a = &u * v.transpose() * 5.0;
        let svd = truncated_svd(&a, 1).unwrap();
        assert!((svd.singular_values[0] - 5.0).abs() < 1e-12);
        assert!((svd.left.column(0).dot(&u).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_dense_oracle_wide() {
        // Oracle: dense SVD of A itself rather than of its Gram matrix.
        let a = lcg_matrix(50, 200, 3);
        let svd = truncated_svd(&a, 10).unwrap();
        let mut dense = a.clone().svd(false, false).singular_values.as_slice().to_vec();
        dense.sort_by(|x, y| y.total_cmp(x));
        for (l, d) in dense.iter().take(10).enumerate() {
            assert!((svd.singular_values[l] - d).abs() <= 1e-8 * d);
        }
        assert!(orthonormality_defect(&svd.left) < 1e-8);
        assert!(orthonormality_defect(&svd.right) < 1e-8);
    }

    #[test]
    fn tall_matrix_uses_column_gram() {
        let a = lcg_matrix(60, 8, 5);
        let svd = truncated_svd(&a, 3).unwrap();
        let mut dense = a.clone().svd(false, false).singular_values.as_slice().to_vec();
        dense.sort_by(|x, y| y.total_cmp(x));
        for (l, d) in dense.iter().take(3).enumerate() {
            assert!((svd.singular_values[l] - d).abs() <= 1e-10 * d);
        }
        assert!(orthonormality_defect(&svd.left) < 1e-10);
    }

    #[test]
    fn degenerate_flag_and_rank_errors() {
        let a = dmatrix![1.0, 0.0, 0.0; 0.0, 0.0, 0.0];
        assert!(truncated_svd(&a, 2).unwrap().degenerate);
        assert!(truncated_svd(&a, 0).is_err());
        assert!(truncated_svd(&a, 3).is_err());
    }

    #[test]
    fn residual_energy_is_tail() {
        let a = lcg_matrix(12, 30, 9);
        let spec = gram_spectrum(&a).unwrap();
        for k in 1..12 {
            let svd = spec.truncate(&a, k).unwrap();
            let resid = (&a - svd.reconstruct()).norm_squared();
            assert!((resid - spec.residual_energy(k)).abs() < 1e-9 * spec.total_energy());
        }
    }

    #[test]
    fn pca_estimate_scaling() {
        let svd = SpectralDecomposition {
            left: DMatrix::from_column_slice(4, 1, &[0.5, 0.5, 0.5, 0.5]),
            singular_values: DVector::from_element(1, 1.0),
            right: DMatrix::from_element(1, 1, 1.0),
            degenerate: false,
        };
        let m = pca_factor_estimate(&svd, 4).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 1.0, 1.0, 1.0]);
        assert!(pca_factor_estimate(&svd, 5).is_err());
    }
}
