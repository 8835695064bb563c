use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{BasilError, Result};
use crate::genesets::GeneSetMatrix;

/// Singular values below this fraction of the largest count as zero when
/// determining the numerical rank of a gene-set matrix.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Orthonormal basis `B` (`p × r`) of the column space of a `p × q` matrix `C`.
///
/// The projector `P = BBᵀ` is never formed; projections are applied as `B(BᵀA)`.
/// The basis consists of the left singular vectors of `C` for its `r` nonzero
/// singular values, and the matching right singular vectors are kept so that the
/// Moore-Penrose pseudo-inverse of `C` can be applied without refactoring.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    basis: DMatrix<f64>,
    singular_values: Vec<f64>,
    // q × r, such that pinv(C) = pinv_coef · Bᵀ.
    pinv_coef: DMatrix<f64>,
}

impl SubspaceBasis {
    pub fn dim_ambient(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim_subspace(&self) -> usize {
        self.basis.ncols()
    }

    /// Number of columns of the matrix the basis was built from.
    pub fn source_columns(&self) -> usize {
        self.pinv_coef.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// All singular values of the source matrix, descending.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.dim_subspace() < self.source_columns()
    }

    fn check_rows(&self, a: &DMatrix<f64>) -> Result<()> {
        if a.nrows() != self.dim_ambient() {
            return Err(BasilError::DimensionMismatch(alloc::format!(
                "matrix with {} rows projected onto a subspace of R^{}",
                a.nrows(),
                self.dim_ambient()
            )));
        }
        Ok(())
    }

    /// Coordinates `BᵀA` (`r × m`).
    pub fn coordinates(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows(a)?;
        Ok(self.basis.tr_mul(a))
    }

    /// Lifts coordinates back to the ambient space, `B · coords`.
    pub fn lift(&self, coords: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if coords.nrows() != self.dim_subspace() {
            return Err(BasilError::DimensionMismatch(alloc::format!(
                "{} coordinates for a {}-dimensional subspace",
                coords.nrows(),
                self.dim_subspace()
            )));
        }
        Ok(&self.basis * coords)
    }

    /// `pinv(C) · A` given the coordinates `BᵀA`.
    pub fn pseudo_inverse_from_coordinates(&self, coords: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if coords.nrows() != self.dim_subspace() {
            return Err(BasilError::DimensionMismatch("coordinate rows".into()));
        }
        Ok(&self.pinv_coef * coords)
    }
}

/// Orthonormal basis of the column space of an arbitrary real matrix.
///
/// All-zero rows are dropped before a Householder QR; the singular values of `C`
/// are then those of the small triangular factor, whose SVD also yields the
/// left singular vectors. A rank-zero input yields an empty (`p × 0`) basis.
pub fn orthonormal_basis(c: &DMatrix<f64>) -> Result<SubspaceBasis> {
    let (p, q) = c.shape();
    if p == 0 || q == 0 {
        return Err(BasilError::EmptyGeneSetMatrix);
    }
    let active: Vec<usize> = (0..p).filter(|&i| c.row(i).iter().any(|v| *v != 0.0)).collect();
    if active.is_empty() {
        return Ok(SubspaceBasis {
            basis: DMatrix::zeros(p, 0),
            singular_values: alloc::vec![0.0; q.min(p)],
            pinv_coef: DMatrix::zeros(q, 0),
        });
    }
    let compact = if active.len() == p { c.clone() } else { c.select_rows(&active) };
    let qr = compact.qr();
    let q_factor = qr.q();
    let r_factor = qr.r();
    let svd = r_factor.svd(true, true);
    let u_r = svd.u.ok_or_else(|| BasilError::Numerical("SVD of R failed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| BasilError::Numerical("SVD of R failed".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let s1 = singular_values[0];
    let keep: Vec<usize> =
        order.iter().copied().filter(|&i| s1 > 0.0 && svd.singular_values[i] > RANK_TOLERANCE * s1).collect();
    let r = keep.len();

    let compact_basis = q_factor * u_r.select_columns(&keep);
    let basis = if active.len() == p {
        compact_basis
    } else {
        let mut full = DMatrix::zeros(p, r);
        for (src, &dst) in active.iter().enumerate() {
            full.row_mut(dst).copy_from(&compact_basis.row(src));
        }
        full
    };
    let mut pinv_coef = DMatrix::zeros(q, r);
    for (col, &i) in keep.iter().enumerate() {
        let inv = 1.0 / svd.singular_values[i];
        for j in 0..q {
            pinv_coef[(j, col)] = v_t[(i, j)] * inv;
        }
    }
    Ok(SubspaceBasis { basis, singular_values, pinv_coef })
}

/// Orthonormal basis of the span of the gene sets.
///
/// Fails with `EmptyGeneSetMatrix` when there are no sets or no memberships at all.
/// Callers should warn when the result is rank deficient.
pub fn column_space_basis(c: &GeneSetMatrix) -> Result<SubspaceBasis> {
    let basis = orthonormal_basis(c.membership())?;
    if basis.dim_subspace() == 0 {
        return Err(BasilError::EmptyGeneSetMatrix);
    }
    Ok(basis)
}

/// `B(BᵀA)`, or `A − B(BᵀA)` when `complement` is set.
pub fn project_onto(b: &SubspaceBasis, a: &DMatrix<f64>, complement: bool) -> Result<DMatrix<f64>> {
    let proj = b.lift(&b.coordinates(a)?)?;
    Ok(if complement { a - proj } else { proj })
}
