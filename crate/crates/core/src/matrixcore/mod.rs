//! Dense linear-algebra kernel: standardization, truncated SVD through the
//! small-side Gram matrix, orthonormal subspace bases and projections.

pub(crate) mod data;
mod subspace;
mod svd;

pub use data::{standardize_columns, DataMatrix};
pub use subspace::{column_space_basis, orthonormal_basis, project_onto, SubspaceBasis, RANK_TOLERANCE};
pub use svd::{
    gram_spectrum, pca_factor_estimate, truncated_svd, GramSpectrum, SpectralDecomposition, DEGENERATE_RATIO,
};

use nalgebra::DMatrix;

/// Largest absolute entry, 0 for an empty matrix.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// `max |AᵀA − I|`, the orthonormality defect of the columns of `a`.
pub fn orthonormality_defect(a: &DMatrix<f64>) -> f64 {
    let mut g = a.tr_mul(a);
    for i in 0..g.nrows() {
        g[(i, i)] -= 1.0;
    }
    max_abs(&g)
}
