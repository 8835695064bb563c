use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{BasilError, Result};
use crate::math;

/// An `n × p` expression matrix, one row per sample and one column per gene.
///
/// `column_means` and `column_sds` describe the affine map back to the original
/// units: `original = value * sd + mean`. For data that was never standardized
/// they are all zeros and ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    gene_ids: Vec<String>,
    standardized: bool,
    column_means: Vec<f64>,
    column_sds: Vec<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, gene_ids: Vec<String>) -> Result<Self> {
        let (n, p) = values.shape();
        if n == 0 {
            return Err(BasilError::InvalidArgument("need at least one sample".into()));
        }
        if p == 0 {
            return Err(BasilError::InvalidArgument("need at least one gene".into()));
        }
        if gene_ids.len() != p {
            return Err(BasilError::DimensionMismatch(alloc::format!("{} gene ids for {p} columns", gene_ids.len())));
        }
        for j in 0..p {
            for i in 0..n {
                if !values[(i, j)].is_finite() {
                    return Err(BasilError::NonFinite { row: i, col: j });
                }
            }
        }
        check_unique(&gene_ids, "gene")?;
        Ok(DataMatrix { values, gene_ids, standardized: false, column_means: vec![0.0; p], column_sds: vec![1.0; p] })
    }

    /// Generates gene ids `g1..gp` for quick construction in tests and simulations.
    pub fn with_default_ids(values: DMatrix<f64>) -> Result<Self> {
        let ids = (1..=values.ncols()).map(|j| alloc::format!("g{j}")).collect();
        Self::new(values, ids)
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_genes(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn column_means(&self) -> &[f64] {
        &self.column_means
    }

    pub fn column_sds(&self) -> &[f64] {
        &self.column_sds
    }

    /// Squared Frobenius norm of the values.
    pub fn frobenius_sq(&self) -> f64 {
        self.values.norm_squared()
    }

    /// Keeps the given sample rows, in order. Standardization metadata is carried over.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(BasilError::InvalidArgument("need at least one sample".into()));
        }
        let p = self.n_genes();
        let mut values = DMatrix::zeros(rows.len(), p);
        for (dst, &src) in rows.iter().enumerate() {
            if src >= self.n_samples() {
                return Err(BasilError::DimensionMismatch(alloc::format!("row {src} out of range")));
            }
            values.row_mut(dst).copy_from(&self.values.row(src));
        }
        Ok(DataMatrix { values, ..self.clone_meta() })
    }

    /// Keeps the given gene columns, in order.
    pub fn select_genes(&self, cols: &[usize]) -> Self {
        let values = self.values.select_columns(cols);
        DataMatrix {
            values,
            gene_ids: cols.iter().map(|&j| self.gene_ids[j].clone()).collect(),
            standardized: self.standardized,
            column_means: cols.iter().map(|&j| self.column_means[j]).collect(),
            column_sds: cols.iter().map(|&j| self.column_sds[j]).collect(),
        }
    }

    /// Applies a known per-column affine standardization, e.g. training-set moments
    /// to held-out data.
    pub fn apply_standardization(&self, means: &[f64], sds: &[f64]) -> Result<Self> {
        let p = self.n_genes();
        if means.len() != p || sds.len() != p {
            return Err(BasilError::DimensionMismatch(alloc::format!(
                "standardization for {} genes applied to {p}",
                means.len()
            )));
        }
        let mut values = self.values.clone();
        for j in 0..p {
            let (m, s) = (means[j], sds[j]);
            values.column_mut(j).apply(|v| *v = (*v - m) / s);
        }
        Ok(DataMatrix {
            values,
            gene_ids: self.gene_ids.clone(),
            standardized: true,
            column_means: means.to_vec(),
            column_sds: sds.to_vec(),
        })
    }

    /// Estimation (standardization, spectra, fits) needs at least two samples;
    /// held-out data may have one.
    pub(crate) fn require_estimable(&self) -> Result<()> {
        let n = self.n_samples();
        if n < 2 {
            return Err(BasilError::InvalidArgument(alloc::format!("need at least 2 samples, got {n}")));
        }
        Ok(())
    }

    fn clone_meta(&self) -> Self {
        DataMatrix {
            values: DMatrix::zeros(0, 0),
            gene_ids: self.gene_ids.clone(),
            standardized: self.standardized,
            column_means: self.column_means.clone(),
            column_sds: self.column_sds.clone(),
        }
    }
}

pub(crate) fn check_unique(ids: &[String], kind: &'static str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(BasilError::DuplicateId { kind, id: id.clone() });
        }
    }
    Ok(())
}

/// Centers every column and scales it to unit sample variance (n − 1 denominator).
///
/// The stored means and standard deviations compose with any earlier
/// standardization, so they always map back to the original units.
pub fn standardize_columns(y: &DataMatrix) -> Result<DataMatrix> {
    y.require_estimable()?;
    let (n, p) = y.values.shape();
    let mut values = y.values.clone();
    let mut means = Vec::with_capacity(p);
    let mut sds = Vec::with_capacity(p);
    for j in 0..p {
        let mut col = values.column_mut(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = math::sqrt(ss / (n - 1) as f64);
        let scale = col.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if !(sd > 1e-12 * scale) {
            return Err(BasilError::ZeroVarianceColumn { gene: y.gene_ids[j].clone() });
        }
        col.apply(|v| *v = (*v - mean) / sd);
        means.push(y.column_means[j] + y.column_sds[j] * mean);
        sds.push(y.column_sds[j] * sd);
    }
    Ok(DataMatrix { values, gene_ids: y.gene_ids.clone(), standardized: true, column_means: means, column_sds: sds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn symmetric_column() {
        let y = DataMatrix::with_default_ids(dmatrix![1.0; 2.0; 3.0]).unwrap();
        let s = standardize_columns(&y).unwrap();
        assert_eq!(s.values().as_slice(), &[-1.0, 0.0, 1.0]);
        assert_eq!(s.column_means(), &[2.0]);
        assert_eq!(s.column_sds(), &[1.0]);
        assert!(s.is_standardized());
    }

    #[test]
    fn idempotent() {
        let y = DataMatrix::with_default_ids(DMatrix::from_fn(7, 4, |i, j| {
            ((i * 13 + j * 7) % 11) as f64 + 0.3 * j as f64
        }))
        .unwrap();
        let once = standardize_columns(&y).unwrap();
        let twice = standardize_columns(&once).unwrap();
        assert!((once.values() - twice.values()).amax() < 1e-12);
        for j in 0..4 {
            assert!((once.column_means()[j] - twice.column_means()[j]).abs() < 1e-12);
            assert!((once.column_sds()[j] - twice.column_sds()[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn moments_after_standardization() {
        // Oracle: recompute the moments directly from the output.
        let y = DataMatrix::with_default_ids(DMatrix::from_fn(10, 5, |i, j| {
            let x = ((i * 31 + j * 17 + 3) % 23) as f64;
            x * x * 0.1 - j as f64
        }))
        .unwrap();
        let s = standardize_columns(&y).unwrap();
        for col in s.values().column_iter() {
            let mean = col.sum() / 10.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_variance_column_names_gene() {
        let y = DataMatrix::new(dmatrix![1.0, 2.0; 1.0, 3.0; 1.0, 5.0], vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(standardize_columns(&y), Err(BasilError::ZeroVarianceColumn { gene: "a".into() }));
    }

    #[test]
    fn construction_validates() {
        assert!(DataMatrix::with_default_ids(DMatrix::zeros(0, 3)).is_err());
        let single = DataMatrix::with_default_ids(dmatrix![1.0, 2.0, 4.0]).unwrap();
        assert!(standardize_columns(&single).is_err());
        assert!(crate::selection::select_k(&single, None).is_err());
        let nan = dmatrix![1.0, f64::NAN; 2.0, 3.0];
        assert_eq!(DataMatrix::with_default_ids(nan), Err(BasilError::NonFinite { row: 0, col: 1 }));
        let dup = DataMatrix::new(DMatrix::zeros(2, 2), vec!["x".into(), "x".into()]);
        assert!(matches!(dup, Err(BasilError::DuplicateId { .. })));
    }
}
