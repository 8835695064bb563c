//! Binary gene-set membership matrices: validation, filtering and alignment with
//! the gene order of an expression matrix.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{BasilError, Result};
use crate::matrixcore::data::check_unique;
use crate::matrixcore::DataMatrix;

/// Default minimum set size; smaller sets are filtered out.
pub const DEFAULT_MIN_GENES: usize = 10;

/// A `p × q` binary matrix: entry `(j, l)` is 1 when gene `j` belongs to set `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneSetMatrix {
    membership: DMatrix<f64>,
    gene_ids: Vec<String>,
    set_ids: Vec<String>,
}

impl GeneSetMatrix {
    pub fn new(membership: DMatrix<f64>, gene_ids: Vec<String>, set_ids: Vec<String>) -> Result<Self> {
        let (p, q) = membership.shape();
        if gene_ids.len() != p || set_ids.len() != q {
            return Err(BasilError::DimensionMismatch(alloc::format!(
                "{}x{} membership with {} gene ids and {} set ids",
                p,
                q,
                gene_ids.len(),
                set_ids.len()
            )));
        }
        for l in 0..q {
            for j in 0..p {
                let v = membership[(j, l)];
                if v != 0.0 && v != 1.0 {
                    return Err(BasilError::NonBinaryEntry { row: j, col: l, value: v });
                }
            }
        }
        check_unique(&gene_ids, "gene")?;
        check_unique(&set_ids, "gene set")?;
        Ok(GeneSetMatrix { membership, gene_ids, set_ids })
    }

    /// Builds the matrix from `(gene, set)` membership pairs. Genes and sets are
    /// ordered by first appearance; repeated pairs collapse to a single 1.
    pub fn from_memberships<I, G, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (G, S)>,
        G: Into<String>,
        S: Into<String>,
    {
        let mut gene_index: BTreeMap<String, usize> = BTreeMap::new();
        let mut set_index: BTreeMap<String, usize> = BTreeMap::new();
        let mut gene_ids = Vec::new();
        let mut set_ids = Vec::new();
        let mut entries = BTreeSet::new();
        for (g, s) in pairs {
            let (g, s) = (g.into(), s.into());
            let gi = *gene_index.entry(g.clone()).or_insert_with(|| {
                gene_ids.push(g);
                gene_ids.len() - 1
            });
            let si = *set_index.entry(s.clone()).or_insert_with(|| {
                set_ids.push(s);
                set_ids.len() - 1
            });
            entries.insert((gi, si));
        }
        let mut membership = DMatrix::zeros(gene_ids.len(), set_ids.len());
        for (gi, si) in entries {
            membership[(gi, si)] = 1.0;
        }
        Self::new(membership, gene_ids, set_ids)
    }

    pub fn n_genes(&self) -> usize {
        self.membership.nrows()
    }

    pub fn n_sets(&self) -> usize {
        self.membership.ncols()
    }

    pub fn membership(&self) -> &DMatrix<f64> {
        &self.membership
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn set_ids(&self) -> &[String] {
        &self.set_ids
    }

    /// Number of genes in each set.
    pub fn column_sums(&self) -> Vec<usize> {
        self.membership.column_iter().map(|c| c.iter().filter(|v| **v != 0.0).count()).collect()
    }

    /// Number of sets each gene belongs to.
    pub fn row_sums(&self) -> Vec<usize> {
        self.membership.row_iter().map(|r| r.iter().filter(|v| **v != 0.0).count()).collect()
    }

    fn select(&self, genes: &[usize], sets: &[usize]) -> Self {
        let membership = DMatrix::from_fn(genes.len(), sets.len(), |i, l| self.membership[(genes[i], sets[l])]);
        GeneSetMatrix {
            membership,
            gene_ids: genes.iter().map(|&j| self.gene_ids[j].clone()).collect(),
            set_ids: sets.iter().map(|&l| self.set_ids[l].clone()).collect(),
        }
    }
}

/// What `filter_gene_sets` removed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterReport {
    pub removed_sets: Vec<String>,
    pub removed_genes: Vec<String>,
    pub sets_before: usize,
    pub sets_after: usize,
    pub genes_before: usize,
    pub genes_after: usize,
}

/// Drops sets with fewer than `min_genes` members and, optionally, genes that end
/// up in no remaining set.
pub fn filter_gene_sets(
    c: &GeneSetMatrix,
    min_genes: usize,
    drop_unannotated_genes: bool,
) -> Result<(GeneSetMatrix, FilterReport)> {
    if min_genes == 0 {
        return Err(BasilError::InvalidArgument("min_genes must be at least 1".into()));
    }
    let sums = c.column_sums();
    let (kept_sets, dropped_sets): (Vec<usize>, Vec<usize>) = (0..c.n_sets()).partition(|&l| sums[l] >= min_genes);
    if kept_sets.is_empty() {
        return Err(BasilError::AllSetsFiltered { min_genes });
    }
    let mut kept_genes: Vec<usize> = (0..c.n_genes()).collect();
    let mut removed_genes = Vec::new();
    if drop_unannotated_genes {
        kept_genes.retain(|&j| {
            let annotated = kept_sets.iter().any(|&l| c.membership[(j, l)] != 0.0);
            if !annotated {
                removed_genes.push(c.gene_ids[j].clone());
            }
            annotated
        });
    }
    let filtered = c.select(&kept_genes, &kept_sets);
    let report = FilterReport {
        removed_sets: dropped_sets.iter().map(|&l| c.set_ids[l].clone()).collect(),
        removed_genes,
        sets_before: c.n_sets(),
        sets_after: filtered.n_sets(),
        genes_before: c.n_genes(),
        genes_after: filtered.n_genes(),
    };
    Ok((filtered, report))
}

/// How genes present on only one side are treated by [`align_genes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlignPolicy {
    /// Keep genes present in both the expression data and the gene sets.
    #[default]
    Intersect,
    /// Every expression gene must appear in the gene-set matrix; gene-set genes
    /// absent from the expression data are dropped.
    RequireSuperset,
}

/// Expression data and gene sets sharing one gene order.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedData {
    pub data: DataMatrix,
    pub gene_sets: GeneSetMatrix,
    pub dropped_from_data: Vec<String>,
    pub dropped_from_sets: Vec<String>,
}

/// Reorders both inputs to the common genes in lexicographic order of gene id.
pub fn align_genes(y: &DataMatrix, c: &GeneSetMatrix, policy: AlignPolicy) -> Result<AlignedData> {
    let y_index: BTreeMap<&str, usize> = y.gene_ids().iter().enumerate().map(|(j, g)| (g.as_str(), j)).collect();
    let c_index: BTreeMap<&str, usize> = c.gene_ids.iter().enumerate().map(|(j, g)| (g.as_str(), j)).collect();

    let dropped_from_data: Vec<String> =
        y_index.keys().filter(|g| !c_index.contains_key(*g)).map(|g| String::from(*g)).collect();
    if policy == AlignPolicy::RequireSuperset && !dropped_from_data.is_empty() {
        return Err(BasilError::MissingGenes { count: dropped_from_data.len(), first: dropped_from_data[0].clone() });
    }
    let dropped_from_sets: Vec<String> =
        c_index.keys().filter(|g| !y_index.contains_key(*g)).map(|g| String::from(*g)).collect();

    let common: Vec<&str> = y_index.keys().copied().filter(|g| c_index.contains_key(g)).collect();
    if common.is_empty() {
        return Err(BasilError::EmptyIntersection);
    }
    let y_cols: Vec<usize> = common.iter().map(|g| y_index[g]).collect();
    let c_rows: Vec<usize> = common.iter().map(|g| c_index[g]).collect();
    let all_sets: Vec<usize> = (0..c.n_sets()).collect();
    Ok(AlignedData {
        data: y.select_genes(&y_cols),
        gene_sets: c.select(&c_rows, &all_sets),
        dropped_from_data,
        dropped_from_sets,
    })
}
