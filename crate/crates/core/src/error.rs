use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by the model and its numerical kernels.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BasilError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("column for gene `{gene}` has zero variance")]
    ZeroVarianceColumn { gene: String },

    #[error("duplicate {kind} identifier `{id}`")]
    DuplicateId { kind: &'static str, id: String },

    #[error("gene-set matrix entry ({row}, {col}) = {value} is not binary")]
    NonBinaryEntry { row: usize, col: usize, value: f64 },

    #[error("gene-set matrix is empty or has no nonzero entry")]
    EmptyGeneSetMatrix,

    #[error("no gene set has at least {min_genes} genes")]
    AllSetsFiltered { min_genes: usize },

    #[error("expression data and gene sets share no gene")]
    EmptyIntersection,

    #[error("{count} expression genes are absent from the gene sets (first: {first})")]
    MissingGenes { count: usize, first: String },

    #[error("expression and gene-set gene orders differ; align the genes first")]
    GenesNotAligned,

    #[error("residual variance is numerically zero at rank {k} (perfect fit)")]
    DegenerateResidual { k: usize },

    #[error("posterior mean of the noise variance is undefined for v_n = {v_n}")]
    UndefinedMean { v_n: f64 },

    #[error("gene subset of size {size} exceeds the cap of {cap}")]
    SubsetTooLarge { size: usize, cap: usize },

    #[error("{n_draws} posterior draws are fewer than the {required} required")]
    InsufficientDraws { n_draws: usize, required: usize },

    #[error("density {density} cannot give {min_genes} genes per set out of {p}")]
    InfeasibleDensity { density: f64, p: usize, min_genes: usize },

    #[error("true loading Gram matrix is zero")]
    ZeroTruth,

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl BasilError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            BasilError::DegenerateResidual { .. }
                | BasilError::UndefinedMean { .. }
                | BasilError::ZeroTruth
                | BasilError::Numerical(_)
        )
    }
}

pub type Result<T> = core::result::Result<T, BasilError>;

/// Non-fatal conditions reported alongside results.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// The gene-set matrix has numerical rank below its column count.
    RankDeficientGeneSets { n_sets: usize, rank: usize },
    /// A prior variance estimate is exactly zero; that component is collapsed.
    InfiniteShrinkage { component: Component },
    /// The information criterion profile stopped early at a perfect fit.
    ProfileTruncated { at_k: usize },
    /// The requested rank had a numerically zero singular value and was reduced.
    RankReduced { from: usize, to: usize },
    /// Gene pairs with zero loading rows were skipped while estimating rho.
    ZeroRowPairsSkipped { count: usize },
    /// Genes were dropped while aligning expression data and gene sets.
    GenesDropped { from_data: usize, from_sets: usize },
    /// Free-form warning.
    Other(String),
}

/// The two loading blocks of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    /// Part of the loadings lying in the span of the gene sets.
    GeneSet,
    /// Part of the loadings orthogonal to the gene sets.
    Residual,
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Component::GeneSet => f.write_str("gene-set"),
            Component::Residual => f.write_str("residual"),
        }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::RankDeficientGeneSets { n_sets, rank } => {
                write!(f, "gene-set matrix has rank {rank} < {n_sets} sets; using the pseudo-inverse")
            }
            Warning::InfiniteShrinkage { component } => {
                write!(f, "estimated prior variance of the {component} loadings is zero; component set to zero")
            }
            Warning::ProfileTruncated { at_k } => {
                write!(f, "perfect fit at k = {at_k}; JIC profile truncated")
            }
            Warning::RankReduced { from, to } => {
                write!(f, "k reduced from {from} to {to}: trailing singular values are zero")
            }
            Warning::ZeroRowPairsSkipped { count } => {
                write!(f, "{count} gene pairs with zero loadings skipped in rho")
            }
            Warning::GenesDropped { from_data, from_sets } => {
                write!(f, "alignment dropped {from_data} expression genes and {from_sets} gene-set genes")
            }
            Warning::Other(msg) => f.write_str(msg),
        }
    }
}

/// Collects warnings into a list, for APIs that return them with a result.
pub(crate) fn push_unique(list: &mut Vec<Warning>, w: Warning) {
    if !list.contains(&w) {
        list.push(w);
    }
}
