//! Gene-set informed Bayesian factor analysis for high-dimensional expression data.
//!
//! The loadings of a Gaussian factor model are split into a component lying in the
//! column space of a binary gene-set matrix and a component orthogonal to it, each
//! with its own shrinkage prior. Latent factors are pre-estimated from a truncated
//! SVD, after which the loadings and the noise variance have a conjugate
//! Normal / inverse-gamma posterior that can be sampled exactly and independently.
//!
//! The crate is `no_std` compatible (with `alloc`). The `std` feature enables the
//! optimized matrix multiplication kernels and `parallel` enables rayon-backed
//! parallelism over independent work items; results never depend on the number of
//! threads.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod ebayes;
pub mod error;
pub mod genesets;
pub mod matrixcore;
pub mod posterior;
pub mod rng;
pub mod selection;
pub mod simbench;

mod math;
mod par;

pub use error::{BasilError, Result, Warning};
pub use genesets::{AlignPolicy, GeneSetMatrix};
pub use matrixcore::{DataMatrix, SpectralDecomposition, SubspaceBasis};
pub use posterior::{fit, FactorModelFit, FitConfig, KChoice, LowRankCovariance, PosteriorDraws};

pub use nalgebra::{DMatrix, DVector};
