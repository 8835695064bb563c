//! The fit directory written by `basil fit` and read back by `sample` and
//! `loglik`.
//!
//! | file | content |
//! |---|---|
//! | `fit.json` | dimensions, hyperparameters, posterior scalars, identity diagnostics, warnings |
//! | `lambda_bar.csv` | posterior mean loadings, genes × factors |
//! | `gamma_bar.csv` | gene-set coefficients, sets × factors |
//! | `psi_bar.csv` | residual loadings, genes × factors |
//! | `basis.csv` | orthonormal basis of the gene-set span, genes × r |
//! | `standardization.csv` | per-gene mean and standard deviation used |
//! | `jic_profile.csv` | information criterion per candidate k (when selected) |
//! | `timings.json` | wall-clock seconds per stage (not reproducible) |

use std::path::Path;

use basil_core::matrixcore::DataMatrix;
use basil_core::posterior::{covariance_posterior_mean, PosteriorParams};
use basil_core::selection::JicProfile;
use basil_core::{DMatrix, FactorModelFit};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::{self, fmt_f64, numbered};

pub const FIT_JSON: &str = "fit.json";
pub const LAMBDA_BAR: &str = "lambda_bar.csv";
pub const GAMMA_BAR: &str = "gamma_bar.csv";
pub const PSI_BAR: &str = "psi_bar.csv";
pub const BASIS: &str = "basis.csv";
pub const STANDARDIZATION: &str = "standardization.csv";
pub const JIC_PROFILE: &str = "jic_profile.csv";
pub const TIMINGS: &str = "timings.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub max_abs_ct_psi: f64,
    pub max_abs_decomposition: f64,
    pub projection_identity: f64,
    pub left_orthonormality: f64,
    pub right_orthonormality: f64,
    pub basis_orthonormality: f64,
    pub sigma_term_c: f64,
    pub sigma_term_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoReport {
    pub pairs_evaluated: usize,
    pub pairs_skipped: usize,
    pub exhaustive: bool,
}

/// Contents of `fit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub k: usize,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub standardized: bool,
    pub tau_gamma_sq: f64,
    pub tau_psi_sq: f64,
    /// `τ̂_Γ² / τ̂_Ψ²`; null when the residual variance estimate is zero.
    pub tau_ratio: Option<f64>,
    pub sigma_hat_sq: f64,
    pub rho: f64,
    pub rho_estimate: Option<RhoReport>,
    pub v0: f64,
    pub sigma0_sq: f64,
    pub v_n: f64,
    pub sigma_n_sq: f64,
    pub shrink_c: f64,
    pub shrink_n: f64,
    /// Posterior mean of `σ²`.
    pub sigma_sq_mean: f64,
    /// Isotropic part of the posterior mean covariance.
    pub delta_bar: f64,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<String>,
    pub genes_dropped_from_data: Vec<String>,
    pub genes_dropped_from_sets: Vec<String>,
    pub sets_filtered: Vec<String>,
}

impl FitSummary {
    pub fn posterior_params(&self, lambda_bar: DMatrix<f64>, basis: DMatrix<f64>) -> PosteriorParams {
        PosteriorParams {
            lambda_bar,
            basis,
            shrink_c: self.shrink_c,
            shrink_n: self.shrink_n,
            rho: self.rho,
            v_n: self.v_n,
            sigma_n_sq: self.sigma_n_sq,
        }
    }
}

/// What alignment and filtering removed before the fit.
#[derive(Debug, Clone, Default)]
pub struct Preprocessing {
    pub genes_dropped_from_data: Vec<String>,
    pub genes_dropped_from_sets: Vec<String>,
    pub sets_filtered: Vec<String>,
}

pub fn summarize(fit: &FactorModelFit, standardized: bool, pre: Preprocessing) -> Result<FitSummary> {
    let d = fit.diagnostics;
    let params = fit.posterior_params();
    let ratio = fit.hyper.tau_gamma_sq / fit.hyper.tau_psi_sq;
    Ok(FitSummary {
        k: fit.k,
        n: fit.n,
        p: fit.p,
        q: fit.q,
        r: fit.r,
        standardized,
        tau_gamma_sq: fit.hyper.tau_gamma_sq,
        tau_psi_sq: fit.hyper.tau_psi_sq,
        tau_ratio: ratio.is_finite().then_some(ratio),
        sigma_hat_sq: fit.hyper.sigma_hat_sq,
        rho: fit.hyper.rho,
        rho_estimate: fit.rho_estimate.as_ref().map(|r| RhoReport {
            pairs_evaluated: r.pairs_evaluated,
            pairs_skipped: r.pairs_skipped,
            exhaustive: r.exhaustive,
        }),
        v0: fit.hyper.v0,
        sigma0_sq: fit.hyper.sigma0_sq,
        v_n: fit.v_n,
        sigma_n_sq: fit.sigma_n_sq,
        shrink_c: fit.shrink_c,
        shrink_n: fit.shrink_n,
        sigma_sq_mean: params.sigma_sq_mean()?,
        delta_bar: covariance_posterior_mean(&params)?.noise_var(),
        diagnostics: Diagnostics {
            max_abs_ct_psi: d.max_abs_ct_psi,
            max_abs_decomposition: d.max_abs_decomposition,
            projection_identity: d.projection_identity,
            left_orthonormality: d.left_orthonormality,
            right_orthonormality: d.right_orthonormality,
            basis_orthonormality: d.basis_orthonormality,
            sigma_term_c: d.sigma_term_c,
            sigma_term_n: d.sigma_term_n,
        },
        warnings: fit.warnings.iter().map(ToString::to_string).collect(),
        genes_dropped_from_data: pre.genes_dropped_from_data,
        genes_dropped_from_sets: pre.genes_dropped_from_sets,
        sets_filtered: pre.sets_filtered,
    })
}

pub fn write_jic_profile(path: &Path, profile: &JicProfile) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e.into()))?;
    let io = |e: csv::Error| CliError::io(path, e.into());
    w.write_record(["k", "loglik_hat", "penalty", "jic"]).map_err(io)?;
    for i in 0..profile.k_values.len() {
        w.write_record([
            profile.k_values[i].to_string(),
            fmt_f64(profile.loglik_hat[i]),
            fmt_f64(profile.penalty[i]),
            fmt_f64(profile.jic[i]),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_standardization(path: &Path, genes: &[String], means: &[f64], sds: &[f64]) -> Result<()> {
    let values = DMatrix::from_fn(genes.len(), 2, |j, c| if c == 0 { means[j] } else { sds[j] });
    io::write_labeled_matrix(path, "gene", genes, &["mean".into(), "sd".into()], &values)
}

/// Writes every reproducible artifact of a fit into `dir`.
pub fn write_fit(dir: &Path, fit: &FactorModelFit, summary: &FitSummary) -> Result<()> {
    let factors = numbered("factor", fit.k);
    io::write_json(&dir.join(FIT_JSON), summary)?;
    io::write_labeled_matrix(&dir.join(LAMBDA_BAR), "gene", &fit.gene_ids, &factors, &fit.lambda_bar)?;
    io::write_labeled_matrix(&dir.join(GAMMA_BAR), "set", &fit.set_ids, &factors, &fit.gamma_bar)?;
    io::write_labeled_matrix(&dir.join(PSI_BAR), "gene", &fit.gene_ids, &factors, &fit.psi_bar)?;
    io::write_labeled_matrix(&dir.join(BASIS), "gene", &fit.gene_ids, &numbered("basis", fit.r), fit.basis.basis())?;
    write_standardization(&dir.join(STANDARDIZATION), &fit.gene_ids, &fit.column_means, &fit.column_sds)?;
    if let Some(profile) = &fit.profile {
        write_jic_profile(&dir.join(JIC_PROFILE), profile)?;
    }
    Ok(())
}

/// A fit reloaded from its directory.
#[derive(Debug, Clone)]
pub struct SavedFit {
    pub summary: FitSummary,
    pub gene_ids: Vec<String>,
    pub params: PosteriorParams,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl SavedFit {
    pub fn load(dir: &Path) -> Result<Self> {
        let summary: FitSummary = io::read_json(&dir.join(FIT_JSON))?;
        let lambda = io::read_labeled_matrix(&dir.join(LAMBDA_BAR))?;
        let basis = io::read_labeled_matrix(&dir.join(BASIS))?;
        let scale = io::read_labeled_matrix(&dir.join(STANDARDIZATION))?;
        if basis.row_ids != lambda.row_ids || scale.row_ids != lambda.row_ids {
            return Err(CliError::Usage(format!("{}: gene ids differ between fit files", dir.display())));
        }
        if lambda.values.ncols() != summary.k || basis.values.ncols() != summary.r {
            return Err(CliError::Usage(format!("{}: matrix shapes disagree with fit.json", dir.display())));
        }
        let params = summary.posterior_params(lambda.values, basis.values);
        params.validate()?;
        Ok(SavedFit {
            summary,
            gene_ids: lambda.row_ids,
            params,
            means: scale.values.column(0).iter().copied().collect(),
            sds: scale.values.column(1).iter().copied().collect(),
        })
    }

    /// Puts held-out data on the fit's gene order and scale.
    pub fn prepare_test(&self, test: &DataMatrix, path: &Path) -> Result<DataMatrix> {
        let p = self.gene_ids.len();
        if test.n_genes() != p {
            return Err(CliError::Usage(format!(
                "{}: test data has {} genes, the fit has {p}",
                path.display(),
                test.n_genes()
            )));
        }
        let position: std::collections::HashMap<&str, usize> =
            test.gene_ids().iter().enumerate().map(|(j, g)| (g.as_str(), j)).collect();
        let order = self
            .gene_ids
            .iter()
            .map(|g| {
                position.get(g.as_str()).copied().ok_or_else(|| {
                    CliError::Usage(format!("{}: fit gene `{g}` is missing from the test data", path.display()))
                })
            })
            .collect::<Result<Vec<usize>>>()?;
        let aligned = test.select_genes(&order);
        if self.summary.standardized {
            Ok(aligned.apply_standardization(&self.means, &self.sds)?)
        } else {
            Ok(aligned)
        }
    }
}
