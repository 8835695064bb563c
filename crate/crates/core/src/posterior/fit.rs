use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::{shrinkage_factor, PosteriorParams};
use crate::ebayes::{self, Hyperparameters, RhoEstimate, TauEstimate, DEFAULT_PAIR_BUDGET};
use crate::error::{push_unique, BasilError, Component, Result, Warning};
use crate::genesets::GeneSetMatrix;
use crate::math;
use crate::matrixcore::{
    column_space_basis, gram_spectrum, max_abs, orthonormality_defect, pca_factor_estimate, standardize_columns,
    DataMatrix, SpectralDecomposition, SubspaceBasis, DEGENERATE_RATIO,
};
use crate::selection::{select_k_from, JicProfile};

/// How the number of factors is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KChoice {
    Fixed(usize),
    /// Minimize the information criterion over `1..=k_max`; `None` uses the
    /// 80%-of-variance default.
    Select {
        k_max: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub k: KChoice,
    /// Standardize the columns of `Y` before fitting.
    pub standardize: bool,
    pub pair_budget: usize,
    /// Seed for the gene-pair sample behind `rho`.
    pub seed: u64,
    pub v0: f64,
    pub sigma0_sq: f64,
    /// Replaces the estimated `(τ_Γ², τ_Ψ²)`; `+∞` disables shrinkage.
    pub tau_override: Option<(f64, f64)>,
    pub rho_override: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            k: KChoice::Select { k_max: None },
            standardize: true,
            pair_budget: DEFAULT_PAIR_BUDGET,
            seed: 0,
            v0: 1.0,
            sigma0_sq: 1.0,
            tau_override: None,
            rho_override: None,
        }
    }
}

/// Identity checks evaluated on every fit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitDiagnostics {
    /// `max |Cᵀ Ψ̄|`.
    pub max_abs_ct_psi: f64,
    /// `max |Λ̄ − C Γ̄ − Ψ̄|`; only zero when `C` has full column rank.
    pub max_abs_decomposition: f64,
    /// `max |(P A + (I − P) A) − A|` with `A = VD`.
    pub projection_identity: f64,
    pub left_orthonormality: f64,
    pub right_orthonormality: f64,
    pub basis_orthonormality: f64,
    /// Gene-set data term of `σ_n²`, `‖YB‖² − ‖M̂ᵀYB‖²/(n + τ_Γ⁻²)`.
    pub sigma_term_c: f64,
    /// Residual data term of `σ_n²`.
    pub sigma_term_n: f64,
}

/// Result of fitting the model: spectral factors, hyperparameters and the
/// closed-form posterior quantities.
#[derive(Debug, Clone)]
pub struct FactorModelFit {
    pub k: usize,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub gene_ids: Vec<String>,
    pub set_ids: Vec<String>,
    pub column_means: Vec<f64>,
    pub column_sds: Vec<f64>,
    pub basis: SubspaceBasis,
    pub svd: SpectralDecomposition,
    /// `√n U`, the spectral plug-in for the latent factors.
    pub m_hat: DMatrix<f64>,
    pub hyper: Hyperparameters,
    pub tau: TauEstimate,
    /// `None` when `rho` was set by hand.
    pub rho_estimate: Option<RhoEstimate>,
    pub shrink_c: f64,
    pub shrink_n: f64,
    pub v_n: f64,
    pub sigma_n_sq: f64,
    pub lambda_bar: DMatrix<f64>,
    pub gamma_bar: DMatrix<f64>,
    pub psi_bar: DMatrix<f64>,
    pub profile: Option<JicProfile>,
    pub diagnostics: FitDiagnostics,
    pub warnings: Vec<Warning>,
}

impl FactorModelFit {
    pub fn posterior_params(&self) -> PosteriorParams {
        PosteriorParams {
            lambda_bar: self.lambda_bar.clone(),
            basis: self.basis.basis().clone(),
            shrink_c: self.shrink_c,
            shrink_n: self.shrink_n,
            rho: self.hyper.rho,
            v_n: self.v_n,
            sigma_n_sq: self.sigma_n_sq,
        }
    }
}

fn check_config(config: &FitConfig) -> Result<()> {
    if config.pair_budget == 0 {
        return Err(BasilError::InvalidArgument("pair_budget must be at least 1".into()));
    }
    if !(config.v0 > 0.0 && config.v0.is_finite() && config.sigma0_sq > 0.0 && config.sigma0_sq.is_finite()) {
        return Err(BasilError::InvalidArgument("v0 and sigma0_sq must be positive".into()));
    }
    if let Some((tg, tp)) = config.tau_override {
        if !(tg >= 0.0 && tp >= 0.0) {
            return Err(BasilError::InvalidArgument("tau overrides must be >= 0".into()));
        }
    }
    if let Some(rho) = config.rho_override {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(BasilError::InvalidArgument("rho override must be positive".into()));
        }
    }
    Ok(())
}

/// Fits the model to expression data `y` and gene sets `c`, whose genes must be
/// aligned (see [`crate::genesets::align_genes`]).
pub fn fit(y: &DataMatrix, c: &GeneSetMatrix, config: &FitConfig) -> Result<FactorModelFit> {
    check_config(config)?;
    if y.gene_ids() != c.gene_ids() {
        return Err(BasilError::GenesNotAligned);
    }
    y.require_estimable()?;
    let y = if config.standardize { standardize_columns(y)? } else { y.clone() };
    let (n, p) = (y.n_samples(), y.n_genes());
    let q = c.n_sets();
    let mut warnings = Vec::new();

    let spectrum = gram_spectrum(y.values())?;
    let (mut k, profile) = match config.k {
        KChoice::Fixed(k) => {
            if k == 0 || k >= n.min(p) {
                return Err(BasilError::InvalidArgument(alloc::format!(
                    "k = {k} must satisfy 1 <= k < min(n, p) = {}",
                    n.min(p)
                )));
            }
            (k, None)
        }
        KChoice::Select { k_max } => {
            let profile = select_k_from(&spectrum, k_max)?;
            warnings.extend(profile.warnings.iter().cloned());
            (profile.k_selected, Some(profile))
        }
    };
    let d1 = spectrum.singular_value(0);
    let requested = k;
    while k > 1 && !(spectrum.singular_value(k - 1) > DEGENERATE_RATIO * d1) {
        k -= 1;
    }
    if k != requested {
        warnings.push(Warning::RankReduced { from: requested, to: k });
    }
    let svd = spectrum.truncate(y.values(), k)?;

    let basis = column_space_basis(c)?;
    let r = basis.dim_subspace();
    if r < q {
        warnings.push(Warning::RankDeficientGeneSets { n_sets: q, rank: r });
    }
    let m_hat = pca_factor_estimate(&svd, n)?;

    let total = spectrum.total_energy();
    let tail = spectrum.residual_energy(k);
    let sigma_hat_sq = ebayes::sigma_hat_from_residual(tail, total, n, p, k)?;

    let vd = svd.scaled_right();
    let coords = basis.coordinates(&vd)?;
    let vd_c = basis.lift(&coords)?;
    let vd_n = &vd - &vd_c;
    let tau = ebayes::tau_from_energies(coords.norm_squared(), vd_n.norm_squared(), n, p, r, k, sigma_hat_sq);
    let (tau_gamma_sq, tau_psi_sq) = config.tau_override.unwrap_or((tau.tau_gamma_sq, tau.tau_psi_sq));
    if tau_gamma_sq == 0.0 {
        push_unique(&mut warnings, Warning::InfiniteShrinkage { component: Component::GeneSet });
    }
    if tau_psi_sq == 0.0 {
        push_unique(&mut warnings, Warning::InfiniteShrinkage { component: Component::Residual });
    }
    let shrink_c = shrinkage_factor(n, tau_gamma_sq);
    let shrink_n = shrinkage_factor(n, tau_psi_sq);
    let sqrt_n = math::sqrt(n as f64);

    let psi_bar = &vd_n * (sqrt_n * shrink_n);
    let lambda_bar = &vd_c * (sqrt_n * shrink_c) + &psi_bar;
    let gamma_bar = basis.pseudo_inverse_from_coordinates(&coords)? * (sqrt_n * shrink_c);

    let (rho, rho_estimate) = match config.rho_override {
        Some(rho) => (rho, None),
        None => {
            let est = ebayes::rho_hat(&lambda_bar, sigma_hat_sq, config.pair_budget, config.seed)?;
            if est.pairs_skipped > 0 {
                warnings.push(Warning::ZeroRowPairsSkipped { count: est.pairs_skipped });
            }
            (est.rho, Some(est))
        }
    };

    // Noise posterior. Each data term splits into a residual energy outside the
    // span of U plus a shrunken part inside it, both nonnegative.
    let nf = n as f64;
    let yb = y.values() * basis.basis();
    let u_yb = svd.left.tr_mul(&yb);
    let yb_outside = (&yb - &svd.left * &u_yb).norm_squared();
    let spectral_c = u_yb.norm_squared();
    let captured: f64 = svd.singular_values.iter().map(|d| d * d).sum();
    let spectral_n = (captured - spectral_c).max(0.0);
    let yn_outside = tail - yb_outside;
    let sigma_term_c = yb_outside + (1.0 - nf * shrink_c).max(0.0) * spectral_c;
    let sigma_term_n = yn_outside + (1.0 - nf * shrink_n).max(0.0) * spectral_n;
    let tolerance = 1e-9 * total.max(1.0);
    if sigma_term_c < -tolerance || sigma_term_n < -tolerance {
        return Err(BasilError::Numerical(alloc::format!(
            "negative noise posterior terms ({sigma_term_c}, {sigma_term_n})"
        )));
    }
    // σ² is shared by all p genes, so the update pools n·p residual degrees of
    // freedom.
    let v_n = config.v0 + nf * p as f64;
    let sigma_n_sq = (config.v0 * config.sigma0_sq + sigma_term_c.max(0.0) + sigma_term_n.max(0.0)) / v_n;

    let ct_psi = c.membership().tr_mul(&psi_bar);
    let decomposition = &lambda_bar - c.membership() * &gamma_bar - &psi_bar;
    let recomposed = (&vd_c + &vd_n) - &vd;
    let diagnostics = FitDiagnostics {
        max_abs_ct_psi: max_abs(&ct_psi),
        max_abs_decomposition: max_abs(&decomposition),
        projection_identity: max_abs(&recomposed),
        left_orthonormality: orthonormality_defect(&svd.left),
        right_orthonormality: orthonormality_defect(&svd.right),
        basis_orthonormality: orthonormality_defect(basis.basis()),
        sigma_term_c,
        sigma_term_n,
    };

    let hyper = Hyperparameters {
        v0: config.v0,
        sigma0_sq: config.sigma0_sq,
        tau_gamma_sq,
        tau_psi_sq,
        rho,
        sigma_hat_sq,
        pair_budget: config.pair_budget,
    };
    Ok(FactorModelFit {
        k,
        n,
        p,
        q,
        r,
        gene_ids: y.gene_ids().to_vec(),
        set_ids: c.set_ids().to_vec(),
        column_means: y.column_means().to_vec(),
        column_sds: y.column_sds().to_vec(),
        basis,
        svd,
        m_hat,
        hyper,
        tau,
        rho_estimate,
        shrink_c,
        shrink_n,
        v_n,
        sigma_n_sq,
        lambda_bar,
        gamma_bar,
        psi_bar,
        profile,
        diagnostics,
        warnings,
    })
}
