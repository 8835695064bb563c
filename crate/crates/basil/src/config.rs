//! Command arguments, which double as the serialized run configuration.
//!
//! Every command writes `resolved-config.json` to its output directory: the
//! parsed arguments with defaults filled in, presets expanded and input paths
//! made absolute. `basil rerun --config <file>` executes it again.

use std::path::{Path, PathBuf};

use basil_core::simbench::SimulationDesign;
use basil_core::AlignPolicy;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::GeneSetFormat;

pub const RESOLVED_CONFIG: &str = "resolved-config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub log_level: String,
    pub output_dir: PathBuf,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    SelectK(SelectKArgs),
    Fit(FitArgs),
    Sample(SampleArgs),
    Simulate(SimulateArgs),
    Study(StudyArgs),
    Loglik(LoglikArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SelectK(_) => "select-k",
            Command::Fit(_) => "fit",
            Command::Sample(_) => "sample",
            Command::Simulate(_) => "simulate",
            Command::Study(_) => "study",
            Command::Loglik(_) => "loglik",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SelectKArgs {
    /// Expression CSV (rows = samples, columns = genes).
    #[arg(long)]
    pub expression: PathBuf,
    /// Largest number of factors considered; defaults to the rank explaining 80% of the variance.
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Fit the raw values instead of standardized columns.
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignArg {
    Intersect,
    RequireSuperset,
}

impl From<AlignArg> for AlignPolicy {
    fn from(a: AlignArg) -> Self {
        match a {
            AlignArg::Intersect => AlignPolicy::Intersect,
            AlignArg::RequireSuperset => AlignPolicy::RequireSuperset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FitArgs {
    #[arg(long)]
    pub expression: PathBuf,
    /// Gene-set file, dense CSV or `gene<TAB>set` triplets.
    #[arg(long)]
    pub genesets: PathBuf,
    /// Defaults to dense CSV for `.csv` files and triplets otherwise.
    #[arg(long, value_enum)]
    pub genesets_format: Option<GeneSetFormat>,
    /// Fixed number of factors; otherwise chosen by the information criterion.
    #[arg(long, conflicts_with = "k_max")]
    pub k: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Gene sets with fewer members are dropped.
    #[arg(long, default_value_t = basil_core::genesets::DEFAULT_MIN_GENES)]
    pub min_genes: usize,
    /// Also drop genes that belong to no remaining set.
    #[arg(long)]
    pub drop_unannotated: bool,
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long, value_enum, default_value_t = AlignArg::Intersect)]
    pub align: AlignArg,
    /// Gene pairs sampled when estimating the coverage correction.
    #[arg(long, default_value_t = basil_core::ebayes::DEFAULT_PAIR_BUDGET)]
    pub pair_budget: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SampleArgs {
    /// Directory written by `basil fit`.
    #[arg(long)]
    pub fit_dir: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub n_draws: usize,
    /// Credible level of the correlation intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Comma-separated gene ids for the correlation summary.
    #[arg(long, value_delimiter = ',')]
    pub genes: Vec<String>,
    /// Uniformly sampled subset size, used when `--genes` is not given.
    #[arg(long, default_value_t = 100)]
    pub subset_size: usize,
    /// Draw from the uncorrected posterior (no variance inflation).
    #[arg(long)]
    pub no_coverage_correction: bool,
    /// Also export every loading draw as `draws.csv`.
    #[arg(long)]
    pub densify: bool,
}

/// Simulation design flags; unset fields come from the preset.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DesignArgs {
    /// Named design: high-signal or low-signal.
    #[arg(long, default_value = "high-signal")]
    pub preset: String,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub tau_gamma_sq: Option<f64>,
    #[arg(long)]
    pub tau_psi_sq: Option<f64>,
    #[arg(long)]
    pub sigma_sq: Option<f64>,
    /// Membership probability of the synthetic gene sets.
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long)]
    pub min_genes: Option<usize>,
    #[arg(long)]
    pub replications: Option<usize>,
}

pub fn unknown_preset(name: &str) -> CliError {
    CliError::Usage(format!("unknown preset `{name}`; valid presets: {}", SimulationDesign::PRESETS.join(", ")))
}

impl DesignArgs {
    pub fn design(&self, seed: u64) -> Result<SimulationDesign> {
        let base = SimulationDesign::preset(&self.preset).ok_or_else(|| unknown_preset(&self.preset))?;
        let design = SimulationDesign {
            n: self.n.unwrap_or(base.n),
            p: self.p.unwrap_or(base.p),
            k: self.k.unwrap_or(base.k),
            q: self.q.unwrap_or(base.q),
            tau_gamma_sq: self.tau_gamma_sq.unwrap_or(base.tau_gamma_sq),
            tau_psi_sq: self.tau_psi_sq.unwrap_or(base.tau_psi_sq),
            sigma_sq: self.sigma_sq.unwrap_or(base.sigma_sq),
            density: self.density.unwrap_or(base.density),
            min_genes: self.min_genes.unwrap_or(base.min_genes),
            n_replications: self.replications.unwrap_or(base.n_replications),
            seed,
        };
        design.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(design)
    }

    /// Fills every unset field from the preset.
    fn resolve(&mut self, seed: u64) -> Result<()> {
        let d = self.design(seed)?;
        *self = DesignArgs {
            preset: self.preset.clone(),
            n: Some(d.n),
            p: Some(d.p),
            k: Some(d.k),
            q: Some(d.q),
            tau_gamma_sq: Some(d.tau_gamma_sq),
            tau_psi_sq: Some(d.tau_psi_sq),
            sigma_sq: Some(d.sigma_sq),
            density: Some(d.density),
            min_genes: Some(d.min_genes),
            replications: Some(d.n_replications),
        };
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Use this gene-set file instead of a synthetic one; its genes fix p.
    #[arg(long)]
    pub genesets: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub genesets_format: Option<GeneSetFormat>,
    /// Also write this many held-out samples to `test.csv`.
    #[arg(long, default_value_t = 0)]
    pub n_test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Basil,
    SpectralBaseline,
    EmpiricalDiagonal,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Basil => "basil",
            Estimator::SpectralBaseline => "spectral-baseline",
            Estimator::EmpiricalDiagonal => "empirical-diagonal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct StudyArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Additional presets run with the same overrides, one scenario each.
    #[arg(long = "also-preset")]
    pub also_presets: Vec<String>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Estimator::Basil, Estimator::SpectralBaseline, Estimator::EmpiricalDiagonal])]
    pub estimators: Vec<Estimator>,
    #[arg(long, default_value_t = 30)]
    pub k_max: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_draws: usize,
    /// Genes in the coverage submatrix.
    #[arg(long, default_value_t = 200)]
    pub subset_size: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Held-out samples per replication for the test log-likelihood.
    #[arg(long, default_value_t = 500)]
    pub n_test: usize,
    /// Random train/test splits of `--expression` instead of synthetic replications.
    #[arg(long, requires_all = ["expression", "genesets"])]
    pub splits: Option<usize>,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long)]
    pub expression: Option<PathBuf>,
    #[arg(long)]
    pub genesets: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub genesets_format: Option<GeneSetFormat>,
    #[arg(long, default_value_t = basil_core::genesets::DEFAULT_MIN_GENES)]
    pub split_min_genes: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct LoglikArgs {
    #[arg(long)]
    pub fit_dir: PathBuf,
    /// Held-out expression CSV with the fit's genes.
    #[arg(long)]
    pub test: PathBuf,
}

fn absolute(path: &mut PathBuf) -> Result<()> {
    if path.is_relative() {
        let cwd = std::env::current_dir().map_err(|e| CliError::io(Path::new("."), e))?;
        *path = cwd.join(&*path);
    }
    Ok(())
}

fn absolute_opt(path: &mut Option<PathBuf>) -> Result<()> {
    path.as_mut().map(absolute).transpose().map(|_| ())
}

impl RunConfig {
    /// Fills defaults that depend on the inputs and makes paths absolute, so the
    /// serialized config re-runs the same job from any directory.
    pub fn resolve(mut self) -> Result<Self> {
        absolute(&mut self.output_dir)?;
        match &mut self.command {
            Command::SelectK(a) => absolute(&mut a.expression)?,
            Command::Fit(a) => {
                absolute(&mut a.expression)?;
                absolute(&mut a.genesets)?;
                a.genesets_format.get_or_insert(GeneSetFormat::from_extension(&a.genesets));
                if a.k == Some(0) || a.k_max == Some(0) {
                    return Err(CliError::Usage("k and k-max must be at least 1".into()));
                }
            }
            Command::Sample(a) => {
                absolute(&mut a.fit_dir)?;
                if a.n_draws == 0 {
                    return Err(CliError::Usage("--n-draws must be at least 1".into()));
                }
                if !(a.level > 0.0 && a.level < 1.0) {
                    return Err(CliError::Usage("--level must lie in (0, 1)".into()));
                }
            }
            Command::Simulate(a) => {
                absolute_opt(&mut a.genesets)?;
                if let Some(g) = &a.genesets {
                    a.genesets_format.get_or_insert(GeneSetFormat::from_extension(g));
                }
                if a.genesets.is_none() {
                    a.design.resolve(self.seed)?;
                } else if SimulationDesign::preset(&a.design.preset).is_none() {
                    return Err(unknown_preset(&a.design.preset));
                }
            }
            Command::Study(a) => {
                absolute_opt(&mut a.expression)?;
                absolute_opt(&mut a.genesets)?;
                if let Some(g) = &a.genesets {
                    a.genesets_format.get_or_insert(GeneSetFormat::from_extension(g));
                }
                if a.splits.is_none() {
                    a.design.resolve(self.seed)?;
                    for p in &a.also_presets {
                        SimulationDesign::preset(p).ok_or_else(|| unknown_preset(p))?;
                    }
                }
                if a.estimators.is_empty() {
                    return Err(CliError::Usage("no estimator selected".into()));
                }
                a.estimators.sort();
                a.estimators.dedup();
                if !(a.level >= 0.0 && a.level < 1.0) {
                    return Err(CliError::Usage("--level must lie in [0, 1)".into()));
                }
                if !(a.train_fraction > 0.0 && a.train_fraction < 1.0) {
                    return Err(CliError::Usage("--train-fraction must lie in (0, 1)".into()));
                }
            }
            Command::Loglik(a) => {
                absolute(&mut a.fit_dir)?;
                absolute(&mut a.test)?;
            }
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design_args(preset: &str) -> DesignArgs {
        DesignArgs {
            preset: preset.into(),
            n: None,
            p: None,
            k: None,
            q: None,
            tau_gamma_sq: None,
            tau_psi_sq: None,
            sigma_sq: None,
            density: None,
            min_genes: None,
            replications: None,
        }
    }

    #[test]
    fn presets_expand() {
        let d = design_args("high-signal").design(0).unwrap();
        assert_eq!((d.n, d.p, d.k, d.q), (500, 1000, 10, 100));
        assert_eq!((d.tau_gamma_sq, d.tau_psi_sq, d.sigma_sq), (0.7, 0.1, 15.0));
        let d = design_args("low-signal").design(0).unwrap();
        assert_eq!((d.tau_gamma_sq, d.tau_psi_sq, d.sigma_sq), (0.4, 0.7, 15.0));
        let err = design_args("medium").design(0).unwrap_err().to_string();
        assert!(err.contains("high-signal") && err.contains("low-signal"));
    }

    #[test]
    fn config_round_trips_through_json() {
        let mut design = design_args("low-signal");
        design.resolve(3).unwrap();
        let config = RunConfig {
            seed: 3,
            threads: 1,
            log_level: "warn".into(),
            output_dir: "/tmp/out".into(),
            command: Command::Simulate(SimulateArgs { design, genesets: None, genesets_format: None, n_test: 10 }),
        };
        let text = serde_json::to_string(&config).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), config);
    }
}
