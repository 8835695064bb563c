//! Replication studies: synthetic replications under a design, or random
//! train/test splits of one data set, each scored for every estimator.
//!
//! Output files:
//! - `study.csv`: one row per `(scenario, replication, estimator, metric)`.
//! - `summary.json`: mean and standard error of each metric, plus failures.
//! - `timings.csv`: wall-clock seconds per stage (not reproducible).

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use basil_core::genesets::{align_genes, filter_gene_sets, AlignPolicy};
use basil_core::matrixcore::standardize_columns;
use basil_core::posterior::{covariance_posterior_mean, sample_posterior, SampleOptions};
use basil_core::rng::{derive_seed, tag};
use basil_core::selection::select_k;
use basil_core::simbench::{
    coverage_rate, diagonal_loglik, empirical_variances, gene_subset, generate_random_genesets, generate_synthetic,
    generate_test_data, oos_loglik, relative_frobenius_error, spectral_baseline, SimulationDesign,
};
use basil_core::{fit, BasilError, DMatrix, DataMatrix, FitConfig, GeneSetMatrix, KChoice};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Estimator;
use crate::error::{CliError, Result};
use crate::io::fmt_f64;

/// Settings shared by every replication.
#[derive(Debug, Clone)]
pub struct StudyOptions {
    pub estimators: Vec<Estimator>,
    pub k_max: usize,
    pub n_draws: usize,
    pub subset_size: usize,
    pub level: f64,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub scenario: String,
    pub replication: usize,
    pub estimator: Estimator,
    pub metric: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub scenario: String,
    pub replication: usize,
    pub estimator: Estimator,
    pub stage: &'static str,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub scenario: String,
    pub replication: usize,
    pub estimator: Option<&'static str>,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct StudyReport {
    pub records: Vec<Record>,
    pub timings: Vec<Timing>,
    pub failures: Vec<Failure>,
}

impl StudyReport {
    pub fn extend(&mut self, other: StudyReport) {
        self.records.extend(other.records);
        self.timings.extend(other.timings);
        self.failures.extend(other.failures);
    }

    /// Values of one metric for one estimator, in replication order.
    pub fn values(&self, scenario: &str, estimator: Estimator, metric: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.scenario == scenario && r.estimator == estimator && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }
}

// Collects the output of one replication.
struct Replicate<'a> {
    scenario: &'a str,
    replication: usize,
    out: StudyReport,
}

impl<'a> Replicate<'a> {
    fn new(scenario: &'a str, replication: usize) -> Self {
        Replicate { scenario, replication, out: StudyReport::default() }
    }

    fn record(&mut self, estimator: Estimator, metric: &'static str, value: f64) {
        self.out.records.push(Record {
            scenario: self.scenario.to_string(),
            replication: self.replication,
            estimator,
            metric,
            value,
        });
    }

    fn time(&mut self, estimator: Estimator, stage: &'static str, start: Instant) {
        self.out.timings.push(Timing {
            scenario: self.scenario.to_string(),
            replication: self.replication,
            estimator,
            stage,
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    fn fail(&mut self, estimator: Option<Estimator>, error: impl ToString) {
        self.out.failures.push(Failure {
            scenario: self.scenario.to_string(),
            replication: self.replication,
            estimator: estimator.map(Estimator::name),
            error: error.to_string(),
        });
    }
}

/// Data of one replication: training data with its gene sets, optional planted
/// loadings and optional held-out data on the training scale.
struct Instance<'a> {
    train: &'a DataMatrix,
    c: &'a GeneSetMatrix,
    truth: Option<&'a DMatrix<f64>>,
    test: Option<&'a DataMatrix>,
}

// Seeds of the random pieces of a replication.
const SEED_GENESETS: u64 = 0;
const SEED_DATA: u64 = 1;
const SEED_TEST: u64 = 2;
const SEED_FIT: u64 = 3;
const SEED_DRAWS: u64 = 4;
const SEED_SUBSET: u64 = 5;

fn score(instance: &Instance, opts: &StudyOptions, rep_seed: u64, rep: &mut Replicate) {
    let start = Instant::now();
    let k = match select_k(instance.train, Some(opts.k_max)) {
        Ok(profile) => profile.k_selected,
        Err(e) => return rep.fail(None, e),
    };
    let selection_seconds = start.elapsed().as_secs_f64();

    for &estimator in &opts.estimators {
        let result = match estimator {
            Estimator::Basil => score_basil(instance, opts, k, rep_seed, rep),
            Estimator::SpectralBaseline => score_baseline(instance, k, rep),
            Estimator::EmpiricalDiagonal => score_diagonal(instance, rep),
        };
        if let Err(e) = result {
            rep.fail(Some(estimator), e);
        }
    }
    if opts.estimators.contains(&Estimator::Basil) {
        rep.out.timings.push(Timing {
            scenario: rep.scenario.to_string(),
            replication: rep.replication,
            estimator: Estimator::Basil,
            stage: "select-k",
            seconds: selection_seconds,
        });
    }
}

fn score_basil(
    instance: &Instance,
    opts: &StudyOptions,
    k: usize,
    rep_seed: u64,
    rep: &mut Replicate,
) -> std::result::Result<(), BasilError> {
    let start = Instant::now();
    let config = FitConfig {
        k: KChoice::Fixed(k),
        standardize: false,
        seed: derive_seed(rep_seed, &[SEED_FIT]),
        ..FitConfig::default()
    };
    let model = fit(instance.train, instance.c, &config)?;
    rep.time(Estimator::Basil, "fit", start);
    rep.record(Estimator::Basil, "k_selected", k as f64);
    rep.record(Estimator::Basil, "tau_gamma_sq", model.hyper.tau_gamma_sq);
    rep.record(Estimator::Basil, "tau_psi_sq", model.hyper.tau_psi_sq);
    let ratio = model.hyper.tau_gamma_sq / model.hyper.tau_psi_sq;
    if ratio.is_finite() {
        rep.record(Estimator::Basil, "tau_ratio", ratio);
    }
    rep.record(Estimator::Basil, "sigma_hat_sq", model.hyper.sigma_hat_sq);
    rep.record(Estimator::Basil, "rho", model.hyper.rho);
    let params = model.posterior_params();
    if let Some(truth) = instance.truth {
        rep.record(Estimator::Basil, "rel_error", relative_frobenius_error(&model.lambda_bar, truth)?);
        if opts.n_draws > 0 && opts.subset_size > 0 {
            let start = Instant::now();
            let draws =
                sample_posterior(&params, &SampleOptions::new(opts.n_draws, derive_seed(rep_seed, &[SEED_DRAWS])))?;
            let size = opts.subset_size.min(model.p);
            let coverage = coverage_rate(&draws, truth, size, opts.level, derive_seed(rep_seed, &[SEED_SUBSET]))?;
            rep.time(Estimator::Basil, "coverage", start);
            rep.record(Estimator::Basil, "coverage", coverage);
        }
    }
    if let Some(test) = instance.test {
        rep.record(Estimator::Basil, "oos_loglik", oos_loglik(&covariance_posterior_mean(&params)?, test)?);
    }
    Ok(())
}

fn score_baseline(instance: &Instance, k: usize, rep: &mut Replicate) -> std::result::Result<(), BasilError> {
    let start = Instant::now();
    let baseline = spectral_baseline(instance.train, k)?;
    rep.time(Estimator::SpectralBaseline, "fit", start);
    if let Some(truth) = instance.truth {
        rep.record(Estimator::SpectralBaseline, "rel_error", relative_frobenius_error(&baseline.loadings, truth)?);
    }
    if let Some(test) = instance.test {
        rep.record(Estimator::SpectralBaseline, "oos_loglik", oos_loglik(&baseline.covariance()?, test)?);
    }
    Ok(())
}

fn score_diagonal(instance: &Instance, rep: &mut Replicate) -> std::result::Result<(), BasilError> {
    let start = Instant::now();
    let variances = empirical_variances(instance.train)?;
    rep.time(Estimator::EmpiricalDiagonal, "fit", start);
    if instance.truth.is_some() {
        // No loadings: the estimate of ΛΛᵀ is zero.
        rep.record(Estimator::EmpiricalDiagonal, "rel_error", 1.0);
    }
    if let Some(test) = instance.test {
        rep.record(Estimator::EmpiricalDiagonal, "oos_loglik", diagonal_loglik(&variances, test)?);
    }
    Ok(())
}

fn merge(parts: Vec<StudyReport>) -> StudyReport {
    let mut report = StudyReport::default();
    for part in parts {
        report.extend(part);
    }
    report
}

/// Synthetic replications of `design`. Gene sets are redrawn per replication
/// unless `fixed_c` is given. Replication `r` is seeded from `(seed, r)` only,
/// so scenarios run with one seed are paired.
pub fn run_synthetic(
    scenario: &str,
    design: &SimulationDesign,
    fixed_c: Option<&GeneSetMatrix>,
    opts: &StudyOptions,
    seed: u64,
) -> StudyReport {
    let parts: Vec<StudyReport> = (0..design.n_replications)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(seed, &[tag::REPLICATION, r as u64]);
            let mut rep = Replicate::new(scenario, r);
            let generated;
            let c = match fixed_c {
                Some(c) => c,
                None => {
                    let s = derive_seed(rep_seed, &[SEED_GENESETS]);
                    match generate_random_genesets(design.p, design.q, design.density, design.min_genes, s) {
                        Ok(c) => {
                            generated = c;
                            &generated
                        }
                        Err(e) => {
                            rep.fail(None, e);
                            return rep.out;
                        }
                    }
                }
            };
            let (y, truth) = match generate_synthetic(design, c, derive_seed(rep_seed, &[SEED_DATA])) {
                Ok(v) => v,
                Err(e) => {
                    rep.fail(None, e);
                    return rep.out;
                }
            };
            let test = if opts.n_test > 0 {
                match generate_test_data(&truth, y.gene_ids(), opts.n_test, derive_seed(rep_seed, &[SEED_TEST])) {
                    Ok(t) => Some(t),
                    Err(e) => {
                        rep.fail(None, e);
                        return rep.out;
                    }
                }
            } else {
                None
            };
            let instance = Instance { train: &y, c, truth: Some(&truth.lambda0), test: test.as_ref() };
            score(&instance, opts, rep_seed, &mut rep);
            rep.out
        })
        .collect();
    merge(parts)
}

/// Random train/test splits of `y`. Each split standardizes with the training
/// moments, aligns and filters the gene sets on the training genes, and scores
/// the test log-likelihood.
#[allow(clippy::too_many_arguments)]
pub fn run_splits(
    scenario: &str,
    y: &DataMatrix,
    c: &GeneSetMatrix,
    n_splits: usize,
    train_fraction: f64,
    min_genes: usize,
    opts: &StudyOptions,
    seed: u64,
) -> Result<StudyReport> {
    let aligned = align_genes(y, c, AlignPolicy::Intersect)?;
    let (c, _) = filter_gene_sets(&aligned.gene_sets, min_genes, false)?;
    let y = aligned.data;
    let n = y.n_samples();
    let n_train = ((n as f64) * train_fraction).round() as usize;
    if n_train < 2 || n_train >= n {
        return Err(CliError::Usage(format!("a {train_fraction} split of {n} samples leaves an empty side")));
    }
    let parts: Vec<StudyReport> = (0..n_splits)
        .into_par_iter()
        .map(|s| {
            let split_seed = derive_seed(seed, &[tag::SPLIT, s as u64]);
            let mut rep = Replicate::new(scenario, s);
            let prepared = (|| {
                let train_rows = gene_subset(n, n_train, split_seed)?;
                let mut in_train = vec![false; n];
                for &i in &train_rows {
                    in_train[i] = true;
                }
                let test_rows: Vec<usize> = (0..n).filter(|&i| !in_train[i]).collect();
                let train = standardize_columns(&y.select_rows(&train_rows)?)?;
                let test =
                    y.select_rows(&test_rows)?.apply_standardization(train.column_means(), train.column_sds())?;
                Ok::<_, BasilError>((train, test))
            })();
            match prepared {
                Ok((train, test)) => {
                    let instance = Instance { train: &train, c: &c, truth: None, test: Some(&test) };
                    score(&instance, opts, split_seed, &mut rep);
                }
                Err(e) => rep.fail(None, e),
            }
            rep.out
        })
        .collect();
    Ok(merge(parts))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub scenario: String,
    pub estimator: &'static str,
    pub metric: &'static str,
    pub n: usize,
    pub mean: f64,
    /// Standard error of the mean; null for a single value.
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudySummary {
    pub metrics: Vec<MetricSummary>,
    pub failures: Vec<Failure>,
}

pub fn summarize(report: &StudyReport, scenarios: &[String]) -> StudySummary {
    let mut groups: BTreeMap<(usize, Estimator, &'static str), Vec<f64>> = BTreeMap::new();
    for r in &report.records {
        let order = scenarios.iter().position(|s| *s == r.scenario).unwrap_or(usize::MAX);
        groups.entry((order, r.estimator, r.metric)).or_default().push(r.value);
    }
    let metrics = groups
        .into_iter()
        .map(|((order, estimator, metric), values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let se = (n > 1).then(|| {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            });
            MetricSummary {
                scenario: scenarios.get(order).cloned().unwrap_or_default(),
                estimator: estimator.name(),
                metric,
                n,
                mean,
                se,
            }
        })
        .collect();
    StudySummary { metrics, failures: report.failures.clone() }
}

pub fn write_report(dir: &Path, report: &StudyReport, scenarios: &[String]) -> Result<()> {
    let path = dir.join("study.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::io(&path, e.into()))?;
    w.write_record(["scenario", "replication", "estimator", "metric", "value"])
        .map_err(|e| CliError::io(&path, e.into()))?;
    for r in &report.records {
        w.write_record([&r.scenario, &r.replication.to_string(), r.estimator.name(), r.metric, &fmt_f64(r.value)])
            .map_err(|e| CliError::io(&path, e.into()))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    crate::io::write_json(&dir.join("summary.json"), &summarize(report, scenarios))?;

    let path = dir.join("timings.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::io(&path, e.into()))?;
    w.write_record(["scenario", "replication", "estimator", "stage", "seconds"])
        .map_err(|e| CliError::io(&path, e.into()))?;
    for t in &report.timings {
        w.write_record([
            &t.scenario,
            &t.replication.to_string(),
            t.estimator.name(),
            t.stage,
            &format!("{:.6}", t.seconds),
        ])
        .map_err(|e| CliError::io(&path, e.into()))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))
}
