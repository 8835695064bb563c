//! One function per subcommand; each writes its artifacts and
//! `resolved-config.json` into the output directory.

use std::path::Path;
use std::time::Instant;

use basil_core::genesets::{align_genes, filter_gene_sets, AlignPolicy};
use basil_core::matrixcore::standardize_columns;
use basil_core::posterior::{
    correlation_intervals, covariance_posterior_mean, sample_posterior, SampleOptions, DEFAULT_SUBSET_CAP,
};
use basil_core::selection::select_k;
use basil_core::simbench::{gene_subset, generate_random_genesets, generate_synthetic, generate_test_data, oos_loglik};
use basil_core::{fit, FitConfig, GeneSetMatrix, KChoice};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, Preprocessing, SavedFit};
use crate::config::{
    Command, FitArgs, LoglikArgs, RunConfig, SampleArgs, SelectKArgs, SimulateArgs, StudyArgs, RESOLVED_CONFIG,
};
use crate::error::{CliError, Result};
use crate::io::{self, fmt_f64, numbered, GeneSetFormat};
use crate::study::{self, StudyOptions};

/// Resolves `config`, configures the thread pool size for this process and runs
/// the command.
pub fn execute(config: RunConfig) -> Result<RunConfig> {
    let config = config.resolve()?;
    std::fs::create_dir_all(&config.output_dir).map_err(|e| CliError::io(&config.output_dir, e))?;
    io::write_json(&config.output_dir.join(RESOLVED_CONFIG), &config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} threads: {e}", config.threads)))?;
    pool.install(|| run(&config))?;
    Ok(config)
}

fn run(config: &RunConfig) -> Result<()> {
    let out = config.output_dir.as_path();
    info!("running {} into {}", config.command.name(), out.display());
    match &config.command {
        Command::SelectK(a) => cmd_select_k(a, out),
        Command::Fit(a) => cmd_fit(a, config.seed, out),
        Command::Sample(a) => cmd_sample(a, config.seed, out),
        Command::Simulate(a) => cmd_simulate(a, config.seed, out),
        Command::Study(a) => cmd_study(a, config.seed, out),
        Command::Loglik(a) => cmd_loglik(a, out),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectKOutput {
    pub k_selected: usize,
    pub k_max: usize,
    pub warnings: Vec<String>,
}

fn cmd_select_k(a: &SelectKArgs, out: &Path) -> Result<()> {
    let mut y = io::read_expression_csv(&a.expression)?.data;
    if !a.no_standardize {
        y = standardize_columns(&y)?;
    }
    let profile = select_k(&y, a.k_max)?;
    artifacts::write_jic_profile(&out.join(artifacts::JIC_PROFILE), &profile)?;
    let summary = SelectKOutput {
        k_selected: profile.k_selected,
        k_max: profile.k_values.last().copied().unwrap_or(0),
        warnings: profile.warnings.iter().map(ToString::to_string).collect(),
    };
    io::write_json(&out.join("select_k.json"), &summary)?;
    println!("{}", profile.k_selected);
    Ok(())
}

fn read_sets(path: &Path, format: Option<GeneSetFormat>) -> Result<GeneSetMatrix> {
    io::read_gene_sets(path, format.unwrap_or_else(|| GeneSetFormat::from_extension(path)))
}

fn cmd_fit(a: &FitArgs, seed: u64, out: &Path) -> Result<()> {
    let mut timings = serde_json::Map::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut serde_json::Map<String, serde_json::Value>| {
        timings.insert(name.to_string(), clock.elapsed().as_secs_f64().into());
        clock = Instant::now();
    };

    let y = io::read_expression_csv(&a.expression)?.data;
    let c = read_sets(&a.genesets, a.genesets_format)?;
    lap("read", &mut timings);

    let aligned = align_genes(&y, &c, a.align.into())?;
    if !aligned.dropped_from_data.is_empty() {
        warn!("{} expression genes are not in any gene set and were dropped", aligned.dropped_from_data.len());
    }
    let (c, report) = filter_gene_sets(&aligned.gene_sets, a.min_genes, a.drop_unannotated)?;
    if !report.removed_sets.is_empty() {
        info!("dropped {} gene sets with fewer than {} genes", report.removed_sets.len(), a.min_genes);
    }
    let y = if report.removed_genes.is_empty() {
        aligned.data
    } else {
        align_genes(&aligned.data, &c, AlignPolicy::Intersect)?.data
    };
    let pre = Preprocessing {
        genes_dropped_from_data: aligned.dropped_from_data,
        genes_dropped_from_sets: aligned.dropped_from_sets.into_iter().chain(report.removed_genes).collect(),
        sets_filtered: report.removed_sets,
    };
    lap("preprocess", &mut timings);

    let config = FitConfig {
        k: match a.k {
            Some(k) => KChoice::Fixed(k),
            None => KChoice::Select { k_max: a.k_max },
        },
        standardize: !a.no_standardize,
        pair_budget: a.pair_budget,
        seed,
        ..FitConfig::default()
    };
    let model = fit(&y, &c, &config)?;
    lap("fit", &mut timings);
    for w in &model.warnings {
        warn!("{w}");
    }
    let summary = artifacts::summarize(&model, config.standardize, pre)?;
    artifacts::write_fit(out, &model, &summary)?;
    lap("write", &mut timings);
    io::write_json(&out.join(artifacts::TIMINGS), &timings)?;
    info!(
        "k = {}, tau = ({}, {}), rho = {}, max |C'psi| = {:e}",
        model.k, model.hyper.tau_gamma_sq, model.hyper.tau_psi_sq, model.hyper.rho, summary.diagnostics.max_abs_ct_psi
    );
    Ok(())
}

/// Contents of `draws.json`. The loading draws are not stored: draw `s`,
/// column `h` is regenerated from the stream keyed by `(seed, s, h)` together
/// with the fit directory and `sigma_sq.bin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsManifest {
    pub fit_dir: String,
    pub seed: u64,
    pub n_draws: usize,
    pub coverage_corrected: bool,
    pub inflation: f64,
    pub sigma_sq_file: String,
}

#[derive(Debug, Serialize)]
struct CorrelationOutput {
    n_genes: usize,
    level: f64,
    masked_fraction: f64,
}

fn cmd_sample(a: &SampleArgs, seed: u64, out: &Path) -> Result<()> {
    let saved = SavedFit::load(&a.fit_dir)?;
    let options =
        SampleOptions { coverage_corrected: !a.no_coverage_correction, ..SampleOptions::new(a.n_draws, seed) };
    let draws = sample_posterior(&saved.params, &options)?;
    io::write_f64_bin(&out.join("sigma_sq.bin"), draws.sigma_sq())?;
    io::write_json(
        &out.join("draws.json"),
        &DrawsManifest {
            fit_dir: a.fit_dir.display().to_string(),
            seed,
            n_draws: a.n_draws,
            coverage_corrected: options.coverage_corrected,
            inflation: draws.inflation(),
            sigma_sq_file: "sigma_sq.bin".into(),
        },
    )?;

    let genes: Vec<usize> = if a.genes.is_empty() {
        gene_subset(saved.gene_ids.len(), a.subset_size.min(saved.gene_ids.len()), seed)?
    } else {
        a.genes
            .iter()
            .map(|g| {
                saved
                    .gene_ids
                    .iter()
                    .position(|x| x == g)
                    .ok_or_else(|| CliError::Usage(format!("gene `{g}` is not in the fit")))
            })
            .collect::<Result<_>>()?
    };
    if genes.len() >= 2 {
        let summary = correlation_intervals(&draws, &genes, a.level, DEFAULT_SUBSET_CAP)?;
        let path = out.join("correlation.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::io(&path, e.into()))?;
        let err = |e: csv::Error| CliError::io(&path, e.into());
        w.write_record(["gene_a", "gene_b", "mean", "lo", "hi", "masked", "plugin"]).map_err(err)?;
        for i in 0..genes.len() {
            for j in i + 1..genes.len() {
                w.write_record([
                    saved.gene_ids[genes[i]].as_str(),
                    saved.gene_ids[genes[j]].as_str(),
                    &fmt_f64(summary.mean[(i, j)]),
                    &fmt_f64(summary.lower[(i, j)]),
                    &fmt_f64(summary.upper[(i, j)]),
                    &fmt_f64(summary.masked[(i, j)]),
                    &fmt_f64(summary.plugin[(i, j)]),
                ])
                .map_err(err)?;
            }
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        io::write_json(
            &out.join("correlation.json"),
            &CorrelationOutput { n_genes: genes.len(), level: a.level, masked_fraction: summary.masked_fraction() },
        )?;
    } else {
        warn!("fewer than two genes requested; no correlation summary written");
    }

    if a.densify {
        let path = out.join("draws.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::io(&path, e.into()))?;
        let err = |e: csv::Error| CliError::io(&path, e.into());
        let mut header = vec!["draw".to_string(), "gene".to_string(), "sigma_sq".to_string()];
        header.extend(numbered("factor", saved.params.n_factors()));
        w.write_record(&header).map_err(err)?;
        for s in 0..draws.n_draws() {
            let lambda = draws.draw(s);
            for (j, gene) in saved.gene_ids.iter().enumerate() {
                let mut row = vec![s.to_string(), gene.clone(), fmt_f64(draws.sigma_sq()[s])];
                row.extend(lambda.row(j).iter().map(|v| fmt_f64(*v)));
                w.write_record(&row).map_err(err)?;
            }
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, seed: u64, out: &Path) -> Result<()> {
    let (c, design) = match &a.genesets {
        Some(path) => {
            let c = read_sets(path, a.genesets_format)?;
            let mut args = a.design.clone();
            args.p = Some(c.n_genes());
            args.q = Some(c.n_sets());
            (c, args.design(seed)?)
        }
        None => {
            let design = a.design.design(seed)?;
            let c = generate_random_genesets(design.p, design.q, design.density, design.min_genes, seed)?;
            (c, design)
        }
    };
    let (y, truth) = generate_synthetic(&design, &c, seed)?;
    io::write_expression_csv(&out.join("expression.csv"), &y, None)?;
    // Dense, so genes in no set survive the round trip.
    io::write_dense_gene_sets(&out.join("genesets.csv"), &c)?;
    let factors = numbered("factor", design.k);
    io::write_labeled_matrix(&out.join("lambda0.csv"), "gene", c.gene_ids(), &factors, &truth.lambda0)?;
    io::write_labeled_matrix(&out.join("gamma0.csv"), "set", c.set_ids(), &factors, &truth.gamma0)?;
    io::write_labeled_matrix(&out.join("psi0.csv"), "gene", c.gene_ids(), &factors, &truth.psi0)?;
    if a.n_test > 0 {
        let test = generate_test_data(&truth, c.gene_ids(), a.n_test, seed)?;
        io::write_expression_csv(&out.join("test.csv"), &test, None)?;
    }
    io::write_json(
        &out.join("design.json"),
        &serde_json::json!({
            "n": design.n, "p": design.p, "k": design.k, "q": design.q,
            "tau_gamma_sq": design.tau_gamma_sq, "tau_psi_sq": design.tau_psi_sq,
            "sigma_sq": design.sigma_sq, "density": design.density,
            "min_genes": design.min_genes, "seed": seed,
        }),
    )
}

fn cmd_study(a: &StudyArgs, seed: u64, out: &Path) -> Result<()> {
    let opts = StudyOptions {
        estimators: a.estimators.clone(),
        k_max: a.k_max,
        n_draws: a.n_draws,
        subset_size: a.subset_size,
        level: a.level,
        n_test: a.n_test,
    };
    let mut report = study::StudyReport::default();
    let mut scenarios = Vec::new();
    match (a.splits, &a.expression, &a.genesets) {
        (Some(n_splits), Some(expression), Some(genesets)) => {
            let y = io::read_expression_csv(expression)?.data;
            let c = read_sets(genesets, a.genesets_format)?;
            scenarios.push("splits".to_string());
            report = study::run_splits("splits", &y, &c, n_splits, a.train_fraction, a.split_min_genes, &opts, seed)?;
        }
        (Some(_), _, _) => return Err(CliError::Usage("--splits needs --expression and --genesets".into())),
        (None, _, _) => {
            let fixed_c = a.genesets.as_deref().map(|p| read_sets(p, a.genesets_format)).transpose()?;
            let mut presets = vec![a.design.preset.clone()];
            presets.extend(a.also_presets.iter().cloned());
            for preset in presets {
                let mut args = a.design.clone();
                if preset != a.design.preset {
                    // Other presets keep the shared size overrides but their own variances.
                    args.preset = preset.clone();
                    args.tau_gamma_sq = None;
                    args.tau_psi_sq = None;
                    args.sigma_sq = None;
                }
                if let Some(c) = &fixed_c {
                    args.p = Some(c.n_genes());
                    args.q = Some(c.n_sets());
                }
                let design = args.design(seed)?;
                info!("scenario {preset}: {} replications", design.n_replications);
                report.extend(study::run_synthetic(&preset, &design, fixed_c.as_ref(), &opts, seed));
                scenarios.push(preset);
            }
        }
    }
    for f in &report.failures {
        warn!("{} replication {}: {}", f.scenario, f.replication, f.error);
    }
    study::write_report(out, &report, &scenarios)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LoglikOutput {
    pub oos_loglik: f64,
    pub n_test: usize,
    pub p: usize,
}

fn cmd_loglik(a: &LoglikArgs, out: &Path) -> Result<()> {
    let saved = SavedFit::load(&a.fit_dir)?;
    let test = io::read_expression_csv(&a.test)?.data;
    let test = saved.prepare_test(&test, &a.test)?;
    let cov = covariance_posterior_mean(&saved.params)?;
    let value = oos_loglik(&cov, &test)?;
    let result = LoglikOutput { oos_loglik: value, n_test: test.n_samples(), p: test.n_genes() };
    io::write_json(&out.join("loglik.json"), &result)?;
    println!("{}", serde_json::to_string(&result).expect("serializable"));
    Ok(())
}
