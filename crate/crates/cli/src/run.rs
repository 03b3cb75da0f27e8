//! Mode execution and artifact emission.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use exafs_ga::analysis::{self, benchmark as problems};
use exafs_ga::fitness::{estimate_epsilon, Epsilon, ExafsObjective, FitReport, FitnessConfig};
use exafs_ga::ga::{evolve, run_objective, Chromosome, FitResult, GAConfig};
use exafs_ga::model::PathParams;
use exafs_ga::paths::PathSet;
use exafs_ga::spectra::{KGrid, KSpectrum, RawSpectrum, ETOK};
use serde_json::{json, Value};

use crate::config::{BenchmarkSettings, GridSettings, Mode, RunConfig};
use crate::CliError;

/// One output file, held in memory until the whole run has succeeded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    fn new(name: &str, contents: String) -> Self {
        Self {
            name: name.to_string(),
            contents,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub mode: Mode,
    pub output_dir: PathBuf,
    pub artifacts: Vec<Artifact>,
}

impl RunOutput {
    pub fn artifact(&self, name: &str) -> Option<&str> {
        self.artifacts
            .iter()
            .find(|a| a.name == name)
            .map(|a| a.contents.as_str())
    }
}

/// Executes `mode` and writes its artifacts into the configured output directory.
///
/// Nothing is written unless every step succeeds; each file is written to a
/// temporary name and renamed into place.
pub fn run(cfg: &RunConfig, mode: Mode, workers: usize) -> Result<RunOutput, CliError> {
    cfg.require_inputs(mode)?;
    let workers = workers.max(1);
    let mut artifacts = match mode {
        Mode::Fit => fit(cfg, workers)?,
        Mode::CutoffSweep => cutoff_sweep(cfg, workers)?,
        Mode::ErrorAnalysis => error_analysis(cfg, workers)?,
        Mode::Synth => synth(cfg)?,
        Mode::Benchmark => benchmark(cfg)?,
    };
    let names: Vec<String> = artifacts
        .iter()
        .map(|a| a.name.clone())
        .chain(std::iter::once("manifest.json".to_string()))
        .collect();
    let manifest = manifest_for(cfg, mode, &names, &artifacts);
    artifacts.push(Artifact::new("manifest.json", manifest));
    write_artifacts(&cfg.output_dir, &artifacts)?;
    Ok(RunOutput {
        mode,
        output_dir: cfg.output_dir.clone(),
        artifacts,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for a in artifacts {
        let target = dir.join(&a.name);
        let tmp = dir.join(format!(".{}.tmp", a.name));
        if let Err(e) = std::fs::write(&tmp, &a.contents) {
            let _ = std::fs::remove_file(&tmp);
            return Err(io_err(&tmp)(e));
        }
        std::fs::rename(&tmp, &target).map_err(io_err(&target))?;
    }
    Ok(())
}

/// Reads a two-column k/χ file and resamples it onto the configured grid.
///
/// Grid bounds left unset in `grid` are taken as the widest grid-aligned range
/// inside the data.
pub fn load_data(path: &Path, grid: &GridSettings) -> Result<KSpectrum, CliError> {
    let data_err = |source| CliError::Data {
        path: path.to_path_buf(),
        source,
    };
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let raw = RawSpectrum::parse(&text).map_err(data_err)?;
    let dk = grid.delta_k;
    let first = raw.k[0];
    let last = *raw.k.last().expect("parsed spectra are non-empty");
    let k_min = grid.k_min.unwrap_or_else(|| (first / dk - 1e-9).ceil() * dk);
    let k_max = grid.k_max.unwrap_or_else(|| (last / dk + 1e-9).floor() * dk);
    let target = KGrid::new(k_min, k_max, dk).map_err(data_err)?;
    raw.resample_onto(&target).map_err(data_err)
}

fn load_paths(cfg: &RunConfig) -> Result<PathSet, CliError> {
    let manifest = cfg.path_manifest.as_ref().expect("checked by require_inputs");
    Ok(PathSet::from_manifest(manifest)?)
}

fn objective(cfg: &RunConfig) -> Result<ExafsObjective, CliError> {
    let data_file = cfg.data_file.as_ref().expect("checked by require_inputs");
    let data = load_data(data_file, &cfg.grid)?;
    let paths = load_paths(cfg)?;
    let mut fitness: FitnessConfig = cfg.fitness.clone();
    if cfg.epsilon_auto {
        fitness.epsilon = Epsilon::Scalar(estimate_epsilon(&data)?);
    }
    Ok(ExafsObjective::new(data, paths, fitness)?)
}

fn names_for(objective: &ExafsObjective) -> Vec<String> {
    Chromosome::gene_names(&objective.paths().labels())
}

fn parameter_block(names: &[String], values: &[f64], errors: Option<&[f64]>) -> String {
    let width = names.iter().map(String::len).max().unwrap_or(0);
    let mut out = String::new();
    for (i, (n, v)) in names.iter().zip(values).enumerate() {
        match errors {
            Some(e) => {
                let _ = writeln!(out, "  {n:<width$}  {v:>12.6} ± {:.6}", e[i]);
            }
            None => {
                let _ = writeln!(out, "  {n:<width$}  {v:>12.6}");
            }
        }
    }
    out
}

fn metrics_block(report: &FitReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "chi2: {}", report.chi2);
    for (label, m) in [
        ("K (weighted)", &report.k_weighted),
        ("K (unweighted)", &report.k_unweighted),
        ("R", &report.r),
    ] {
        let _ = writeln!(out, "{label}: r2={} mae={} rmse={}", m.r2, m.mae, m.rmse);
    }
    out
}

fn model_k_csv(objective: &ExafsObjective, report: &FitReport) -> String {
    let w = objective.config().k_weight;
    let data = objective.data();
    let data_kw = data.weighted(w);
    let model_kw = report.model.weighted(w);
    let mut out = String::from("k,data,model,data_kw,model_kw\n");
    for i in 0..data.chi().len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            data.grid().k(i),
            data.chi()[i],
            report.model.chi()[i],
            data_kw[i],
            model_kw[i]
        );
    }
    out
}

fn model_r_csv(report: &FitReport) -> String {
    let (d, m) = (&report.data_r, &report.model_r);
    let mut out = String::from("r,data_re,data_im,data_mag,model_re,model_im,model_mag\n");
    for i in 0..d.r.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            d.r[i], d.chi_r[i].re, d.chi_r[i].im, d.magnitude[i], m.chi_r[i].re, m.chi_r[i].im, m.magnitude[i]
        );
    }
    out
}

fn trace_csv(result: &FitResult) -> String {
    let mut out = String::from("generation,best,mean,sigma,success\n");
    for i in 0..result.best_fitness_trace.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            i + 1,
            result.best_fitness_trace[i],
            result.mean_fitness_trace[i],
            result.sigma_trace[i],
            result.success_trace[i]
        );
    }
    out
}

fn header(cfg: &RunConfig, mode: Mode) -> String {
    format!(
        "mode: {}\nseed: {}\nconfig: {}\n",
        mode.name(),
        cfg.seed,
        cfg.source.display()
    )
}

fn fit(cfg: &RunConfig, workers: usize) -> Result<Vec<Artifact>, CliError> {
    let objective = objective(cfg)?;
    let ga = GAConfig {
        workers,
        ..cfg.ga.clone()
    };
    let result = run_objective(&objective, &cfg.bounds, &ga)?;
    let report = result.report.as_ref().expect("run_objective fills the report");
    let names = names_for(&objective);

    let mut summary = header(cfg, Mode::Fit);
    let _ = writeln!(
        summary,
        "paths: {}\ngenerations: {} ({})",
        objective.paths().labels().join(" "),
        result.generations,
        result.exit_reason
    );
    summary.push_str(&metrics_block(report));
    summary.push_str("parameters:\n");
    summary.push_str(&parameter_block(&names, &result.best.genes(), None));

    Ok(vec![
        Artifact::new("summary.txt", summary),
        Artifact::new("model_k.csv", model_k_csv(&objective, report)),
        Artifact::new("model_r.csv", model_r_csv(report)),
        Artifact::new("fitness_trace.csv", trace_csv(&result)),
        Artifact::new("attribution.csv", result.attribution.to_csv()),
    ])
}

fn cutoff_sweep(cfg: &RunConfig, workers: usize) -> Result<Vec<Artifact>, CliError> {
    let objective = objective(cfg)?;
    let sweep = analysis::cutoff_sweep(
        &objective,
        &cfg.bounds,
        &cfg.ga,
        &cfg.cutoff.percents,
        cfg.cutoff.repeats,
        workers,
    )?;
    let mut runs = String::from("percent,repeat,chi2,kept\n");
    for row in &sweep.rows {
        for (r, (chi2, kept)) in row.chi2.iter().zip(&row.kept).enumerate() {
            let _ = writeln!(runs, "{},{},{},{}", row.percent, r, chi2, kept.join(";"));
        }
    }
    let mut summary = header(cfg, Mode::CutoffSweep);
    let _ = writeln!(summary, "repeats: {}", cfg.cutoff.repeats);
    let _ = writeln!(
        summary,
        "full fit mean chi2: {}",
        sweep.full_chi2.iter().sum::<f64>() / sweep.full_chi2.len() as f64
    );
    for row in &sweep.rows {
        let _ = writeln!(
            summary,
            "cutoff {}%: mean chi2 {} with {} paths on average",
            row.percent, row.mean_chi2, row.mean_paths_kept
        );
    }
    Ok(vec![
        Artifact::new("summary.txt", summary),
        Artifact::new("cutoff.csv", sweep.to_csv()),
        Artifact::new("cutoff_runs.csv", runs),
    ])
}

fn error_analysis(cfg: &RunConfig, workers: usize) -> Result<Vec<Artifact>, CliError> {
    let objective = objective(cfg)?;
    let report = analysis::error_analysis(
        &objective,
        &cfg.bounds,
        &cfg.ga,
        cfg.error.runs,
        &cfg.error.ranges,
        cfg.seed,
        workers,
    )?;
    let mean = report.mean_chromosome()?;
    let fit = objective.report(&mean)?;

    let mut trace = String::from("run,generation");
    for n in &report.names {
        trace.push(',');
        trace.push_str(n);
    }
    trace.push('\n');
    for run in &report.runs {
        for (g, c) in run.best_of_generation.iter().enumerate() {
            let _ = write!(trace, "{},{}", run.index, g + 1);
            for v in c.genes() {
                let _ = write!(trace, ",{v}");
            }
            trace.push('\n');
        }
    }

    let mut summary = header(cfg, Mode::ErrorAnalysis);
    let _ = writeln!(
        summary,
        "runs: {} succeeded, {} failed",
        report.runs.len(),
        report.failures.len()
    );
    for (i, msg) in &report.failures {
        let _ = writeln!(summary, "  run {i} failed: {msg}");
    }
    summary.push_str("model at ensemble mean:\n");
    summary.push_str(&metrics_block(&fit));
    summary.push_str("parameters (mean ± sample std):\n");
    summary.push_str(&parameter_block(&report.names, &report.mean, Some(&report.std)));

    Ok(vec![
        Artifact::new("summary.txt", summary),
        Artifact::new("errors.csv", report.errors_csv()),
        Artifact::new("covariance.csv", report.covariance_csv()),
        Artifact::new("runs.csv", report.manifest_csv()),
        Artifact::new("best_of_generation.csv", trace),
        Artifact::new("model_k.csv", model_k_csv(&objective, &fit)),
        Artifact::new("model_r.csv", model_r_csv(&fit)),
    ])
}

fn synth(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let paths = load_paths(cfg)?;
    let s = &cfg.synth;
    if s.s02.len() != paths.len() {
        return Err(CliError::Config {
            location: cfg.source.display().to_string(),
            message: format!(
                "[synth] lists {} paths but the manifest has {}",
                s.s02.len(),
                paths.len()
            ),
        });
    }
    let truth = Chromosome {
        delta_e0: s.e0,
        per_path: (0..paths.len())
            .map(|i| PathParams {
                s02: s.s02[i],
                sigma2: s.sigma2[i],
                delta_r: s.delta_r[i],
            })
            .collect(),
    };
    let dk = cfg.grid.delta_k;
    let (lo, hi) = paths.common_k_range();
    let k_reach = (hi * hi + ETOK * s.e0).max(0.0).sqrt();
    let k_min = cfg.grid.k_min.unwrap_or_else(|| (lo / dk - 1e-9).ceil() * dk);
    let k_max = cfg.grid.k_max.unwrap_or_else(|| (k_reach / dk + 1e-9).floor() * dk);
    let grid = KGrid::new(k_min, k_max, dk)?;
    let spectrum = analysis::synth_generate(&paths, &truth, &grid, s.snr, cfg.seed)?;

    let mut summary = header(cfg, Mode::Synth);
    let _ = writeln!(
        summary,
        "grid: {} to {} step {}\nsnr: {}\ntruth:",
        grid.k_min(),
        grid.k_max(),
        grid.delta_k(),
        s.snr.map_or("none".to_string(), |v| v.to_string())
    );
    let names = Chromosome::gene_names(&paths.labels());
    summary.push_str(&parameter_block(&names, &truth.genes(), None));
    Ok(vec![
        Artifact::new("summary.txt", summary),
        Artifact::new(&s.output, spectrum.to_text()),
    ])
}

/// Seconds per generation against path count, with its least-squares line.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTable {
    pub rows: Vec<(usize, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept` and its coefficient of determination.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - (slope * a + intercept)).powi(2))
        .sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    (slope, intercept, 1.0 - ss_res / ss_tot)
}

/// Times single-threaded generations on synthetic shell problems of each size.
/// Each size reports the fastest of `repeats` runs.
pub fn run_benchmark(settings: &BenchmarkSettings, base: &GAConfig, seed: u64) -> Result<BenchmarkTable, CliError> {
    let mut rows = Vec::with_capacity(settings.n_paths.len());
    for &n in &settings.n_paths {
        let problem = problems::shells(n)?;
        let data = problem.data(None, seed)?;
        let objective = ExafsObjective::new(data, problem.paths.clone(), FitnessConfig::default())?;
        let ga = GAConfig {
            population_size: settings.population,
            max_generations: settings.generations,
            patience: None,
            rng_seed: seed,
            workers: 1,
            ..base.clone()
        };
        let bounds = exafs_ga::ga::GeneBounds::default();
        let mut best = f64::INFINITY;
        for _ in 0..settings.repeats {
            let start = Instant::now();
            let result = evolve(&objective, &bounds, n, &ga)?;
            let per_gen = start.elapsed().as_secs_f64() / result.generations as f64;
            best = best.min(per_gen);
        }
        rows.push((n, best));
    }
    let x: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let (slope, intercept, r2) = if rows.len() >= 2 {
        linear_fit(&x, &y)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    Ok(BenchmarkTable {
        rows,
        slope,
        intercept,
        r2,
    })
}

fn benchmark(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let table = run_benchmark(&cfg.benchmark, &cfg.ga, cfg.seed)?;
    let mut csv = String::from("n_paths,seconds_per_generation\n");
    for (n, t) in &table.rows {
        let _ = writeln!(csv, "{n},{t}");
    }
    let mut summary = header(cfg, Mode::Benchmark);
    let _ = writeln!(
        summary,
        "population: {}\ngenerations: {}\nlinear fit: seconds/generation = {} * n_paths + {}\nr2: {}",
        cfg.benchmark.population, cfg.benchmark.generations, table.slope, table.intercept, table.r2
    );
    Ok(vec![
        Artifact::new("summary.txt", summary),
        Artifact::new("benchmark.csv", csv),
    ])
}

fn manifest_for(cfg: &RunConfig, mode: Mode, names: &[String], artifacts: &[Artifact]) -> String {
    let bytes: Vec<Value> = artifacts
        .iter()
        .map(|a| json!({ "name": a.name, "bytes": a.contents.len() }))
        .collect();
    let value = json!({
        "mode": mode.name(),
        "seed": cfg.seed,
        "config": cfg.source.display().to_string(),
        "data_file": cfg.data_file.as_ref().map(|p| p.display().to_string()),
        "path_manifest": cfg.path_manifest.as_ref().map(|p| p.display().to_string()),
        "ga": {
            "population_size": cfg.ga.population_size,
            "max_generations": cfg.ga.max_generations,
            "elite_fraction": cfg.ga.elite_fraction,
            "random_fraction": cfg.ga.random_fraction,
            "crossover": format!("{:?}", cfg.ga.crossover),
            "mutation": format!("{:?}", cfg.ga.mutation),
            "initial_mutation_rate": cfg.ga.initial_mutation_rate,
            "mutation_rate_bounds": [cfg.ga.mutation_rate_bounds.0, cfg.ga.mutation_rate_bounds.1],
            "rechenberg_factor": cfg.ga.rechenberg_factor,
            "patience": cfg.ga.patience,
        },
        "artifacts": names,
        "sizes": bytes,
    });
    let mut text = serde_json::to_string_pretty(&value).expect("json values always serialise");
    text.push('\n');
    text
}
