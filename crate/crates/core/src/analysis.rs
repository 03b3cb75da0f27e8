//! Post-fit analysis: path cutoff, ensemble error estimates, operator
//! attribution and synthetic data generation.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fitness::ExafsObjective;
use crate::ga::{run_objective, Chromosome, FitResult, GAConfig, GeneBounds};
use crate::model::{evaluate_model, path_contribution, PathParams};
use crate::paths::{synth_path, PathSet};
use crate::spectra::{KGrid, KSpectrum};

/// Per-generation change of the best fitness split by stage.
///
/// `d_crossover` covers selection, crossover and random injection;
/// `d_mutation` covers mutation of the children. Their sum is the change of the
/// best fitness over the generation. `d_mean` is the change of the population mean.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttributionTrace {
    pub d_crossover: Vec<f64>,
    pub d_mutation: Vec<f64>,
    pub d_mean: Vec<f64>,
}

impl AttributionTrace {
    pub(crate) fn push(&mut self, d_crossover: f64, d_mutation: f64, d_mean: f64) {
        self.d_crossover.push(d_crossover);
        self.d_mutation.push(d_mutation);
        self.d_mean.push(d_mean);
    }

    pub fn len(&self) -> usize {
        self.d_crossover.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_crossover.is_empty()
    }

    /// Σ|Δ| for (crossover, mutation) over the first `n` generations.
    pub fn cumulative_abs(&self, n: usize) -> (f64, f64) {
        let n = n.min(self.len());
        (
            self.d_crossover[..n].iter().map(|d| d.abs()).sum(),
            self.d_mutation[..n].iter().map(|d| d.abs()).sum(),
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("generation,d_crossover,d_mutation,d_mean\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                i + 1,
                self.d_crossover[i],
                self.d_mutation[i],
                self.d_mean[i]
            );
        }
        out
    }
}

/// The attribution recorded by the engine during `result`'s run.
pub fn attribute_operators(result: &FitResult) -> AttributionTrace {
    result.attribution.clone()
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Fraction of the total ∫|kʷ χᵢ(k)| dk carried by each path (trapezoidal rule).
pub fn path_area_fractions(
    paths: &PathSet,
    chromosome: &Chromosome,
    grid: &KGrid,
    k_weight: u32,
) -> Result<Vec<f64>> {
    if chromosome.n_paths() != paths.len() {
        return Err(Error::analysis("chromosome and path set sizes differ"));
    }
    let k = grid.points();
    let areas = paths
        .paths()
        .iter()
        .zip(&chromosome.per_path)
        .map(|(p, params)| {
            let chi = path_contribution(p, params, chromosome.delta_e0, grid)?;
            let y: Vec<f64> = chi
                .iter()
                .zip(&k)
                .map(|(c, k)| (c * k.powi(k_weight as i32)).abs())
                .collect();
            Ok(trapezoid(&k, &y))
        })
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = areas.iter().sum();
    if !(total > 0.0) {
        return Err(Error::analysis("all path contributions are zero; nothing to prune"));
    }
    Ok(areas.into_iter().map(|a| a / total).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffReport {
    pub labels: Vec<String>,
    pub fractions: Vec<f64>,
    /// Indices of kept paths, in path-set order.
    pub selected: Vec<usize>,
    pub cutoff_percent: f64,
    /// χ² of the full fit.
    pub chi2_before: f64,
    /// χ² of the same parameters restricted to the kept paths, before any refit.
    pub chi2_after: f64,
}

impl CutoffReport {
    pub fn selected_labels(&self) -> Vec<&str> {
        self.selected.iter().map(|&i| self.labels[i].as_str()).collect()
    }

    pub fn pruned_paths(&self, paths: &PathSet) -> Result<PathSet> {
        paths.subset(&self.selected)
    }
}

/// Keeps paths whose area fraction is at least `cutoff_percent`/100 of the fit.
pub fn cutoff_select(
    objective: &ExafsObjective,
    chromosome: &Chromosome,
    cutoff_percent: f64,
) -> Result<CutoffReport> {
    if !(0.0..=100.0).contains(&cutoff_percent) {
        return Err(Error::analysis(format!("cutoff {cutoff_percent}% outside [0, 100]")));
    }
    let paths = objective.paths();
    let fractions = path_area_fractions(
        paths,
        chromosome,
        objective.data().grid(),
        objective.config().k_weight,
    )?;
    let threshold = cutoff_percent / 100.0;
    let selected: Vec<usize> = (0..fractions.len())
        .filter(|&i| fractions[i] >= threshold)
        .collect();
    if selected.is_empty() {
        return Err(Error::analysis(format!("no path reaches the {cutoff_percent}% cutoff")));
    }
    let chi2_before = objective.chi2(chromosome)?;
    let pruned = objective.with_paths(paths.subset(&selected)?);
    let chi2_after = pruned.chi2(&chromosome.subset(&selected))?;
    Ok(CutoffReport {
        labels: paths.labels().into_iter().map(String::from).collect(),
        fractions,
        selected,
        cutoff_percent,
        chi2_before,
        chi2_after,
    })
}

/// SplitMix64 finaliser; spreads a base seed over independent run seeds.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn map_runs<T: Send>(
    n: usize,
    workers: usize,
    f: impl Fn(usize) -> T + Sync + Send,
) -> Result<Vec<T>> {
    if workers <= 1 {
        return Ok((0..n).map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::analysis(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffRow {
    pub percent: f64,
    pub mean_chi2: f64,
    pub mean_paths_kept: f64,
    /// Refit χ² per repeat.
    pub chi2: Vec<f64>,
    /// Labels kept per repeat.
    pub kept: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffSweep {
    /// Best χ² of the full-path fit per repeat.
    pub full_chi2: Vec<f64>,
    pub rows: Vec<CutoffRow>,
}

impl CutoffSweep {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("percent,mean_chi2,n_paths\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.percent, r.mean_chi2, r.mean_paths_kept);
        }
        out
    }
}

/// Full-fit χ² and, per percentage, the refit χ² with the kept labels.
type RepeatOutcome = (f64, Vec<(f64, Vec<String>)>);

/// Full fit → prune at each percentage → refit, repeated `n_repeat` times.
///
/// Repeat `r` uses derived seeds for its full fit and its refits; the refit seed
/// is shared across percentages so rows differ only by the pruning. Repeats may
/// run on `workers` threads; rows are assembled in repeat order.
pub fn cutoff_sweep(
    objective: &ExafsObjective,
    bounds: &GeneBounds,
    ga_config: &GAConfig,
    percents: &[f64],
    n_repeat: usize,
    workers: usize,
) -> Result<CutoffSweep> {
    if percents.is_empty() {
        return Err(Error::analysis("cutoff sweep needs at least one percentage"));
    }
    if n_repeat == 0 {
        return Err(Error::analysis("cutoff sweep needs at least one repeat"));
    }
    let base = ga_config.rng_seed;
    let per_repeat = map_runs(n_repeat, workers, |r| -> Result<RepeatOutcome> {
        let full_cfg = GAConfig {
            rng_seed: derive_seed(base, 2 * r as u64),
            workers: 1,
            ..ga_config.clone()
        };
        let full = run_objective(objective, bounds, &full_cfg)?;
        let refit_cfg = GAConfig {
            rng_seed: derive_seed(base, 2 * r as u64 + 1),
            ..full_cfg
        };
        let mut rows = Vec::with_capacity(percents.len());
        for &pct in percents {
            let report = cutoff_select(objective, &full.best, pct)?;
            let pruned = objective.with_paths(report.pruned_paths(objective.paths())?);
            let refit = run_objective(&pruned, bounds, &refit_cfg)?;
            let kept = report.selected_labels().into_iter().map(String::from).collect();
            rows.push((refit.best_fitness, kept));
        }
        Ok((full.best_fitness, rows))
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let full_chi2 = per_repeat.iter().map(|(f, _)| *f).collect();
    let rows = percents
        .iter()
        .enumerate()
        .map(|(j, &percent)| {
            let chi2: Vec<f64> = per_repeat.iter().map(|(_, rows)| rows[j].0).collect();
            let kept: Vec<Vec<String>> = per_repeat.iter().map(|(_, rows)| rows[j].1.clone()).collect();
            CutoffRow {
                percent,
                mean_chi2: chi2.iter().sum::<f64>() / chi2.len() as f64,
                mean_paths_kept: kept.iter().map(|k| k.len() as f64).sum::<f64>() / kept.len() as f64,
                chi2,
                kept,
            }
        })
        .collect();
    Ok(CutoffSweep { full_chi2, rows })
}

/// Sampling ranges for the randomised hyperparameters of an error analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperRanges {
    pub population: (usize, usize),
    pub generations: (usize, usize),
    /// Initial mutation rate, percent.
    pub mutation_rate: (f64, f64),
}

impl Default for HyperRanges {
    fn default() -> Self {
        Self {
            population: (100, 5000),
            generations: (10, 50),
            mutation_rate: (0.0, 100.0),
        }
    }
}

impl HyperRanges {
    fn validate(&self) -> Result<()> {
        let (p0, p1) = self.population;
        let (g0, g1) = self.generations;
        let (m0, m1) = self.mutation_rate;
        if p0 < 2 || p0 > p1 || g0 < 1 || g0 > g1 || !(0.0..=100.0).contains(&m0) || m1 > 100.0 || m0 > m1 {
            return Err(Error::analysis(format!("invalid hyperparameter ranges {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub index: usize,
    pub seed: u64,
    pub population: usize,
    pub generations: usize,
    /// Sampled mutation rate; the run starts from it clamped to the configured σ bounds.
    pub mutation_rate: f64,
    pub best_fitness: f64,
    pub best: Chromosome,
    pub best_of_generation: Vec<Chromosome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Sample covariance (n − 1 denominator) of best-of-run genes.
    pub covariance: Vec<Vec<f64>>,
    pub runs: Vec<RunRecord>,
    /// `(run index, error message)` for excluded runs.
    pub failures: Vec<(usize, String)>,
}

impl ErrorReport {
    pub fn mean_chromosome(&self) -> Result<Chromosome> {
        Chromosome::from_genes(&self.mean)
    }

    pub fn std_chromosome(&self) -> Result<Chromosome> {
        Chromosome::from_genes(&self.std)
    }

    pub fn errors_csv(&self) -> String {
        let mut out = String::from("parameter,mean,std\n");
        for ((n, m), s) in self.names.iter().zip(&self.mean).zip(&self.std) {
            let _ = writeln!(out, "{n},{m},{s}");
        }
        out
    }

    pub fn covariance_csv(&self) -> String {
        let mut out = String::from("parameter");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (n, row) in self.names.iter().zip(&self.covariance) {
            out.push_str(n);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn manifest_csv(&self) -> String {
        let mut out = String::from("run,seed,population,generations,mutation_rate,best_fitness\n");
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.index, r.seed, r.population, r.generations, r.mutation_rate, r.best_fitness
            );
        }
        out
    }
}

/// Mean, sample standard deviation and sample covariance of row vectors.
#[allow(clippy::type_complexity)]
pub fn ensemble_statistics(samples: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::analysis("need at least two samples"));
    }
    let d = samples[0].len();
    if samples.iter().any(|s| s.len() != d) {
        return Err(Error::analysis("samples have different lengths"));
    }
    let mean: Vec<f64> = (0..d)
        .map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in a..d {
            let c = samples
                .iter()
                .map(|s| (s[a] - mean[a]) * (s[b] - mean[b]))
                .sum::<f64>()
                / (n - 1) as f64;
            cov[a][b] = c;
            cov[b][a] = c;
        }
    }
    let std = (0..d).map(|j| cov[j][j].max(0.0).sqrt()).collect();
    Ok((mean, std, cov))
}

/// Repeats the fit `n_runs` times with population, generation count and initial
/// mutation rate drawn uniformly from `ranges`, then summarises the spread of the
/// best-of-run parameters. Failed runs are recorded and skipped.
pub fn error_analysis(
    objective: &ExafsObjective,
    bounds: &GeneBounds,
    base: &GAConfig,
    n_runs: usize,
    ranges: &HyperRanges,
    seed: u64,
    workers: usize,
) -> Result<ErrorReport> {
    if n_runs < 2 {
        return Err(Error::analysis("error analysis needs n_runs >= 2"));
    }
    ranges.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plans: Vec<(u64, usize, usize, f64)> = (0..n_runs)
        .map(|i| {
            let pop = rng.random_range(ranges.population.0..=ranges.population.1);
            let gens = rng.random_range(ranges.generations.0..=ranges.generations.1);
            let (m0, m1) = ranges.mutation_rate;
            let mu = if m1 > m0 { rng.random_range(m0..=m1) } else { m0 };
            (derive_seed(seed, i as u64), pop, gens, mu)
        })
        .collect();

    let (lo, hi) = base.mutation_rate_bounds;
    let outcomes = map_runs(n_runs, workers, |i| {
        let (run_seed, pop, gens, mu) = plans[i];
        let cfg = GAConfig {
            population_size: pop,
            max_generations: gens,
            initial_mutation_rate: mu.clamp(lo, hi),
            rng_seed: run_seed,
            workers: 1,
            ..base.clone()
        };
        run_objective(objective, bounds, &cfg).map(|r| RunRecord {
            index: i,
            seed: run_seed,
            population: pop,
            generations: gens,
            mutation_rate: mu,
            best_fitness: r.best_fitness,
            best: r.best,
            best_of_generation: r.best_of_generation,
        })
    })?;

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => runs.push(r),
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    if runs.len() < 2 {
        return Err(Error::analysis(format!(
            "only {} of {n_runs} runs succeeded; need at least 2",
            runs.len()
        )));
    }
    let samples: Vec<Vec<f64>> = runs.iter().map(|r| r.best.genes()).collect();
    let (mean, std, covariance) = ensemble_statistics(&samples)?;
    Ok(ErrorReport {
        names: Chromosome::gene_names(&objective.paths().labels()),
        mean,
        std,
        covariance,
        runs,
        failures,
    })
}

/// Evaluates the model for `truth` and adds Gaussian noise.
///
/// Noise is drawn in k²-weighted space with standard deviation
/// `RMS(k²χ)/snr` and divided back by k². `snr = None` returns the clean model.
pub fn synth_generate(
    paths: &PathSet,
    truth: &Chromosome,
    grid: &KGrid,
    snr: Option<f64>,
    seed: u64,
) -> Result<KSpectrum> {
    let clean = evaluate_model(paths, truth, grid)?;
    let Some(snr) = snr else {
        return Ok(clean);
    };
    if !(snr > 0.0) {
        return Err(Error::analysis(format!("snr must be > 0, got {snr}")));
    }
    let weighted = clean.weighted(2);
    let rms = (weighted.iter().map(|v| v * v).sum::<f64>() / weighted.len() as f64).sqrt();
    let sd = rms / snr;
    let normal = Normal::new(0.0, sd).map_err(|e| Error::analysis(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chi = clean
        .chi()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let k2 = grid.k(i).powi(2);
            let n = normal.sample(&mut rng);
            if k2 > 0.0 {
                c + n / k2
            } else {
                *c
            }
        })
        .collect();
    KSpectrum::new(*grid, chi)
}

/// Ready-made synthetic problems built from analytic paths.
pub mod benchmark {
    use super::*;

    /// Paths, the chromosome that generated the data, and the grids involved.
    #[derive(Debug, Clone)]
    pub struct SyntheticProblem {
        pub paths: PathSet,
        pub truth: Chromosome,
        pub theory_grid: KGrid,
        pub data_grid: KGrid,
    }

    impl SyntheticProblem {
        pub fn data(&self, snr: Option<f64>, seed: u64) -> Result<KSpectrum> {
            synth_generate(&self.paths, &self.truth, &self.data_grid, snr, seed)
        }
    }

    pub fn theory_grid() -> KGrid {
        KGrid::new(0.0, 20.0, 0.05).expect("static grid")
    }

    pub fn data_grid() -> KGrid {
        KGrid::new(0.0, 15.0, 0.05).expect("static grid")
    }

    /// `(label, r_eff, degeneracy, amp_scale, s02, sigma2, delta_r)`
    type Row = (&'static str, f64, f64, f64, f64, f64, f64);

    const FIVE: [Row; 5] = [
        ("path_1", 2.5527, 12.0, 1.0, 0.62, 0.004, 0.05),
        ("path_2", 3.6100, 6.0, 1.0, 0.66, 0.001, 0.01),
        ("path_3", 4.4215, 48.0, 0.12, 0.74, 0.014, 0.08),
        ("path_4", 4.8300, 48.0, 0.08, 0.45, 0.009, 0.0),
        ("path_5", 5.1054, 24.0, 0.25, 0.14, 0.005, 0.05),
    ];

    /// ΔE0 shared by the five-path truth.
    pub const FIVE_PATH_E0: f64 = -0.91;

    const LAMBDA: f64 = 12.0;

    fn build(rows: &[(String, f64, f64, f64, PathParams)], e0: f64, source: &str) -> Result<SyntheticProblem> {
        let tg = theory_grid();
        let paths = rows
            .iter()
            .map(|(label, r, n, amp, _)| synth_path(label.clone(), *r, *n, &tg, *amp, LAMBDA))
            .collect::<Result<Vec<_>>>()?;
        let truth = Chromosome {
            delta_e0: e0,
            per_path: rows.iter().map(|row| row.4).collect(),
        };
        Ok(SyntheticProblem {
            paths: PathSet::new(paths, source)?,
            truth,
            theory_grid: tg,
            data_grid: data_grid(),
        })
    }

    fn expand(rows: &[Row]) -> Vec<(String, f64, f64, f64, PathParams)> {
        rows.iter()
            .map(|&(l, r, n, amp, s02, sigma2, delta_r)| {
                (l.to_string(), r, n, amp, PathParams { s02, sigma2, delta_r })
            })
            .collect()
    }

    /// Five paths with a copper-like shell sequence; path 1 dominates.
    pub fn five_path() -> Result<SyntheticProblem> {
        build(&expand(&FIVE), FIVE_PATH_E0, "synthetic five-path")
    }

    /// `n_significant` strong paths followed by `n_negligible` paths whose
    /// amplitude is too small to matter for any parameter values in range.
    pub fn with_negligible(n_significant: usize, n_negligible: usize) -> Result<SyntheticProblem> {
        const STRONG: [(f64, f64, f64, f64); 5] = [
            (2.55, 12.0, 1.0, 0.80),
            (3.61, 6.0, 1.0, 0.75),
            (4.42, 24.0, 0.45, 0.70),
            (5.10, 12.0, 0.5, 0.80),
            (5.70, 24.0, 0.45, 0.75),
        ];
        let mut rows = Vec::new();
        for i in 0..n_significant {
            let (r, n, amp, s02) = STRONG[i % STRONG.len()];
            rows.push((
                format!("sig_{}", i + 1),
                r + 0.37 * (i / STRONG.len()) as f64,
                n,
                amp,
                PathParams { s02, sigma2: 0.004, delta_r: 0.0 },
            ));
        }
        for j in 0..n_negligible {
            rows.push((
                format!("weak_{}", j + 1),
                3.0 + 0.23 * j as f64,
                6.0,
                0.001,
                PathParams { s02: 0.5, sigma2: 0.005, delta_r: 0.0 },
            ));
        }
        build(&rows, 0.0, "synthetic significant + negligible")
    }

    /// `n` single-shell paths with evenly spaced distances, for timing runs.
    pub fn shells(n: usize) -> Result<SyntheticProblem> {
        let rows: Vec<_> = (0..n)
            .map(|i| {
                (
                    format!("shell_{}", i + 1),
                    2.5 + 0.05 * i as f64,
                    6.0,
                    1.0 / (1.0 + i as f64 * 0.1),
                    PathParams { s02: 0.8, sigma2: 0.005, delta_r: 0.0 },
                )
            })
            .collect();
        build(&rows, 0.5, "synthetic shells")
    }
}
