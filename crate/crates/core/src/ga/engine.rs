//! The generational loop.
//!
//! Generations are numbered from 1 (the random initial population). Each later
//! generation keeps the elites unchanged, breeds children from them, adds fresh
//! random individuals, then mutates the children. Fitness may be computed on a
//! worker pool, but every random draw happens on the calling thread and results
//! are gathered in population order, so a run depends only on its inputs and seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::operators::{
    cooling_rate, crossover, init_population, metropolis_accept, mutate, propose_metropolis,
    rechenberg_update, select,
};
use super::{Chromosome, GAConfig, GeneBounds, MutationMethod, Objective};
use crate::analysis::AttributionTrace;
use crate::error::{Error, Result};
use crate::fitness::{ExafsObjective, FitReport, FitnessConfig};
use crate::paths::PathSet;
use crate::spectra::{KSpectrum, ETOK};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitReason {
    MaxGenerations,
    Stagnation,
}

impl std::fmt::Display for ExitReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExitReason::MaxGenerations => "max-generations",
            ExitReason::Stagnation => "stagnation",
        })
    }
}

/// Mutable run state owned by the control thread.
#[derive(Debug, Clone)]
pub struct GAState {
    pub generation: usize,
    pub max_generation: usize,
    /// Mutation probability σ, percent.
    pub mutation_rate: f64,
    pub best_fitness_trace: Vec<f64>,
    pub success_ratio: f64,
    pub rng: ChaCha8Rng,
}

impl GAState {
    fn new(config: &GAConfig) -> Self {
        Self {
            generation: 1,
            max_generation: config.max_generations,
            mutation_rate: config.initial_mutation_rate,
            best_fitness_trace: Vec::new(),
            success_ratio: 0.0,
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
        }
    }

    /// |best(i−1) − best(i−2)| for the generation being built; 0 until two
    /// generations have been recorded.
    fn delta_f(&self) -> f64 {
        match self.best_fitness_trace.as_slice() {
            [.., a, b] if a.is_finite() && b.is_finite() => (a - b).abs(),
            _ => 0.0,
        }
    }
}

/// Snapshot passed to an observer after each generation is complete.
#[derive(Debug)]
pub struct GenerationView<'a> {
    pub generation: usize,
    pub population: &'a [Chromosome],
    pub fitness: &'a [f64],
    pub mutation_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub best: Chromosome,
    pub best_fitness: f64,
    pub generations: usize,
    pub exit_reason: ExitReason,
    /// Best fitness per generation, starting with the initial population.
    pub best_fitness_trace: Vec<f64>,
    pub mean_fitness_trace: Vec<f64>,
    /// σ used while building each generation (the initial one reports the starting σ).
    pub sigma_trace: Vec<f64>,
    /// Fraction of children beating the previous median; 0 for generation 1.
    pub success_trace: Vec<f64>,
    pub best_of_generation: Vec<Chromosome>,
    pub attribution: AttributionTrace,
    /// Filled by [`run_ga`] for EXAFS fits.
    pub report: Option<FitReport>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn finite_mean(values: &[f64]) -> f64 {
    let (sum, n) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::INFINITY
    } else {
        sum / n as f64
    }
}

fn best_index(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn min_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

struct Evaluator<'a, O: ?Sized> {
    objective: &'a O,
    pool: Option<rayon::ThreadPool>,
}

impl<O: Objective + ?Sized> Evaluator<'_, O> {
    /// Scores `batch`; `first_index` is the population index of `batch[0]`, used in errors.
    fn eval(&self, batch: &[&Chromosome], generation: usize, first_index: usize) -> Result<Vec<f64>> {
        let score = |(j, c): (usize, &&Chromosome)| {
            self.objective
                .fitness(c)
                .map(|f| if f.is_nan() { f64::INFINITY } else { f })
                .map_err(|e| Error::Evaluation {
                    generation,
                    individual: first_index + j,
                    source: Box::new(e),
                })
        };
        match &self.pool {
            Some(pool) => pool.install(|| batch.par_iter().enumerate().map(score).collect()),
            None => batch.iter().enumerate().map(score).collect(),
        }
    }
}

/// Runs the GA against an arbitrary objective.
pub fn evolve<O: Objective + ?Sized>(
    objective: &O,
    bounds: &GeneBounds,
    n_paths: usize,
    config: &GAConfig,
) -> Result<FitResult> {
    evolve_observed(objective, bounds, n_paths, config, |_| {})
}

/// [`evolve`] with a callback invoked once per completed generation.
pub fn evolve_observed<O, F>(
    objective: &O,
    bounds: &GeneBounds,
    n_paths: usize,
    config: &GAConfig,
    mut observer: F,
) -> Result<FitResult>
where
    O: Objective + ?Sized,
    F: FnMut(&GenerationView<'_>),
{
    config.validate()?;
    bounds.validate()?;
    let pool = if config.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.workers)
                .build()
                .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?,
        )
    } else {
        None
    };
    let evaluator = Evaluator { objective, pool };
    let mut state = GAState::new(config);

    let mut population = init_population(bounds, n_paths, config, &mut state.rng);
    let refs: Vec<&Chromosome> = population.iter().collect();
    let mut fitness = evaluator.eval(&refs, 1, 0)?;

    let mut best_i = best_index(&fitness);
    let mut result = FitResult {
        best: population[best_i].clone(),
        best_fitness: fitness[best_i],
        generations: 1,
        exit_reason: ExitReason::MaxGenerations,
        best_fitness_trace: vec![fitness[best_i]],
        mean_fitness_trace: vec![finite_mean(&fitness)],
        sigma_trace: vec![state.mutation_rate],
        success_trace: vec![0.0],
        best_of_generation: vec![population[best_i].clone()],
        attribution: AttributionTrace::default(),
        report: None,
    };
    result.attribution.push(0.0, 0.0, 0.0);
    state.best_fitness_trace.push(fitness[best_i]);
    observer(&GenerationView {
        generation: 1,
        population: &population,
        fitness: &fitness,
        mutation_rate: state.mutation_rate,
    });

    let n_elite = config.n_elite();
    let n_children = config.n_children();
    let n_random = config.n_random();
    let mut stagnant = 0usize;

    while state.generation < config.max_generations {
        state.generation += 1;
        let generation = state.generation;
        let sigma = state.mutation_rate;
        let prev_best = fitness[best_i];
        let prev_mean = finite_mean(&fitness);
        let prev_median = median(&fitness);

        let selection = select(&population, &fitness, config)?;
        let pool = selection.parent_pool();

        // Selection and crossover.
        let mut children = Vec::with_capacity(n_children);
        for _ in 0..n_children {
            let a = state.rng.random_range(0..pool.len());
            let b = if pool.len() >= 2 {
                let b = state.rng.random_range(0..pool.len() - 1);
                if b >= a {
                    b + 1
                } else {
                    b
                }
            } else {
                a
            };
            children.push(crossover(config.crossover, &pool[a].0, &pool[b].0, bounds, &mut state.rng));
        }
        let randoms: Vec<Chromosome> = (0..n_random)
            .map(|_| Chromosome::random(bounds, n_paths, &mut state.rng))
            .collect();
        let fresh: Vec<&Chromosome> = children.iter().chain(&randoms).collect();
        let fresh_fit = evaluator.eval(&fresh, generation, n_elite)?;
        let (mut child_fit, random_fit) = {
            let (c, r) = fresh_fit.split_at(n_children);
            (c.to_vec(), r.to_vec())
        };
        let best_after_crossover = prev_best.min(min_of(&fresh_fit));

        // Mutation of the children.
        match config.mutation {
            MutationMethod::Maximum | MutationMethod::Nested => {
                let mut changed = Vec::new();
                for (i, child) in children.iter_mut().enumerate() {
                    let (m, did) = mutate(config.mutation, child, sigma, bounds, &mut state.rng);
                    if did {
                        *child = m;
                        changed.push(i);
                    }
                }
                let batch: Vec<&Chromosome> = changed.iter().map(|&i| &children[i]).collect();
                let scores = evaluator.eval(&batch, generation, n_elite)?;
                for (&i, f) in changed.iter().zip(scores) {
                    child_fit[i] = f;
                }
            }
            MutationMethod::Metropolis => {
                let cooling = cooling_rate(state.delta_f(), generation - 1, config.max_generations);
                let proposals: Vec<(usize, _)> = children
                    .iter()
                    .enumerate()
                    .filter_map(|(i, c)| {
                        propose_metropolis(c, sigma, bounds, &mut state.rng).map(|p| (i, p))
                    })
                    .collect();
                let batch: Vec<&Chromosome> = proposals.iter().map(|(_, p)| &p.candidate).collect();
                let scores = evaluator.eval(&batch, generation, n_elite)?;
                for ((i, p), f_mut) in proposals.into_iter().zip(scores) {
                    if metropolis_accept(f_mut, child_fit[i], cooling, p.t) {
                        children[i] = p.candidate;
                        child_fit[i] = f_mut;
                    }
                }
            }
        }

        let success = if n_children == 0 {
            0.2
        } else {
            child_fit.iter().filter(|&&f| f < prev_median).count() as f64 / n_children as f64
        };

        let mut next = Vec::with_capacity(config.population_size);
        let mut next_fit = Vec::with_capacity(config.population_size);
        for (c, f) in selection.elites {
            next.push(c);
            next_fit.push(f);
        }
        next.extend(children);
        next_fit.extend(child_fit);
        next.extend(randoms);
        next_fit.extend(random_fit);
        population = next;
        fitness = next_fit;

        best_i = best_index(&fitness);
        let best = fitness[best_i];
        let mean = finite_mean(&fitness);
        result.attribution.push(
            best_after_crossover - prev_best,
            best - best_after_crossover,
            mean - prev_mean,
        );
        result.best_fitness_trace.push(best);
        result.mean_fitness_trace.push(mean);
        result.sigma_trace.push(sigma);
        result.success_trace.push(success);
        result.best_of_generation.push(population[best_i].clone());
        result.generations = generation;
        state.best_fitness_trace.push(best);
        state.success_ratio = success;
        state.mutation_rate = rechenberg_update(sigma, success, config);

        observer(&GenerationView {
            generation,
            population: &population,
            fitness: &fitness,
            mutation_rate: sigma,
        });

        if best < prev_best {
            stagnant = 0;
        } else {
            stagnant += 1;
        }
        if config.patience.is_some_and(|p| stagnant >= p) {
            result.exit_reason = ExitReason::Stagnation;
            break;
        }
    }

    result.best = population[best_i].clone();
    result.best_fitness = fitness[best_i];
    Ok(result)
}

/// Checks that every path's theory arrays cover the fit range for all ΔE0 the bounds allow.
fn check_theory_coverage(objective: &ExafsObjective, bounds: &GeneBounds) -> Result<()> {
    let grid = objective.data().grid();
    let k_top = grid.k_max();
    let k_needed = (k_top * k_top - ETOK * bounds.delta_e0.lower).max(0.0).sqrt();
    for p in objective.paths().paths() {
        let (_, hi) = p.k_range();
        if hi + 1e-9 < k_needed {
            return Err(Error::config(format!(
                "path {} covers k up to {hi}, but the fit range with ΔE0 >= {} needs {k_needed:.4}",
                p.label, bounds.delta_e0.lower
            )));
        }
    }
    Ok(())
}

/// Fits `data` with the EXAFS model over `paths`.
pub fn run_ga(
    data: &KSpectrum,
    paths: &PathSet,
    bounds: &GeneBounds,
    ga_config: &GAConfig,
    fitness_config: &FitnessConfig,
) -> Result<FitResult> {
    let objective = ExafsObjective::new(data.clone(), paths.clone(), fitness_config.clone())?;
    run_objective(&objective, bounds, ga_config)
}

/// [`run_ga`] over a prepared objective.
pub fn run_objective(
    objective: &ExafsObjective,
    bounds: &GeneBounds,
    ga_config: &GAConfig,
) -> Result<FitResult> {
    check_theory_coverage(objective, bounds)?;
    let mut result = evolve(objective, bounds, objective.paths().len(), ga_config)?;
    result.report = Some(objective.report(&result.best)?);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ga::{CrossoverMethod, FnObjective, GeneSpec};

    fn sphere_bounds() -> GeneBounds {
        GeneBounds {
            delta_e0: GeneSpec::new("e0", -5.0, 5.0, 0.01).unwrap(),
            s02: GeneSpec::new("s02", 0.0, 1.0, 0.01).unwrap(),
            sigma2: GeneSpec::new("s2", 0.0, 0.02, 0.0001).unwrap(),
            delta_r: GeneSpec::new("dr", -0.1, 0.1, 0.001).unwrap(),
        }
    }

    fn sphere(c: &Chromosome) -> Result<f64> {
        let mut s = (c.delta_e0 - 1.0).powi(2);
        for p in &c.per_path {
            s += (p.s02 - 0.6).powi(2) + (1e2 * (p.sigma2 - 0.005)).powi(2) + (10.0 * (p.delta_r - 0.02)).powi(2);
        }
        Ok(s)
    }

    #[test]
    fn constant_fitness_stagnates_at_generation_six() {
        let obj = FnObjective(|_: &Chromosome| Ok(3.0));
        let cfg = GAConfig {
            population_size: 20,
            max_generations: 100,
            patience: Some(5),
            ..GAConfig::default()
        };
        let r = evolve(&obj, &sphere_bounds(), 2, &cfg).unwrap();
        assert_eq!(r.exit_reason, ExitReason::Stagnation);
        assert_eq!(r.generations, 6);
        assert_eq!(r.best_fitness_trace.len(), 6);
    }

    #[test]
    fn runs_to_max_generations() {
        let obj = FnObjective(sphere);
        let cfg = GAConfig {
            population_size: 30,
            max_generations: 12,
            ..GAConfig::default()
        };
        let r = evolve(&obj, &sphere_bounds(), 2, &cfg).unwrap();
        assert_eq!(r.exit_reason, ExitReason::MaxGenerations);
        assert_eq!(r.generations, 12);
        assert_eq!(r.attribution.len(), 12);
    }

    #[test]
    fn evaluation_errors_name_generation_and_individual() {
        let obj = FnObjective(|c: &Chromosome| {
            if c.delta_e0 > 4.9 {
                Err(Error::model("boom"))
            } else {
                Ok(0.0)
            }
        });
        let cfg = GAConfig {
            population_size: 400,
            max_generations: 5,
            ..GAConfig::default()
        };
        let err = evolve(&obj, &sphere_bounds(), 1, &cfg).unwrap_err();
        match err {
            Error::Evaluation { generation, .. } => assert!(generation >= 1),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn parallel_matches_serial() {
        let obj = FnObjective(sphere);
        for mutation in [MutationMethod::Maximum, MutationMethod::Nested, MutationMethod::Metropolis] {
            let cfg = GAConfig {
                population_size: 40,
                max_generations: 10,
                mutation,
                crossover: CrossoverMethod::UniformRandom,
                rng_seed: 17,
                ..GAConfig::default()
            };
            let a = evolve(&obj, &sphere_bounds(), 3, &cfg).unwrap();
            let b = evolve(&obj, &sphere_bounds(), 3, &GAConfig { workers: 4, ..cfg }).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
