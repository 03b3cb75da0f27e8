//! Genetic-algorithm engine.
//!
//! A chromosome holds one global ΔE0 gene followed by `(S0², σ², ΔR)` for
//! every path, so an `n`-path fit has `3n + 1` genes. Each gene lives on a
//! quantised grid `lower + i·step` defined by its [`GeneSpec`]; the bitwise
//! crossovers operate on the grid index `i`.

mod engine;
mod operators;

use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::PathParams;

pub use engine::{
    evolve, evolve_observed, run_ga, run_objective, ExitReason, FitResult, GAState, GenerationView,
};
pub use operators::{
    cooling_rate, crossover, crossover_and, crossover_or, crossover_uniform, init_population,
    metropolis_accept, mutate, mutate_maximum, mutate_metropolis, mutate_nested,
    mutate_nested_with, propose_metropolis, rank, rechenberg_update, select, MetropolisProposal,
    Selection,
};

/// Bounds and quantisation step of one gene.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub step: f64,
}

impl GeneSpec {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64, step: f64) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            lower,
            upper,
            step,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lower.is_finite()
            && self.upper.is_finite()
            && self.step.is_finite()
            && self.lower < self.upper
            && self.step > 0.0;
        if !ok {
            return Err(Error::config(format!(
                "gene {}: need lower < upper and step > 0 (got {}, {}, {})",
                self.name, self.lower, self.upper, self.step
            )));
        }
        let span = (self.upper - self.lower) / self.step;
        if span < 1.0 - 1e-9 {
            return Err(Error::config(format!(
                "gene {}: step {} is larger than the range",
                self.name, self.step
            )));
        }
        if span + 1.0 > (1u64 << 32) as f64 {
            return Err(Error::config(format!(
                "gene {}: more than 2^32 grid levels",
                self.name
            )));
        }
        Ok(())
    }

    /// Number of grid levels, `floor((upper − lower)/step) + 1`.
    pub fn n_levels(&self) -> u64 {
        ((self.upper - self.lower) / self.step + 1e-9).floor() as u64 + 1
    }

    pub fn value(&self, index: u64) -> f64 {
        (self.lower + index as f64 * self.step).clamp(self.lower, self.upper)
    }

    /// Nearest grid index of `value`, clamped to the grid.
    pub fn index_of(&self, value: f64) -> u64 {
        let i = ((value - self.lower) / self.step).round();
        (i.max(0.0) as u64).min(self.n_levels() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.value(rng.random_range(0..self.n_levels()))
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower && value <= self.upper
    }
}

/// Gene specs per parameter kind, shared by every path.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneBounds {
    pub delta_e0: GeneSpec,
    pub s02: GeneSpec,
    pub sigma2: GeneSpec,
    pub delta_r: GeneSpec,
}

impl Default for GeneBounds {
    fn default() -> Self {
        Self {
            delta_e0: GeneSpec::new("delta_e0", -5.0, 5.0, 0.01).unwrap(),
            s02: GeneSpec::new("s02", 0.0, 1.0, 0.01).unwrap(),
            sigma2: GeneSpec::new("sigma2", 0.0, 0.02, 0.0001).unwrap(),
            delta_r: GeneSpec::new("delta_r", -0.1, 0.1, 0.001).unwrap(),
        }
    }
}

impl GeneBounds {
    pub fn validate(&self) -> Result<()> {
        self.delta_e0.validate()?;
        self.s02.validate()?;
        self.sigma2.validate()?;
        self.delta_r.validate()?;
        if self.s02.lower < 0.0 || self.sigma2.lower < 0.0 {
            return Err(Error::config("S0² and σ² lower bounds must be >= 0"));
        }
        Ok(())
    }

    /// Spec of gene `index` in the flat layout `[ΔE0, (S0², σ², ΔR) per path]`.
    pub fn spec(&self, index: usize) -> &GeneSpec {
        if index == 0 {
            return &self.delta_e0;
        }
        match (index - 1) % 3 {
            0 => &self.s02,
            1 => &self.sigma2,
            _ => &self.delta_r,
        }
    }

    pub fn contains(&self, c: &Chromosome) -> bool {
        (0..c.n_genes()).all(|i| self.spec(i).contains(c.gene(i)))
    }
}

/// One candidate solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Chromosome {
    pub delta_e0: f64,
    pub per_path: Vec<PathParams>,
}

impl Chromosome {
    pub fn n_paths(&self) -> usize {
        self.per_path.len()
    }

    pub fn n_genes(&self) -> usize {
        3 * self.per_path.len() + 1
    }

    pub fn gene(&self, index: usize) -> f64 {
        if index == 0 {
            return self.delta_e0;
        }
        let p = &self.per_path[(index - 1) / 3];
        match (index - 1) % 3 {
            0 => p.s02,
            1 => p.sigma2,
            _ => p.delta_r,
        }
    }

    pub fn set_gene(&mut self, index: usize, value: f64) {
        if index == 0 {
            self.delta_e0 = value;
            return;
        }
        let p = &mut self.per_path[(index - 1) / 3];
        match (index - 1) % 3 {
            0 => p.s02 = value,
            1 => p.sigma2 = value,
            _ => p.delta_r = value,
        }
    }

    pub fn genes(&self) -> Vec<f64> {
        (0..self.n_genes()).map(|i| self.gene(i)).collect()
    }

    pub fn from_genes(genes: &[f64]) -> Result<Self> {
        if genes.is_empty() || !(genes.len() - 1).is_multiple_of(3) {
            return Err(Error::config(format!(
                "gene count {} is not 3·n_paths + 1",
                genes.len()
            )));
        }
        let per_path = genes[1..]
            .chunks_exact(3)
            .map(|c| PathParams {
                s02: c[0],
                sigma2: c[1],
                delta_r: c[2],
            })
            .collect();
        Ok(Self {
            delta_e0: genes[0],
            per_path,
        })
    }

    /// Draws every gene uniformly from its grid, in layout order.
    pub fn random<R: Rng + ?Sized>(bounds: &GeneBounds, n_paths: usize, rng: &mut R) -> Self {
        let mut c = Chromosome {
            delta_e0: 0.0,
            per_path: vec![
                PathParams {
                    s02: 0.0,
                    sigma2: 0.0,
                    delta_r: 0.0,
                };
                n_paths
            ],
        };
        for i in 0..c.n_genes() {
            c.set_gene(i, bounds.spec(i).sample(rng));
        }
        c
    }

    /// Keeps the parameters of the paths at `indices`.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            delta_e0: self.delta_e0,
            per_path: indices.iter().map(|&i| self.per_path[i]).collect(),
        }
    }

    /// Human-readable gene names in layout order, e.g. `s02[path_2]`.
    pub fn gene_names(labels: &[&str]) -> Vec<String> {
        let mut names = vec!["delta_e0".to_string()];
        for l in labels {
            names.push(format!("s02[{l}]"));
            names.push(format!("sigma2[{l}]"));
            names.push(format!("delta_r[{l}]"));
        }
        names
    }
}

/// Anything that scores a chromosome; lower is better.
pub trait Objective: Sync {
    fn fitness(&self, chromosome: &Chromosome) -> Result<f64>;
}

/// Adapts a closure into an [`Objective`].
pub struct FnObjective<F>(pub F);

impl<F> Objective for FnObjective<F>
where
    F: Fn(&Chromosome) -> Result<f64> + Sync,
{
    fn fitness(&self, chromosome: &Chromosome) -> Result<f64> {
        (self.0)(chromosome)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossoverMethod {
    #[default]
    UniformRandom,
    And,
    Or,
}

impl FromStr for CrossoverMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" | "uniform_random" | "uniform-random" => Ok(Self::UniformRandom),
            "and" => Ok(Self::And),
            "or" => Ok(Self::Or),
            other => Err(Error::config(format!("unknown crossover method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MutationMethod {
    Maximum,
    Nested,
    #[default]
    Metropolis,
}

impl FromStr for MutationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maximum" | "max" => Ok(Self::Maximum),
            "nested" => Ok(Self::Nested),
            "metropolis" => Ok(Self::Metropolis),
            other => Err(Error::config(format!("unknown mutation method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GAConfig {
    pub population_size: usize,
    /// Total generations including the random initial one.
    pub max_generations: usize,
    pub elite_fraction: f64,
    pub random_fraction: f64,
    pub crossover: CrossoverMethod,
    pub mutation: MutationMethod,
    /// Starting mutation probability σ, percent.
    pub initial_mutation_rate: f64,
    pub mutation_rate_bounds: (f64, f64),
    pub rechenberg_factor: f64,
    /// Stop after this many generations without a strict improvement.
    pub patience: Option<usize>,
    pub rng_seed: u64,
    /// Fitness-evaluation threads; 1 evaluates on the calling thread.
    pub workers: usize,
}

impl Default for GAConfig {
    fn default() -> Self {
        Self {
            population_size: 200,
            max_generations: 50,
            elite_fraction: 0.2,
            random_fraction: 0.2,
            crossover: CrossoverMethod::UniformRandom,
            mutation: MutationMethod::Metropolis,
            initial_mutation_rate: 20.0,
            mutation_rate_bounds: (1.0, 90.0),
            rechenberg_factor: 0.9,
            patience: None,
            rng_seed: 0,
            workers: 1,
        }
    }
}

impl GAConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::config("population_size must be >= 2"));
        }
        if self.max_generations < 1 {
            return Err(Error::config("max_generations must be >= 1"));
        }
        let frac_ok = |f: f64| f > 0.0 && f < 1.0;
        if !frac_ok(self.elite_fraction) || !frac_ok(self.random_fraction) {
            return Err(Error::config("elite_fraction and random_fraction must lie in (0, 1)"));
        }
        if self.elite_fraction + self.random_fraction >= 1.0 {
            return Err(Error::config("elite_fraction + random_fraction must be < 1"));
        }
        let (lo, hi) = self.mutation_rate_bounds;
        if !(0.0..=100.0).contains(&lo) || !(0.0..=100.0).contains(&hi) || lo > hi {
            return Err(Error::config(format!("invalid mutation-rate bounds [{lo}, {hi}]")));
        }
        if !(lo..=hi).contains(&self.initial_mutation_rate) {
            return Err(Error::config(format!(
                "initial mutation rate {} outside bounds [{lo}, {hi}]",
                self.initial_mutation_rate
            )));
        }
        if !(self.rechenberg_factor > 0.0 && self.rechenberg_factor < 1.0) {
            return Err(Error::config("rechenberg_factor must lie in (0, 1)"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers must be >= 1"));
        }
        Ok(())
    }

    pub fn n_elite(&self) -> usize {
        ((self.elite_fraction * self.population_size as f64).round() as usize)
            .clamp(1, self.population_size)
    }

    pub fn n_random(&self) -> usize {
        ((self.random_fraction * self.population_size as f64).round() as usize)
            .min(self.population_size - self.n_elite())
    }

    pub fn n_children(&self) -> usize {
        self.population_size - self.n_elite() - self.n_random()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gene_layout_round_trip() {
        let genes: Vec<f64> = (0..7).map(|i| i as f64 * 0.5).collect();
        let c = Chromosome::from_genes(&genes).unwrap();
        assert_eq!(c.n_paths(), 2);
        assert_eq!(c.delta_e0, 0.0);
        assert_eq!(c.per_path[1].delta_r, 3.0);
        assert_eq!(c.genes(), genes);
        assert!(Chromosome::from_genes(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn gene_spec_grid() {
        let g = GeneSpec::new("x", 0.0, 1.0, 0.25).unwrap();
        assert_eq!(g.n_levels(), 5);
        assert_eq!(g.value(4), 1.0);
        assert_eq!(g.value(9), 1.0);
        assert_eq!(g.index_of(0.49), 2);
        assert!(GeneSpec::new("x", 1.0, 0.0, 0.1).is_err());
        assert!(GeneSpec::new("x", 0.0, 1.0, 2.0).is_err());
        assert!(GeneSpec::new("x", 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn config_counts() {
        let c = GAConfig {
            population_size: 10,
            ..GAConfig::default()
        };
        assert_eq!((c.n_elite(), c.n_random(), c.n_children()), (2, 2, 6));
        let bad = GAConfig {
            elite_fraction: 0.6,
            random_fraction: 0.4,
            ..GAConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
