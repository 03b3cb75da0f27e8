//! Selection, crossover and mutation operators plus the two schedule rules
//! (cooling rate and the 1/5 success rule).

use rand::Rng;

use super::{Chromosome, CrossoverMethod, GAConfig, GeneBounds, MutationMethod, Objective};
use crate::error::{Error, Result};

pub fn init_population<R: Rng + ?Sized>(
    bounds: &GeneBounds,
    n_paths: usize,
    config: &GAConfig,
    rng: &mut R,
) -> Vec<Chromosome> {
    (0..config.population_size)
        .map(|_| Chromosome::random(bounds, n_paths, rng))
        .collect()
}

/// Indices sorted best-first (ascending fitness). Ties keep population order.
pub fn rank(fitnesses: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitnesses.len()).collect();
    order.sort_by(|&a, &b| fitnesses[a].total_cmp(&fitnesses[b]));
    order
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Best `n_elite` individuals with their fitness, best first. Also the parent pool.
    pub elites: Vec<(Chromosome, f64)>,
    pub ranked: Vec<usize>,
}

impl Selection {
    pub fn parent_pool(&self) -> &[(Chromosome, f64)] {
        &self.elites
    }
}

pub fn select(population: &[Chromosome], fitnesses: &[f64], config: &GAConfig) -> Result<Selection> {
    if population.len() < 2 {
        return Err(Error::config("selection needs a population of at least 2"));
    }
    if population.len() != fitnesses.len() {
        return Err(Error::config("population and fitness lengths differ"));
    }
    let ranked = rank(fitnesses);
    let n_elite = config.n_elite().min(population.len());
    let elites = ranked[..n_elite]
        .iter()
        .map(|&i| (population[i].clone(), fitnesses[i]))
        .collect();
    Ok(Selection { elites, ranked })
}

pub fn crossover_uniform<R: Rng + ?Sized>(a: &Chromosome, b: &Chromosome, rng: &mut R) -> Chromosome {
    let mut child = a.clone();
    for i in 0..a.n_genes() {
        if rng.random_bool(0.5) {
            child.set_gene(i, b.gene(i));
        }
    }
    child
}

fn crossover_bitwise(
    a: &Chromosome,
    b: &Chromosome,
    bounds: &GeneBounds,
    op: impl Fn(u64, u64) -> u64,
) -> Chromosome {
    let mut child = a.clone();
    for i in 0..a.n_genes() {
        let spec = bounds.spec(i);
        let idx = op(spec.index_of(a.gene(i)), spec.index_of(b.gene(i)));
        child.set_gene(i, spec.value(idx.min(spec.n_levels() - 1)));
    }
    child
}

/// Child grid index is the bitwise AND of the parents' indices.
pub fn crossover_and(a: &Chromosome, b: &Chromosome, bounds: &GeneBounds) -> Chromosome {
    crossover_bitwise(a, b, bounds, |x, y| x & y)
}

/// Child grid index is the bitwise OR of the parents' indices, clamped to the grid.
pub fn crossover_or(a: &Chromosome, b: &Chromosome, bounds: &GeneBounds) -> Chromosome {
    crossover_bitwise(a, b, bounds, |x, y| x | y)
}

pub fn crossover<R: Rng + ?Sized>(
    method: CrossoverMethod,
    a: &Chromosome,
    b: &Chromosome,
    bounds: &GeneBounds,
    rng: &mut R,
) -> Chromosome {
    match method {
        CrossoverMethod::UniformRandom => crossover_uniform(a, b, rng),
        CrossoverMethod::And => crossover_and(a, b, bounds),
        CrossoverMethod::Or => crossover_or(a, b, bounds),
    }
}

#[inline]
fn draw_percent<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(0.0..100.0)
}

/// With probability σ% the whole chromosome is replaced by a fresh random one.
/// Returns the result and whether it changed.
pub fn mutate_maximum<R: Rng + ?Sized>(
    individual: &Chromosome,
    sigma: f64,
    bounds: &GeneBounds,
    rng: &mut R,
) -> (Chromosome, bool) {
    if draw_percent(rng) < sigma {
        (Chromosome::random(bounds, individual.n_paths(), rng), true)
    } else {
        (individual.clone(), false)
    }
}

/// Nested mutation with the per-gene gate supplied by the caller.
///
/// With a gate that always passes and consumes no randomness this is
/// identical to [`mutate_maximum`].
pub fn mutate_nested_with<R, G>(
    individual: &Chromosome,
    sigma: f64,
    bounds: &GeneBounds,
    rng: &mut R,
    mut gate: G,
) -> (Chromosome, bool)
where
    R: Rng + ?Sized,
    G: FnMut(&mut R) -> bool,
{
    let mut out = individual.clone();
    let mut changed = false;
    if draw_percent(rng) < sigma {
        for i in 0..out.n_genes() {
            if gate(rng) {
                out.set_gene(i, bounds.spec(i).sample(rng));
                changed = true;
            }
        }
    }
    (out, changed)
}

/// Gate draw x < σ, then each gene is regenerated independently when y < σ.
pub fn mutate_nested<R: Rng + ?Sized>(
    individual: &Chromosome,
    sigma: f64,
    bounds: &GeneBounds,
    rng: &mut R,
) -> (Chromosome, bool) {
    mutate_nested_with(individual, sigma, bounds, rng, |r| draw_percent(r) < sigma)
}

/// Maximum or nested mutation; Metropolis needs fitness and goes through
/// [`propose_metropolis`] instead.
pub fn mutate<R: Rng + ?Sized>(
    method: MutationMethod,
    individual: &Chromosome,
    sigma: f64,
    bounds: &GeneBounds,
    rng: &mut R,
) -> (Chromosome, bool) {
    match method {
        MutationMethod::Maximum => mutate_maximum(individual, sigma, bounds, rng),
        MutationMethod::Nested | MutationMethod::Metropolis => {
            mutate_nested(individual, sigma, bounds, rng)
        }
    }
}

/// A mutated candidate and the uniform draw `t` its acceptance test will use.
#[derive(Debug, Clone, PartialEq)]
pub struct MetropolisProposal {
    pub candidate: Chromosome,
    pub t: f64,
}

/// First half of a Metropolis mutation: gate draw, then per-gene regeneration of
/// the path genes (ΔE0 is left alone). All randomness is consumed here.
pub fn propose_metropolis<R: Rng + ?Sized>(
    individual: &Chromosome,
    sigma: f64,
    bounds: &GeneBounds,
    rng: &mut R,
) -> Option<MetropolisProposal> {
    if draw_percent(rng) >= sigma {
        return None;
    }
    let mut candidate = individual.clone();
    for i in 1..candidate.n_genes() {
        if draw_percent(rng) < sigma {
            candidate.set_gene(i, bounds.spec(i).sample(rng));
        }
    }
    let t = rng.random::<f64>();
    Some(MetropolisProposal { candidate, t })
}

/// Accepts improvements outright; a worse or equal move is accepted when
/// `exp(−(f_mut − f_orig)/K) < t`. Without a positive finite `K` only
/// improvements pass.
pub fn metropolis_accept(f_mut: f64, f_orig: f64, cooling: Option<f64>, t: f64) -> bool {
    if f_mut < f_orig {
        return true;
    }
    match cooling {
        Some(k) if k > 0.0 && k.is_finite() => (-(f_mut - f_orig) / k).exp() < t,
        _ => false,
    }
}

/// Complete Metropolis mutation of one individual.
pub fn mutate_metropolis<R, O>(
    individual: &Chromosome,
    sigma: f64,
    f_orig: f64,
    cooling: Option<f64>,
    bounds: &GeneBounds,
    rng: &mut R,
    objective: &O,
) -> Result<(Chromosome, f64)>
where
    R: Rng + ?Sized,
    O: Objective + ?Sized,
{
    let Some(p) = propose_metropolis(individual, sigma, bounds, rng) else {
        return Ok((individual.clone(), f_orig));
    };
    let f_mut = objective.fitness(&p.candidate)?;
    if metropolis_accept(f_mut, f_orig, cooling, p.t) {
        Ok((p.candidate, f_mut))
    } else {
        Ok((individual.clone(), f_orig))
    }
}

/// `K(i) = −δf / ln(1 − i/i_max)`; `None` where it is undefined (`i = 0` or `i ≥ i_max`).
pub fn cooling_rate(delta_f: f64, i: usize, i_max: usize) -> Option<f64> {
    if i == 0 || i >= i_max {
        return None;
    }
    let k = -delta_f.abs() / (1.0 - i as f64 / i_max as f64).ln();
    k.is_finite().then_some(k)
}

/// 1/5 success rule: σ/c above a 1/5 success ratio, σ·c below, unchanged at
/// exactly 1/5; clamped to the configured bounds.
pub fn rechenberg_update(sigma: f64, success_ratio: f64, config: &GAConfig) -> f64 {
    let c = config.rechenberg_factor;
    let next = if success_ratio > 0.2 {
        sigma / c
    } else if success_ratio < 0.2 {
        sigma * c
    } else {
        sigma
    };
    let (lo, hi) = config.mutation_rate_bounds;
    next.clamp(lo, hi)
}
