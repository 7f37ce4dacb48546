//! Real-coded genetic algorithm used to seed the local optimizer.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy)]
pub struct GeneticSettings {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub tournament: usize,
    pub elites: usize,
}

impl Default for GeneticSettings {
    fn default() -> Self {
        Self { population_size: 60, generations: 80, crossover_rate: 0.9, tournament: 3, elites: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genes: Vec<f64>,
    /// Higher is better; `-inf` marks infeasible points.
    pub fitness: f64,
}

#[derive(Debug, Clone)]
pub struct GeneticOutcome {
    /// Final population, best first.
    pub population: Vec<Individual>,
    /// Best fitness in the initial population.
    pub initial_best: f64,
    pub evaluations: usize,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

fn by_fitness(a: &Individual, b: &Individual) -> std::cmp::Ordering {
    b.fitness.total_cmp(&a.fitness)
}

/// Maximizes `fitness` over the box. `canonicalize` maps genes to a
/// canonical representative (e.g. sorted exponential components) before
/// every evaluation. `seeds` are placed in the initial population ahead of
/// the uniformly drawn individuals.
pub fn evolve<F, C>(
    fitness: &F,
    canonicalize: &C,
    lo: &[f64],
    hi: &[f64],
    seeds: &[Vec<f64>],
    settings: &GeneticSettings,
    rng: &mut ChaCha8Rng,
) -> GeneticOutcome
where
    F: Fn(&[f64]) -> f64 + Sync,
    C: Fn(&mut [f64]),
{
    let dim = lo.len();
    let size = settings.population_size.max(2);
    let mut genomes: Vec<Vec<f64>> = seeds.iter().take(size).cloned().collect();
    while genomes.len() < size {
        genomes.push((0..dim).map(|k| rng.gen_range(lo[k]..=hi[k])).collect());
    }
    for g in &mut genomes {
        for k in 0..dim {
            g[k] = g[k].clamp(lo[k], hi[k]);
        }
        canonicalize(g);
    }
    let mut population = score(fitness, genomes);
    let mut evaluations = population.len();
    population.sort_by(by_fitness);
    let initial_best = population[0].fitness;

    let mutation_rate = 1.0 / dim.max(1) as f64;
    for _ in 0..settings.generations {
        let mut children: Vec<Vec<f64>> = Vec::with_capacity(size);
        while children.len() + settings.elites.min(size) < size {
            let a = tournament(&population, settings.tournament, rng);
            let b = tournament(&population, settings.tournament, rng);
            let (mut c1, mut c2) = if rng.gen::<f64>() < settings.crossover_rate {
                blend(&population[a].genes, &population[b].genes, rng)
            } else {
                (population[a].genes.clone(), population[b].genes.clone())
            };
            for child in [&mut c1, &mut c2] {
                for k in 0..dim {
                    if rng.gen::<f64>() < mutation_rate {
                        // Box-Muller normal scaled to a tenth of the range
                        let u1: f64 = 1.0 - rng.gen::<f64>();
                        let u2: f64 = rng.gen();
                        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                        child[k] += 0.1 * (hi[k] - lo[k]) * z;
                    }
                    child[k] = child[k].clamp(lo[k], hi[k]);
                }
                canonicalize(child);
            }
            children.push(c1);
            if children.len() + settings.elites.min(size) < size {
                children.push(c2);
            }
        }
        evaluations += children.len();
        let mut next: Vec<Individual> = population[..settings.elites.min(size)].to_vec();
        next.extend(score(fitness, children));
        next.sort_by(by_fitness);
        population = next;
    }

    GeneticOutcome { population, initial_best, evaluations }
}

fn score<F: Fn(&[f64]) -> f64 + Sync>(fitness: &F, genomes: Vec<Vec<f64>>) -> Vec<Individual> {
    genomes
        .into_par_iter()
        .map(|genes| {
            let fit = sanitize(fitness(&genes));
            Individual { genes, fitness: fit }
        })
        .collect()
}

fn tournament(population: &[Individual], k: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut best = rng.gen_range(0..population.len());
    for _ in 1..k.max(1) {
        let other = rng.gen_range(0..population.len());
        if population[other].fitness > population[best].fitness {
            best = other;
        }
    }
    best
}

/// BLX-0.5 crossover.
fn blend(a: &[f64], b: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = Vec::with_capacity(a.len());
    let mut c2 = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(b) {
        let (lo, hi) = if x < y { (*x, *y) } else { (*y, *x) };
        let span = hi - lo;
        let (l, h) = (lo - 0.5 * span, hi + 0.5 * span);
        if span > 0.0 {
            c1.push(rng.gen_range(l..=h));
            c2.push(rng.gen_range(l..=h));
        } else {
            c1.push(lo);
            c2.push(lo);
        }
    }
    (c1, c2)
}
