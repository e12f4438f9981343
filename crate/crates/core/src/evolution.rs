//! Differential evolution (rand/1/bin) maximizing a bounded objective.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DeOptions {
    pub population: usize,
    pub f: f64,
    pub cr: f64,
    pub max_gens: usize,
    pub seed: u64,
    /// Stop once the best value has not improved by more than
    /// `stagnation_tol` (relative) for this many generations.
    pub stagnation_gens: Option<usize>,
    pub stagnation_tol: f64,
}

impl Default for DeOptions {
    fn default() -> Self {
        Self { population: 30, f: 0.8, cr: 0.9, max_gens: 300, seed: 0, stagnation_gens: Some(50), stagnation_tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionReport {
    /// Best value after initialization (entry 0) and after each generation.
    pub best_per_gen: Vec<f64>,
    pub best: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    /// True when the run stopped on stagnation rather than the generation cap.
    pub converged: bool,
}

/// Maps `x` back into `[lo, hi]` by mirroring at the violated bound.
pub fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    let mut y = x;
    if y < lo || y > hi {
        let t = (y - lo).rem_euclid(2.0 * width);
        y = if t <= width { lo + t } else { hi - (t - width) };
    }
    y.clamp(lo, hi)
}

/// Maximizes `objective` over the box `bounds`. `initial` members (reflected
/// into the box) come first in the population; the rest are uniform samples.
pub fn evolve<F>(bounds: &[(f64, f64)], objective: F, initial: &[Vec<f64>], opt: &DeOptions) -> Result<EvolutionReport>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if bounds.is_empty() {
        return Err(Error::InvalidArgument("search space is empty".into()));
    }
    if opt.population < 4 {
        return Err(Error::InvalidArgument(format!("population must be at least 4, got {}", opt.population)));
    }
    if let Some((i, _)) = bounds.iter().enumerate().find(|(_, (lo, hi))| !(lo < hi)) {
        return Err(Error::InvalidArgument(format!("search bound {i} is empty")));
    }
    let dim = bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let mut pop: Vec<Vec<f64>> = Vec::with_capacity(opt.population);
    for member in initial.iter().take(opt.population) {
        if member.len() != dim {
            return Err(Error::Dimension { expected: dim, got: member.len() });
        }
        pop.push(member.iter().zip(bounds).map(|(x, (lo, hi))| reflect(*x, *lo, *hi)).collect());
    }
    while pop.len() < opt.population {
        pop.push(bounds.iter().map(|(lo, hi)| rng.random_range(*lo..*hi)).collect());
    }
    let mut fitness: Vec<f64> = pop.par_iter().map(|x| sanitize(objective(x))).collect();
    let mut evaluations = pop.len();

    let best_of = |fit: &[f64]| {
        let mut b = 0;
        for i in 1..fit.len() {
            if fit[i] > fit[b] {
                b = i;
            }
        }
        b
    };
    let mut best = best_of(&fitness);
    let mut history = vec![fitness[best]];
    let mut since_improvement = 0;
    let mut reference = fitness[best];
    let mut converged = false;

    for _ in 0..opt.max_gens {
        // trials are drawn sequentially so the stream is independent of thread count
        let trials: Vec<Vec<f64>> = (0..opt.population)
            .map(|i| {
                let picks = sample(&mut rng, opt.population - 1, 3);
                let idx: Vec<usize> = picks.iter().map(|k| if k >= i { k + 1 } else { k }).collect();
                let (a, b, c) = (&pop[idx[0]], &pop[idx[1]], &pop[idx[2]]);
                let forced = rng.random_range(0..dim);
                (0..dim)
                    .map(|j| {
                        if j == forced || rng.random::<f64>() < opt.cr {
                            let (lo, hi) = bounds[j];
                            reflect(a[j] + opt.f * (b[j] - c[j]), lo, hi)
                        } else {
                            pop[i][j]
                        }
                    })
                    .collect()
            })
            .collect();
        let scores: Vec<f64> = trials.par_iter().map(|x| sanitize(objective(x))).collect();
        evaluations += trials.len();
        for (i, (trial, score)) in trials.into_iter().zip(scores).enumerate() {
            if score >= fitness[i] {
                pop[i] = trial;
                fitness[i] = score;
            }
        }
        best = best_of(&fitness);
        history.push(fitness[best]);

        if let Some(window) = opt.stagnation_gens {
            let gain = fitness[best] - reference;
            if gain > opt.stagnation_tol * reference.abs().max(f64::MIN_POSITIVE) {
                reference = fitness[best];
                since_improvement = 0;
            } else {
                since_improvement += 1;
                if since_improvement >= window {
                    converged = true;
                    break;
                }
            }
        }
    }
    Ok(EvolutionReport { best_per_gen: history, best: pop[best].clone(), best_value: fitness[best], evaluations, converged })
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}
