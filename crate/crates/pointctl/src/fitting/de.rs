//! Differential evolution (rand/1/bin) over a box-bounded parameter space.
//!
//! Candidate generation consumes the seeded RNG in a fixed serial order and
//! selection is by member index, so results are identical whether loss
//! evaluations run serially or across a thread pool.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::Rng;

use super::ParameterSpace;

/// Search hyperparameters. `population: None` sizes the population as
/// max(15, 5 * dimension).
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub population: Option<usize>,
    pub max_generations: usize,
    /// Relative best-loss improvement below which the search counts as
    /// stalled, measured across `patience` generations.
    pub tolerance: f64,
    pub patience: usize,
    /// Differential weight F.
    pub mutation: f64,
    /// Crossover rate CR.
    pub crossover: f64,
    pub seed: u64,
    /// Loss-evaluation threads; 0 or 1 evaluates serially.
    pub parallel_width: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            population: None,
            max_generations: 300,
            tolerance: 1e-8,
            patience: 30,
            mutation: 0.8,
            crossover: 0.9,
            seed: 0,
            parallel_width: 1,
        }
    }
}

impl FitConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if let Some(p) = self.population {
            if p < 4 {
                return Err(Error::Fit(format!(
                    "population must be at least 4, got {p}"
                )));
            }
        }
        if dim == 0 {
            return Err(Error::Fit("parameter space is empty".into()));
        }
        if !(self.mutation > 0.0 && self.mutation <= 2.0) {
            return Err(Error::Fit(format!(
                "mutation factor must lie in (0, 2], got {}",
                self.mutation
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(Error::Fit(format!(
                "crossover rate must lie in [0, 1], got {}",
                self.crossover
            )));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Fit(format!(
                "tolerance must be nonnegative, got {}",
                self.tolerance
            )));
        }
        if self.patience == 0 {
            return Err(Error::Fit("patience must be at least 1 generation".into()));
        }
        Ok(())
    }

    pub fn population_for(&self, dim: usize) -> usize {
        self.population.unwrap_or_else(|| 15.max(5 * dim))
    }
}

/// Outcome of one optimization run.
#[derive(Debug, Clone)]
pub struct DeResult {
    pub best: Vec<f64>,
    pub best_loss: f64,
    /// Best loss after the initial population (entry 0) and after each
    /// generation; the reported best loss is the minimum over this history.
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub generations: usize,
    pub converged: bool,
}

/// Failed or non-finite evaluations enter the population as +infinity, which
/// greedy selection weeds out as soon as any candidate evaluates cleanly.
fn sanitize(loss: f64) -> f64 {
    if loss.is_nan() {
        f64::INFINITY
    } else {
        loss
    }
}

fn evaluate<L>(
    pool: Option<&rayon::ThreadPool>,
    loss: &L,
    candidates: &[Vec<f64>],
) -> Vec<f64>
where
    L: Fn(&[f64]) -> f64 + Sync,
{
    match pool {
        Some(pool) => pool.install(|| {
            candidates
                .par_iter()
                .map(|c| sanitize(loss(c)))
                .collect()
        }),
        None => candidates.iter().map(|c| sanitize(loss(c))).collect(),
    }
}

/// Initial draw for one coordinate. Strictly positive ranges spanning many
/// orders of magnitude are seeded log-uniformly; sampling those uniformly
/// would never place a member near the small-magnitude end, and after the
/// population collapses onto the lower bound the difference-based mutation
/// cannot regenerate small values.
fn initial_coordinate(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    if lo > 0.0 && hi / lo >= 1e4 {
        rng.uniform_in(lo.ln(), hi.ln()).exp().clamp(lo, hi)
    } else {
        rng.uniform_in(lo, hi)
    }
}

/// Three distinct member indices, all different from `i`.
fn pick_three(rng: &mut Rng, pop: usize, i: usize) -> [usize; 3] {
    let mut out = [0usize; 3];
    let mut chosen = 0;
    while chosen < 3 {
        let r = rng.index(pop);
        if r != i && !out[..chosen].contains(&r) {
            out[chosen] = r;
            chosen += 1;
        }
    }
    out
}

/// Minimize `loss` over the space with DE/rand/1/bin. Deterministic given
/// the seed; stops at the generation cap or once the relative best-loss
/// improvement over `patience` generations falls below `tolerance`.
pub fn differential_evolution<L>(
    space: &ParameterSpace,
    loss: L,
    cfg: &FitConfig,
) -> Result<DeResult>
where
    L: Fn(&[f64]) -> f64 + Sync,
{
    space.validate()?;
    let dim = space.dim();
    cfg.validate(dim)?;
    let pop_size = cfg.population_for(dim);

    let pool = if cfg.parallel_width > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.parallel_width)
                .build()
                .map_err(|e| Error::Fit(format!("cannot build evaluation pool: {e}")))?,
        )
    } else {
        None
    };

    let mut rng = Rng::from_seed(cfg.seed);
    let mut population: Vec<Vec<f64>> = (0..pop_size)
        .map(|_| {
            space
                .entries
                .iter()
                .map(|e| initial_coordinate(&mut rng, e.lo, e.hi))
                .collect()
        })
        .collect();
    let mut losses = evaluate(pool.as_ref(), &loss, &population);
    let mut evaluations = pop_size;

    let best_of = |losses: &[f64]| -> usize {
        losses
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, _)| i)
            .unwrap()
    };
    let mut history = vec![losses[best_of(&losses)]];
    let mut converged = false;
    let mut generations = 0;

    for _ in 1..=cfg.max_generations {
        // Trials for the whole generation are built first so the RNG order
        // never depends on how evaluations are scheduled.
        let trials: Vec<Vec<f64>> = (0..pop_size)
            .map(|i| {
                let [r1, r2, r3] = pick_three(&mut rng, pop_size, i);
                let j_rand = rng.index(dim);
                (0..dim)
                    .map(|j| {
                        let e = &space.entries[j];
                        let mutant =
                            population[r1][j] + cfg.mutation * (population[r2][j] - population[r3][j]);
                        let v = if j == j_rand || rng.uniform() < cfg.crossover {
                            mutant
                        } else {
                            population[i][j]
                        };
                        // Out-of-box coordinates are redrawn inside the box
                        // rather than clipped: clipping parks members exactly
                        // on a bound face, and once every member shares that
                        // coordinate the difference-based mutation can never
                        // leave the face again.
                        if v < e.lo || v > e.hi || !v.is_finite() {
                            rng.uniform_in(e.lo, e.hi)
                        } else {
                            v
                        }
                    })
                    .collect()
            })
            .collect();
        let trial_losses = evaluate(pool.as_ref(), &loss, &trials);
        evaluations += pop_size;
        generations += 1;

        for (i, (trial, trial_loss)) in trials.into_iter().zip(trial_losses).enumerate() {
            if trial_loss <= losses[i] {
                population[i] = trial;
                losses[i] = trial_loss;
            }
        }

        let gen_best = losses[best_of(&losses)];
        history.push(gen_best);
        if history.len() > cfg.patience {
            let prev = history[history.len() - 1 - cfg.patience];
            let improvement = (prev - gen_best) / prev.abs().max(f64::MIN_POSITIVE);
            if improvement < cfg.tolerance {
                converged = true;
                break;
            }
        }
    }

    let best_idx = best_of(&losses);
    Ok(DeResult {
        best: population[best_idx].clone(),
        best_loss: losses[best_idx],
        history,
        evaluations,
        generations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::{ParamEntry, ParamKind};
    use crate::models::ModelKind;

    fn two_ol_space() -> ParameterSpace {
        ParameterSpace::for_model(ModelKind::TwoOlEq, 100)
    }

    fn cfg(seed: u64) -> FitConfig {
        FitConfig {
            seed,
            ..FitConfig::default()
        }
    }

    #[test]
    fn sphere_benchmark_converges() {
        let space = two_ol_space();
        let target = [40.0, 12.0];
        let loss = |x: &[f64]| {
            x.iter()
                .zip(&target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        };
        let result = differential_evolution(
            &space,
            loss,
            &FitConfig {
                population: Some(15),
                max_generations: 200,
                tolerance: 0.0,
                ..cfg(3)
            },
        )
        .unwrap();
        assert!(result.best_loss < 1e-6, "loss {}", result.best_loss);
        assert!(result.generations <= 200);
    }

    #[test]
    fn constant_loss_keeps_value_and_converges() {
        let space = two_ol_space();
        let result = differential_evolution(&space, |_| 7.25, &cfg(5)).unwrap();
        assert_eq!(result.best_loss, 7.25);
        assert!(result.converged);
        assert!(result.history.iter().all(|&l| l == 7.25));
        for (x, e) in result.best.iter().zip(&space.entries) {
            assert!(*x >= e.lo && *x <= e.hi);
        }
    }

    #[test]
    fn same_seed_is_deterministic() {
        let space = two_ol_space();
        let loss = |x: &[f64]| (x[0] - 100.0).powi(2) + 0.5 * (x[1] - 30.0).powi(2);
        let a = differential_evolution(&space, loss, &cfg(11)).unwrap();
        let b = differential_evolution(&space, loss, &cfg(11)).unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.history, b.history);
        assert_eq!(a.evaluations, b.evaluations);
        let c = differential_evolution(&space, loss, &cfg(12)).unwrap();
        assert!(c.best != a.best || c.history != a.history);
    }

    #[test]
    fn parallel_matches_serial_exactly() {
        let space = two_ol_space();
        let loss = |x: &[f64]| (x[0] - 250.0).powi(2) + (x[1] - 2.0).powi(2);
        let serial = differential_evolution(&space, loss, &cfg(21)).unwrap();
        let parallel = differential_evolution(
            &space,
            loss,
            &FitConfig {
                parallel_width: 4,
                ..cfg(21)
            },
        )
        .unwrap();
        assert_eq!(serial.best, parallel.best);
        assert_eq!(serial.history, parallel.history);
        assert_eq!(serial.best_loss, parallel.best_loss);
    }

    #[test]
    fn every_evaluated_candidate_is_in_bounds() {
        let space = two_ol_space();
        let loss = |x: &[f64]| {
            for (v, e) in x.iter().zip(&space.entries) {
                assert!(*v >= e.lo && *v <= e.hi, "candidate {v} outside [{}, {}]", e.lo, e.hi);
            }
            (x[0] - 499.0).powi(2) + (x[1] - 499.0).powi(2)
        };
        let result = differential_evolution(
            &space,
            loss,
            &FitConfig {
                max_generations: 60,
                ..cfg(2)
            },
        )
        .unwrap();
        assert!(result.best_loss < 10.0);
    }

    #[test]
    fn best_loss_is_monotone_and_min_of_history() {
        let space = two_ol_space();
        let loss = |x: &[f64]| (x[0] - 321.0).powi(2) + (x[1] - 45.0).powi(2);
        let result = differential_evolution(&space, loss, &cfg(8)).unwrap();
        for w in result.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let min = result.history.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(result.best_loss, min);
    }

    #[test]
    fn zero_generations_returns_initial_best_unconverged() {
        let space = two_ol_space();
        let loss = |x: &[f64]| x[0] + x[1];
        let result = differential_evolution(
            &space,
            loss,
            &FitConfig {
                max_generations: 0,
                ..cfg(4)
            },
        )
        .unwrap();
        assert_eq!(result.history.len(), 1);
        assert_eq!(result.generations, 0);
        assert!(!result.converged);
        assert_eq!(result.evaluations, 15);
        assert_eq!(result.best_loss, result.history[0]);
    }

    #[test]
    fn failed_evaluations_never_win_over_finite_ones() {
        let space = two_ol_space();
        // Half the box is poisoned; the optimum sits inside the valid half.
        let loss = |x: &[f64]| {
            if x[0] < 250.0 {
                f64::INFINITY
            } else {
                (x[0] - 300.0).powi(2) + x[1] * x[1]
            }
        };
        let result = differential_evolution(&space, loss, &cfg(6)).unwrap();
        assert!(result.best_loss.is_finite());
        assert!(result.best[0] >= 250.0);
    }

    #[test]
    fn all_failures_surface_as_infinite_best() {
        let space = two_ol_space();
        let result = differential_evolution(
            &space,
            |_| f64::NAN,
            &FitConfig {
                max_generations: 3,
                ..cfg(1)
            },
        )
        .unwrap();
        assert!(result.best_loss.is_infinite());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let space = two_ol_space();
        let bad_pop = FitConfig {
            population: Some(3),
            ..FitConfig::default()
        };
        assert!(differential_evolution(&space, |_| 0.0, &bad_pop).is_err());
        let bad_space = ParameterSpace {
            entries: vec![ParamEntry {
                name: "x",
                lo: 1.0,
                hi: 1.0,
                kind: ParamKind::Continuous,
            }],
        };
        assert!(differential_evolution(&bad_space, |_| 0.0, &FitConfig::default()).is_err());
    }
}
