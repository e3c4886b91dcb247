//! Synthetic corpora: sampled (stochastic families) or replicated
//! (deterministic families) model trajectories in the corpus schema, so the
//! full pipeline and the fitting layer can be exercised without a recorded
//! dataset.

use crate::error::Result;
use crate::models::{simulate_model, ModelParams, SolveOptions, TaskSpec};
use crate::rng::Rng;

use super::{Direction, RawTrial, TrialMeta};

/// Condition metadata implied by a task: distance and direction from start
/// and target, caller-chosen participant label.
pub fn meta_for_task(task: &TaskSpec, participant: &str) -> TrialMeta {
    TrialMeta {
        participant: participant.to_string(),
        distance_m: (task.target - task.start).abs(),
        width_m: task.width,
        direction: if task.target >= task.start {
            Direction::Right
        } else {
            Direction::Left
        },
    }
}

/// Generate `count` trials of one condition. Stochastic families draw
/// independent rollouts; deterministic families repeat their single
/// trajectory. `jitter_std` adds white positional noise per sample (0 for
/// none). Each trial uses an RNG substream keyed by its index, so corpora
/// are reproducible and independent of trial order.
pub fn synthesize_corpus(
    params: &ModelParams,
    task: &TaskSpec,
    participant: &str,
    count: usize,
    seed: u64,
    jitter_std: f64,
) -> Result<Vec<RawTrial>> {
    let meta = meta_for_task(task, participant);
    let out = simulate_model(params, task, &SolveOptions::default())?;
    let base = match &out.solution {
        Some(_) => None,
        None => Some(out.trace.pos.clone()),
    };
    (0..count)
        .map(|i| {
            let mut rng = Rng::from_seed_stream(seed, i as u64);
            let mut positions = match (&out.solution, &base) {
                (Some(sol), _) => sol.sample_trajectory(&mut rng).positions(),
                (None, Some(p)) => p.clone(),
                (None, None) => unreachable!(),
            };
            if jitter_std > 0.0 {
                for p in &mut positions {
                    *p += jitter_std * rng.gauss();
                }
            }
            Ok(RawTrial {
                meta: meta.clone(),
                trial_id: format!("s{i:04}"),
                h: task.h,
                positions,
                discarded: false,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::extend_and_align;
    use crate::models::{LqCostWeights, LqgNoiseParams, TaskSpec, TwoOlParams};

    fn task() -> TaskSpec {
        TaskSpec::new(0.0, 0.15, 0.01, 200)
    }

    fn lqg_params() -> ModelParams {
        ModelParams::Lqg {
            weights: LqCostWeights::new(1.0, 0.5, 1e-3).unwrap(),
            noise: LqgNoiseParams::new(0.4, 0.3).unwrap(),
        }
    }

    #[test]
    fn fixed_seed_reproduces_corpus() {
        let a = synthesize_corpus(&lqg_params(), &task(), "p", 20, 9, 0.0).unwrap();
        let b = synthesize_corpus(&lqg_params(), &task(), "p", 20, 9, 0.0).unwrap();
        assert_eq!(a.len(), 20);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.positions, y.positions);
        }
        let c = synthesize_corpus(&lqg_params(), &task(), "p", 20, 10, 0.0).unwrap();
        assert!(a[0].positions != c[0].positions);
    }

    #[test]
    fn trials_vary_across_indices() {
        let trials = synthesize_corpus(&lqg_params(), &task(), "p", 5, 1, 0.0).unwrap();
        for t in &trials[1..] {
            assert!(t.positions != trials[0].positions);
        }
    }

    #[test]
    fn deterministic_model_with_zero_jitter_repeats_exactly() {
        let params = ModelParams::TwoOlEq(TwoOlParams::new(80.0, 12.0).unwrap());
        let trials = synthesize_corpus(&params, &task(), "p", 8, 3, 0.0).unwrap();
        for t in &trials[1..] {
            assert_eq!(t.positions, trials[0].positions);
        }
        let jittered = synthesize_corpus(&params, &task(), "p", 8, 3, 1e-4).unwrap();
        assert!(jittered[0].positions != jittered[1].positions);
        let diff: f64 = jittered[0]
            .positions
            .iter()
            .zip(&trials[0].positions)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff > 0.0 && diff < 1e-3);
    }

    #[test]
    fn ensemble_variance_matches_prediction() {
        let params = lqg_params();
        let t = task();
        let trials = synthesize_corpus(&params, &t, "p", 4000, 17, 0.0).unwrap();
        let ensemble = extend_and_align(&trials).unwrap();
        let out = simulate_model(&params, &t, &SolveOptions::default()).unwrap();
        let dist = out.distribution.unwrap();
        let n = t.n_steps;
        for &frame in &[n / 4, n / 2, 3 * n / 4, n] {
            let (mean, cov) = dist.steps[frame].pos_vel_marginal();
            let p_std = cov[(0, 0)].sqrt();
            let se = p_std / (trials.len() as f64).sqrt();
            assert!(
                (ensemble.mean_pos[frame] - mean[0]).abs() < 4.0 * se.max(1e-9),
                "frame {frame}: mean {} vs {}",
                ensemble.mean_pos[frame],
                mean[0]
            );
            let var = ensemble.cov[frame][(0, 0)];
            assert!(
                (var - cov[(0, 0)]).abs() < 0.15 * cov[(0, 0)].max(1e-12),
                "frame {frame}: var {var} vs {}",
                cov[(0, 0)]
            );
        }
    }

    #[test]
    fn meta_reflects_task_direction() {
        let leftward = TaskSpec::new(0.2, 0.05, 0.01, 100);
        let m = meta_for_task(&leftward, "q");
        assert_eq!(m.direction, Direction::Left);
        assert!((m.distance_m - 0.15).abs() < 1e-12);
    }
}
