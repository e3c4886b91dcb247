//! Trajectory-corpus ingestion, preprocessing, ensemble statistics, and
//! synthetic-corpus generation.
//!
//! A corpus is a set of CSV files, one per (participant, task, direction),
//! each holding many trials of 1-D pointer positions at a uniform 2 ms step.
//! The pipeline strips reaction time, removes positional and duration
//! outliers, aligns trials by padding with their final position, and reduces
//! them to per-frame position-velocity Gaussians that the metrics and fitting
//! layers consume.

mod corpus;
mod preprocess;
mod synth;

pub use corpus::{load_corpus, parse_corpus_filename, write_corpus};
pub use preprocess::{
    extend_and_align, group_by_condition, preprocess_condition, reaction_onset,
    reference_acceleration, remove_outliers, strip_reaction_time, OutlierReport, PipelineReport,
};
pub use synth::{meta_for_task, synthesize_corpus};

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindyn::DistributionTrajectory;
use crate::metrics::Gaussian2;
use crate::models::TaskSpec;

/// Movement direction along the 1-D axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    /// Sign of the movement: +1 rightward, -1 leftward.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Left => -1.0,
            Direction::Right => 1.0,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Direction::Left),
            "right" => Ok(Direction::Right),
            other => Err(Error::Data(format!(
                "unknown direction '{other}' (expected left or right)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

/// Condition metadata shared by all trials in one corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub participant: String,
    /// Center-to-center target distance D (m).
    pub distance_m: f64,
    /// Target width W (m).
    pub width_m: f64,
    pub direction: Direction,
}

/// One recorded movement: uniformly sampled positions at step `h`.
#[derive(Debug, Clone)]
pub struct RawTrial {
    pub meta: TrialMeta,
    pub trial_id: String,
    pub h: f64,
    pub positions: Vec<f64>,
    /// Set when reaction-time stripping finds no valid movement onset; such
    /// trials carry their original samples but are dropped by the pipeline.
    pub discarded: bool,
}

impl RawTrial {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Trial duration (len - 1) · h in seconds.
    pub fn duration_s(&self) -> f64 {
        self.positions.len().saturating_sub(1) as f64 * self.h
    }

    /// Forward-difference velocity, one entry shorter than the positions.
    pub fn velocity(&self) -> Vec<f64> {
        self.positions
            .windows(2)
            .map(|w| (w[1] - w[0]) / self.h)
            .collect()
    }

    /// Second-difference acceleration, two entries shorter than positions.
    pub fn acceleration(&self) -> Vec<f64> {
        self.positions
            .windows(3)
            .map(|w| (w[2] - 2.0 * w[1] + w[0]) / (self.h * self.h))
            .collect()
    }
}

/// Aligned trials of one condition reduced to per-frame statistics: mean
/// position and velocity plus the 2x2 position-velocity covariance (population
/// covariance over trials, so a single trial yields exact zeros).
#[derive(Debug, Clone)]
pub struct TrajectoryEnsemble {
    pub meta: TrialMeta,
    pub h: f64,
    /// Aligned per-trial position series, all of equal length.
    pub positions: Vec<Vec<f64>>,
    /// Aligned per-trial velocity series (forward differences, final frame 0).
    pub velocities: Vec<Vec<f64>>,
    pub mean_pos: Vec<f64>,
    pub mean_vel: Vec<f64>,
    pub cov: Vec<Matrix2<f64>>,
}

impl TrajectoryEnsemble {
    /// Number of steps N; all per-frame series have N+1 entries.
    pub fn n_steps(&self) -> usize {
        self.mean_pos.len().saturating_sub(1)
    }

    pub fn n_trials(&self) -> usize {
        self.positions.len()
    }

    /// Per-frame (position, velocity) Gaussians for the distribution metrics.
    pub fn gaussian_series(&self) -> Vec<Gaussian2> {
        self.mean_pos
            .iter()
            .zip(&self.mean_vel)
            .zip(&self.cov)
            .map(|((&p, &v), c)| Gaussian2::new(nalgebra::Vector2::new(p, v), *c))
            .collect()
    }

    /// Task description implied by the ensemble: initial kinematics from
    /// frame 0, target at the metadata distance from the start in the
    /// movement direction.
    pub fn task_spec(&self) -> Result<TaskSpec> {
        if self.n_steps() < 2 {
            return Err(Error::Data(format!(
                "ensemble too short for a task ({} frames)",
                self.mean_pos.len()
            )));
        }
        let start = self.mean_pos[0];
        let task = TaskSpec {
            p0: start,
            v0: self.mean_vel[0],
            pos_vel_cov: self.cov[0],
            start,
            target: start + self.meta.direction.sign() * self.meta.distance_m,
            width: self.meta.width_m,
            n_steps: self.n_steps(),
            h: self.h,
        };
        task.validate()?;
        Ok(task)
    }
}

/// On-disk form of a per-frame Gaussian series: ensemble statistics and model
/// predictions share this document so they can be compared interchangeably.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionSeriesJson {
    pub meta: serde_json::Value,
    /// Number of steps; `mean` and `cov` have n + 1 entries.
    pub n: usize,
    pub h: f64,
    /// Per-frame [position, velocity] mean.
    pub mean: Vec<[f64; 2]>,
    /// Per-frame row-major 2x2 position-velocity covariance.
    pub cov: Vec<[[f64; 2]; 2]>,
}

impl DistributionSeriesJson {
    pub fn from_ensemble(e: &TrajectoryEnsemble) -> Result<Self> {
        let meta = serde_json::to_value(&e.meta)?;
        Ok(Self {
            meta,
            n: e.n_steps(),
            h: e.h,
            mean: e
                .mean_pos
                .iter()
                .zip(&e.mean_vel)
                .map(|(&p, &v)| [p, v])
                .collect(),
            cov: e
                .cov
                .iter()
                .map(|c| [[c[(0, 0)], c[(0, 1)]], [c[(1, 0)], c[(1, 1)]]])
                .collect(),
        })
    }

    pub fn from_distribution(d: &DistributionTrajectory, meta: serde_json::Value) -> Self {
        let pairs: Vec<_> = d.steps.iter().map(|s| s.pos_vel_marginal()).collect();
        Self {
            meta,
            n: d.n_steps(),
            h: d.h,
            mean: pairs.iter().map(|(m, _)| [m[0], m[1]]).collect(),
            cov: pairs
                .iter()
                .map(|(_, c)| [[c[(0, 0)], c[(0, 1)]], [c[(1, 0)], c[(1, 1)]]])
                .collect(),
        }
    }

    pub fn gaussian_series(&self) -> Vec<Gaussian2> {
        self.mean
            .iter()
            .zip(&self.cov)
            .map(|(m, c)| {
                Gaussian2::new(
                    nalgebra::Vector2::new(m[0], m[1]),
                    Matrix2::new(c[0][0], c[0][1], c[1][0], c[1][1]),
                )
            })
            .collect()
    }
}
