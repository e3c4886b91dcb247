//! Trial preprocessing: reaction-time stripping, outlier removal, alignment
//! into per-frame ensemble statistics, and a smoothed reference acceleration.

use nalgebra::{DMatrix, Matrix2, Vector2};

use crate::error::{Error, Result};

use super::{RawTrial, TrajectoryEnsemble, TrialMeta};

/// Consecutive frames (40 ms at 2 ms sampling) over which the second
/// difference must keep the movement sign for a valid onset.
const PERSIST_FRAMES: usize = 20;
/// Onset velocity threshold as a fraction of the trial's signed peak.
const ONSET_FRACTION: f64 = 0.01;

/// Index of the first sample where the movement has started: signed velocity
/// at or above 1% of the trial's signed extremum, and the second difference
/// keeps the movement sign for the next 20 frames. `None` when no sample
/// qualifies.
pub fn reaction_onset(trial: &RawTrial) -> Option<usize> {
    let n = trial.positions.len();
    if n < PERSIST_FRAMES + 2 {
        return None;
    }
    let s = trial.meta.direction.sign();
    let v = trial.velocity();
    let a = trial.acceleration();
    let ext = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(s * x));
    if !(ext > 0.0) {
        return None;
    }
    let threshold = ONSET_FRACTION * ext;
    // a[j] exists for j <= n - 3, so the last index with a full
    // persistence window is n - 2 - PERSIST_FRAMES.
    (0..=n - 2 - PERSIST_FRAMES).find(|&i| {
        s * v[i] >= threshold && (i..i + PERSIST_FRAMES).all(|j| s * a[j] > 0.0)
    })
}

/// Drop everything before the movement onset. Trials without a valid onset
/// come back flagged `discarded` with their samples untouched; the operation
/// is idempotent.
pub fn strip_reaction_time(trial: &RawTrial) -> RawTrial {
    if trial.discarded {
        return trial.clone();
    }
    match reaction_onset(trial) {
        Some(onset) => RawTrial {
            positions: trial.positions[onset..].to_vec(),
            ..trial.clone()
        },
        None => RawTrial {
            discarded: true,
            ..trial.clone()
        },
    }
}

/// What outlier removal did to one condition's trials.
#[derive(Debug, Clone, Default)]
pub struct OutlierReport {
    pub positional_removed: Vec<String>,
    pub duration_removed: Vec<String>,
    /// Fewer than 3 input trials: statistics are meaningless, nothing removed.
    pub skipped_insufficient: bool,
}

impl OutlierReport {
    pub fn n_removed(&self) -> usize {
        self.positional_removed.len() + self.duration_removed.len()
    }
}

fn position_at(trial: &RawTrial, n: usize) -> f64 {
    // Virtual last-position extension for comparing unequal lengths.
    trial
        .positions
        .get(n)
        .copied()
        .unwrap_or_else(|| *trial.positions.last().expect("non-empty trial"))
}

/// Two-stage outlier removal: first trials that stray more than 3 population
/// standard deviations from the per-frame mean position at any frame, then
/// trials whose duration exceeds the mean duration by more than 3 standard
/// deviations. With fewer than 3 trials both stages are skipped.
pub fn remove_outliers(trials: &[RawTrial]) -> (Vec<RawTrial>, OutlierReport) {
    let mut report = OutlierReport::default();
    if trials.len() < 3 {
        report.skipped_insufficient = true;
        return (trials.to_vec(), report);
    }

    let max_len = trials.iter().map(RawTrial::len).max().unwrap_or(0);
    let k = trials.len() as f64;
    let mut keep = vec![true; trials.len()];
    for n in 0..max_len {
        let mean = trials.iter().map(|t| position_at(t, n)).sum::<f64>() / k;
        let var = trials
            .iter()
            .map(|t| (position_at(t, n) - mean).powi(2))
            .sum::<f64>()
            / k;
        let limit = 3.0 * var.sqrt();
        for (i, t) in trials.iter().enumerate() {
            if keep[i] && (position_at(t, n) - mean).abs() > limit {
                keep[i] = false;
                report.positional_removed.push(t.trial_id.clone());
            }
        }
    }
    let survivors: Vec<&RawTrial> = trials
        .iter()
        .zip(&keep)
        .filter_map(|(t, &k)| k.then_some(t))
        .collect();

    let k = survivors.len() as f64;
    let mean_dur = survivors.iter().map(|t| t.duration_s()).sum::<f64>() / k;
    let var_dur = survivors
        .iter()
        .map(|t| (t.duration_s() - mean_dur).powi(2))
        .sum::<f64>()
        / k;
    let limit = mean_dur + 3.0 * var_dur.sqrt();
    let mut kept = Vec::new();
    for t in survivors {
        if t.duration_s() > limit {
            report.duration_removed.push(t.trial_id.clone());
        } else {
            kept.push(t.clone());
        }
    }
    (kept, report)
}

/// Pad every trial to the longest length with its final position (implying
/// zero velocity over the padding) and reduce to per-frame mean and
/// population position-velocity covariance. Pre-padding samples are never
/// altered.
pub fn extend_and_align(trials: &[RawTrial]) -> Result<TrajectoryEnsemble> {
    let first = trials
        .first()
        .ok_or_else(|| Error::Data("cannot align an empty trial set".into()))?;
    let meta = first.meta.clone();
    let h = first.h;
    for t in trials {
        if t.meta != meta {
            return Err(Error::Data(format!(
                "trial '{}' belongs to a different condition",
                t.trial_id
            )));
        }
        if (t.h - h).abs() > 1e-9 {
            return Err(Error::Data(format!(
                "trial '{}' has step {} but the condition uses {}",
                t.trial_id, t.h, h
            )));
        }
        if t.is_empty() {
            return Err(Error::Data(format!("trial '{}' has no samples", t.trial_id)));
        }
    }

    let len = trials.iter().map(RawTrial::len).max().unwrap();
    let positions: Vec<Vec<f64>> = trials
        .iter()
        .map(|t| {
            let mut p = t.positions.clone();
            p.resize(len, *t.positions.last().unwrap());
            p
        })
        .collect();
    let velocities: Vec<Vec<f64>> = positions
        .iter()
        .map(|p| {
            let mut v: Vec<f64> = p.windows(2).map(|w| (w[1] - w[0]) / h).collect();
            v.push(0.0);
            v
        })
        .collect();

    let k = trials.len() as f64;
    let mut mean_pos = vec![0.0; len];
    let mut mean_vel = vec![0.0; len];
    let mut cov = vec![Matrix2::zeros(); len];
    for n in 0..len {
        let mp = positions.iter().map(|p| p[n]).sum::<f64>() / k;
        let mv = velocities.iter().map(|v| v[n]).sum::<f64>() / k;
        let mut c = Matrix2::zeros();
        for (p, v) in positions.iter().zip(&velocities) {
            let d = Vector2::new(p[n] - mp, v[n] - mv);
            c += d * d.transpose();
        }
        mean_pos[n] = mp;
        mean_vel[n] = mv;
        cov[n] = c / k;
    }

    Ok(TrajectoryEnsemble {
        meta,
        h,
        positions,
        velocities,
        mean_pos,
        mean_vel,
        cov,
    })
}

/// Everything the preprocessing pipeline did to one condition.
#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub n_input: usize,
    /// Trials flagged by reaction stripping for having no valid onset.
    pub discarded_no_onset: usize,
    pub outliers: OutlierReport,
    pub n_kept: usize,
}

/// Full pipeline for the trials of one condition: optional reaction-time
/// stripping, outlier removal, then alignment into ensemble statistics.
pub fn preprocess_condition(
    trials: &[RawTrial],
    strip_reaction: bool,
) -> Result<(TrajectoryEnsemble, PipelineReport)> {
    let n_input = trials.len();
    let stripped: Vec<RawTrial> = if strip_reaction {
        trials.iter().map(strip_reaction_time).collect()
    } else {
        trials.to_vec()
    };
    let (valid, discarded): (Vec<_>, Vec<_>) = stripped.into_iter().partition(|t| !t.discarded);
    let (kept, outliers) = remove_outliers(&valid);
    let ensemble = extend_and_align(&kept).map_err(|_| {
        Error::Data(format!(
            "condition '{}' d={} w={} {}: no usable trials ({} input, {} without onset, {} outliers)",
            trials.first().map(|t| t.meta.participant.as_str()).unwrap_or("?"),
            trials.first().map(|t| t.meta.distance_m).unwrap_or(f64::NAN),
            trials.first().map(|t| t.meta.width_m).unwrap_or(f64::NAN),
            trials.first().map(|t| t.meta.direction.name()).unwrap_or("?"),
            n_input,
            discarded.len(),
            outliers.n_removed(),
        ))
    })?;
    let report = PipelineReport {
        n_input,
        discarded_no_onset: discarded.len(),
        n_kept: ensemble.n_trials(),
        outliers,
    };
    Ok((ensemble, report))
}

/// Split a mixed trial list into per-condition groups, preserving first
/// appearance order.
pub fn group_by_condition(trials: &[RawTrial]) -> Vec<(TrialMeta, Vec<RawTrial>)> {
    let mut groups: Vec<(TrialMeta, Vec<RawTrial>)> = Vec::new();
    for t in trials {
        match groups.iter_mut().find(|(m, _)| *m == t.meta) {
            Some((_, g)) => g.push(t.clone()),
            None => groups.push((t.meta.clone(), vec![t.clone()])),
        }
    }
    groups
}

/// Width of the local polynomial fit used for the reference acceleration.
const SG_WINDOW: usize = 15;
const SG_DEGREE: usize = 3;

/// Least-squares projection matrix for a cubic over a centered 15-sample
/// window: row k holds the weights producing polynomial coefficient a_k.
fn sg_projection() -> DMatrix<f64> {
    let half = (SG_WINDOW / 2) as i64;
    let mut v = DMatrix::zeros(SG_WINDOW, SG_DEGREE + 1);
    for (row, e) in (-half..=half).enumerate() {
        for p in 0..=SG_DEGREE {
            v[(row, p)] = (e as f64).powi(p as i32);
        }
    }
    let vt = v.transpose();
    let gram = &vt * &v;
    gram.try_inverse().expect("Vandermonde Gram matrix is invertible") * vt
}

/// Acceleration by local cubic least-squares fits over 15-sample windows,
/// evaluated as the analytic second derivative. Interior samples use centered
/// windows; the first and last 7 use the nearest full window shifted inward.
pub fn reference_acceleration(series: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = series.len();
    if n < SG_WINDOW {
        return Err(Error::Data(format!(
            "series of length {n} is too short for a {SG_WINDOW}-sample smoothing window"
        )));
    }
    if !(h > 0.0) {
        return Err(Error::Parameter("step h must be positive".into()));
    }
    let c = sg_projection();
    let half = SG_WINDOW / 2;
    let h2 = h * h;
    Ok((0..n)
        .map(|i| {
            let ws = i.saturating_sub(half).min(n - SG_WINDOW);
            // Offset of sample i inside its window, in fit coordinates.
            let e = (i - ws) as f64 - half as f64;
            let mut acc = 0.0;
            for j in 0..SG_WINDOW {
                let w = 2.0 * c[(2, j)] + 6.0 * e * c[(3, j)];
                acc += w * series[ws + j];
            }
            acc / h2
        })
        .collect())
}
