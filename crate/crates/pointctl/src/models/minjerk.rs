//! Quintic polynomial reaching movement: the unique 5th-order polynomial
//! matching position, velocity and acceleration at both ends, evaluated on
//! the sample grid and held at the final state afterwards.

use nalgebra::DVector;

use super::{MinJerkParams, TaskSpec};
use crate::error::Result;
use crate::lindyn::{StateLayout, Trajectory};

/// Boundary conditions for the polynomial segment.
#[derive(Debug, Clone, Copy)]
pub struct MinJerkBoundary {
    pub p0: f64,
    pub v0: f64,
    pub a0: f64,
    pub pf: f64,
    pub vf: f64,
    pub af: f64,
}

impl MinJerkBoundary {
    /// Start and end at rest.
    pub fn rest_to_rest(p0: f64, pf: f64) -> Self {
        Self {
            p0,
            v0: 0.0,
            a0: 0.0,
            pf,
            vf: 0.0,
            af: 0.0,
        }
    }
}

/// Polynomial coefficients c_0..c_5 in normalized time s = t / t_f, so that
/// p(s) = sum c_i s^i with p'(0)/t_f = v0 etc.
fn coefficients(b: &MinJerkBoundary, t_f: f64) -> [f64; 6] {
    let tf2 = t_f * t_f;
    [
        b.p0,
        t_f * b.v0,
        0.5 * tf2 * b.a0,
        -10.0 * b.p0 - 6.0 * t_f * b.v0 - 1.5 * tf2 * b.a0 + 10.0 * b.pf - 4.0 * t_f * b.vf
            + 0.5 * tf2 * b.af,
        15.0 * b.p0 + 8.0 * t_f * b.v0 + 1.5 * tf2 * b.a0 - 15.0 * b.pf + 7.0 * t_f * b.vf
            - tf2 * b.af,
        -6.0 * b.p0 - 3.0 * t_f * b.v0 - 0.5 * tf2 * b.a0 + 6.0 * b.pf - 3.0 * t_f * b.vf
            + 0.5 * tf2 * b.af,
    ]
}

fn horner(coeffs: &[f64], s: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
}

/// Position, velocity, acceleration and jerk at normalized time s in [0, 1].
pub fn eval_minjerk(b: &MinJerkBoundary, t_f: f64, s: f64) -> (f64, f64, f64, f64) {
    let c = coefficients(b, t_f);
    let dc = [c[1], 2.0 * c[2], 3.0 * c[3], 4.0 * c[4], 5.0 * c[5]];
    let d2c = [2.0 * c[2], 6.0 * c[3], 12.0 * c[4], 20.0 * c[5]];
    let d3c = [6.0 * c[3], 24.0 * c[4], 60.0 * c[5]];
    let p = horner(&c, s);
    let dp = horner(&dc, s);
    let d2p = horner(&d2c, s);
    let d3p = horner(&d3c, s);
    (p, dp / t_f, d2p / (t_f * t_f), d3p / (t_f * t_f * t_f))
}

/// Sample the quintic on the step grid. The polynomial spans n_mj steps
/// (t_f = n_mj * h, real-valued); samples beyond it hold the final boundary
/// state. The control channel carries the jerk over the segment and zero in
/// the hold phase.
pub fn minjerk_trajectory(
    params: &MinJerkParams,
    task: &TaskSpec,
    boundary: &MinJerkBoundary,
) -> Result<Trajectory> {
    task.validate()?;
    let n_mj = params.n_mj;
    let t_f = n_mj * task.h;
    let mut states = Vec::with_capacity(task.n_steps + 1);
    let mut controls = Vec::with_capacity(task.n_steps);
    for n in 0..=task.n_steps {
        let (p, v, a, j) = if n_mj == 0.0 {
            // A zero-length surge is over before the first sample: the whole
            // trajectory holds the final boundary state.
            (boundary.pf, boundary.vf, boundary.af, 0.0)
        } else if n == 0 {
            // Exact boundary; s = n / n_mj would lose it to roundoff.
            let (_, _, _, j) = eval_minjerk(boundary, t_f, 0.0);
            (boundary.p0, boundary.v0, boundary.a0, j)
        } else if (n as f64) < n_mj {
            eval_minjerk(boundary, t_f, n as f64 / n_mj)
        } else {
            (boundary.pf, boundary.vf, boundary.af, 0.0)
        };
        states.push(DVector::from_column_slice(&[p, v, a]));
        if n < task.n_steps {
            controls.push(j);
        }
    }
    Ok(Trajectory {
        layout: StateLayout::PosVelAcc,
        h: task.h,
        states,
        controls,
    })
}
