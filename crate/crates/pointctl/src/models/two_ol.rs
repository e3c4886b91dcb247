//! Second-order lag driven by a constant equilibrium control: a
//! spring-mass-damper whose spring is anchored at the target.

use nalgebra::{DMatrix, DVector};

use super::{TaskSpec, TwoOlParams};
use crate::error::Result;
use crate::lindyn::{rollout, LinearSystem, StateLayout, Trajectory};

/// Discretized (p, v) dynamics with stiffness k and damping d:
/// p' = p + h v, v' = v + h (u - k p - d v).
#[allow(non_snake_case)]
pub fn build_2ol_system(params: &TwoOlParams, h: f64) -> Result<LinearSystem> {
    params.validate()?;
    let A = DMatrix::from_row_slice(
        2,
        2,
        &[
            1.0,
            h,
            -h * params.k,
            1.0 - h * params.d,
        ],
    );
    let b = DVector::from_column_slice(&[0.0, h]);
    LinearSystem::new(A, b, h)
}

/// Roll the spring-mass-damper forward under the constant control u = k T,
/// which places the closed-loop equilibrium at the target.
pub fn simulate_2ol_eq(params: &TwoOlParams, task: &TaskSpec) -> Result<Trajectory> {
    let system = build_2ol_system(params, task.h)?;
    let x0 = DVector::from_column_slice(&[task.p0, task.v0]);
    let u = params.k * task.target;
    let controls = vec![u; task.n_steps];
    rollout(&system, StateLayout::PosVel, x0, &controls)
}

/// Per-sample acceleration u - k p - d v implied by the state sequence. The
/// control vector is one shorter than the states; the final sample reuses the
/// constant control, which is exact here.
pub fn two_ol_acceleration(params: &TwoOlParams, traj: &Trajectory) -> Vec<f64> {
    let u = traj.controls.first().copied().unwrap_or(0.0);
    traj.states
        .iter()
        .map(|x| u - params.k * x[0] - params.d * x[1])
        .collect()
}
