//! Discretized pointing plant: position and velocity of a unit mass driven by
//! a force that follows the control through two first-order lags (muscle
//! excitation and activation), with the target carried as a constant state so
//! quadratic costs and observations can reference it.

use nalgebra::{DMatrix, DVector};

use super::{LqCostWeights, TaskSpec};
use crate::error::Result;
use crate::lindyn::{LinearSystem, StateLayout};

/// Time constants of the two control-to-force lags (s).
pub const TAU_1_S: f64 = 0.04;
pub const TAU_2_S: f64 = 0.04;

/// Effective mass; acceleration equals force with this at 1.
pub const MASS_KG: f64 = 1.0;

fn fill_plant_block(a: &mut DMatrix<f64>, b: &mut DVector<f64>, h: f64) {
    // Rows for (p, v, f, g): p' = p + h v, v' = v + h f / m,
    // f' = f + h (g - f) / tau2, g' = g + h (u - g) / tau1.
    a[(0, 0)] = 1.0;
    a[(0, 1)] = h;
    a[(1, 1)] = 1.0;
    a[(1, 2)] = h / MASS_KG;
    a[(2, 2)] = 1.0 - h / TAU_2_S;
    a[(2, 3)] = h / TAU_2_S;
    a[(3, 3)] = 1.0 - h / TAU_1_S;
    b[3] = h / TAU_1_S;
}

/// 5-state system (p, v, f, g, T) with the target T constant.
pub fn build_pointing_system(h: f64) -> Result<LinearSystem> {
    let mut a = DMatrix::zeros(5, 5);
    let mut b = DVector::zeros(5);
    fill_plant_block(&mut a, &mut b, h);
    a[(4, 4)] = 1.0;
    LinearSystem::new(a, b, h)
}

/// 6-state system (p, v, f, g, T0, T) carrying both the movement origin T0
/// and the target T as constants.
pub fn build_pointing_system_with_prior(h: f64) -> Result<LinearSystem> {
    let mut a = DMatrix::zeros(6, 6);
    let mut b = DVector::zeros(6);
    fill_plant_block(&mut a, &mut b, h);
    a[(4, 4)] = 1.0;
    a[(5, 5)] = 1.0;
    LinearSystem::new(a, b, h)
}

/// Quadratic state cost (p - T)^2 + omega_v v^2 + omega_f f^2 expressed on
/// the given layout.
pub fn state_cost_matrix(layout: StateLayout, w: &LqCostWeights) -> DMatrix<f64> {
    let k = layout.dim();
    let p = layout.pos();
    let v = layout.vel();
    let f = layout.force().expect("cost requires a force state");
    let t = layout.target().expect("cost requires a target state");
    let mut q = DMatrix::zeros(k, k);
    q[(p, p)] = 1.0;
    q[(p, t)] = -1.0;
    q[(t, p)] = -1.0;
    q[(t, t)] = 1.0;
    q[(v, v)] = w.omega_v;
    q[(f, f)] = w.omega_f;
    q
}

/// Per-step control cost omega_r / (N - 1).
pub fn control_cost_weight(w: &LqCostWeights, n_steps: usize) -> f64 {
    w.omega_r / (n_steps.saturating_sub(1).max(1) as f64)
}

/// Initial mean state: kinematics from the task, force states at zero,
/// origin and target slots filled in.
pub fn initial_mean(layout: StateLayout, task: &TaskSpec) -> DVector<f64> {
    let mut x = DVector::zeros(layout.dim());
    x[layout.pos()] = task.p0;
    x[layout.vel()] = task.v0;
    if let Some(t0) = layout.prior_target() {
        x[t0] = task.start;
    }
    x[layout.target().expect("pointing layout")] = task.target;
    x
}

/// Initial state covariance: the task's position-velocity covariance embedded
/// in an otherwise exactly-known state.
pub fn initial_covariance(layout: StateLayout, task: &TaskSpec) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(layout.dim(), layout.dim());
    let p = layout.pos();
    let v = layout.vel();
    s[(p, p)] = task.pos_vel_cov[(0, 0)];
    s[(p, v)] = task.pos_vel_cov[(0, 1)];
    s[(v, p)] = task.pos_vel_cov[(1, 0)];
    s[(v, v)] = task.pos_vel_cov[(1, 1)];
    s
}

/// Initial state estimate. With a prior-target state the estimate starts with
/// the target slot holding the origin T0: the true target location is only
/// learned through observations.
pub fn initial_estimate(layout: StateLayout, task: &TaskSpec) -> DVector<f64> {
    let mut x = initial_mean(layout, task);
    if layout.prior_target().is_some() {
        x[layout.target().expect("pointing layout")] = task.start;
    }
    x
}
