//! Discrete-time linear state-space dynamics and Gaussian moment propagation.
//!
//! Everything downstream (model builders, solvers, samplers) runs on the types
//! here: a forward-Euler discretized system `x_{n+1} = A x_n + b u_n` with one
//! control channel, deterministic rollouts, and exact mean/covariance
//! propagation for the noisy closed loop.
//!
//! Covariance invariant: every exposed covariance is symmetric PSD. Internal
//! recursions symmetrize each step; eigenvalue clamping happens where matrices
//! leave the module.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::linalg;

/// Sampling step shared by the original experiments and all defaults (500 Hz).
pub const DEFAULT_STEP_S: f64 = 0.002;

/// Index layout of a state vector. All layouts put position and velocity
/// first, so position/velocity marginals can be taken without knowing the
/// model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateLayout {
    /// (p, v): spring-mass-damper pointer models.
    PosVel,
    /// (p, v, a): polynomial trajectory models carrying analytic acceleration.
    PosVelAcc,
    /// (p, v, f, g, T): pointer with second-order muscle filter and target.
    Pointing,
    /// (p, v, f, g, T0, T): as `Pointing` plus the movement origin component
    /// used by gaze-dependent observation models.
    PointingWithPrior,
}

impl StateLayout {
    pub fn dim(self) -> usize {
        match self {
            StateLayout::PosVel => 2,
            StateLayout::PosVelAcc => 3,
            StateLayout::Pointing => 5,
            StateLayout::PointingWithPrior => 6,
        }
    }

    pub fn pos(self) -> usize {
        0
    }

    pub fn vel(self) -> usize {
        1
    }

    pub fn acc(self) -> Option<usize> {
        match self {
            StateLayout::PosVelAcc => Some(2),
            _ => None,
        }
    }

    pub fn force(self) -> Option<usize> {
        match self {
            StateLayout::Pointing | StateLayout::PointingWithPrior => Some(2),
            _ => None,
        }
    }

    pub fn excitation(self) -> Option<usize> {
        match self {
            StateLayout::Pointing | StateLayout::PointingWithPrior => Some(3),
            _ => None,
        }
    }

    pub fn target(self) -> Option<usize> {
        match self {
            StateLayout::Pointing => Some(4),
            StateLayout::PointingWithPrior => Some(5),
            _ => None,
        }
    }

    pub fn prior_target(self) -> Option<usize> {
        match self {
            StateLayout::PointingWithPrior => Some(4),
            _ => None,
        }
    }
}

/// A state vector paired with its layout, for named component access at API
/// boundaries. Hot loops work on raw `DVector`s instead.
#[derive(Debug, Clone)]
pub struct StateVector {
    pub layout: StateLayout,
    pub values: DVector<f64>,
}

impl StateVector {
    pub fn new(layout: StateLayout, values: DVector<f64>) -> Result<Self> {
        if values.len() != layout.dim() {
            return Err(Error::Dimension(format!(
                "state length {} does not match layout dimension {}",
                values.len(),
                layout.dim()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn pos(&self) -> f64 {
        self.values[self.layout.pos()]
    }

    pub fn vel(&self) -> f64 {
        self.values[self.layout.vel()]
    }

    pub fn force(&self) -> Option<f64> {
        self.layout.force().map(|i| self.values[i])
    }

    pub fn excitation(&self) -> Option<f64> {
        self.layout.excitation().map(|i| self.values[i])
    }

    pub fn target(&self) -> Option<f64> {
        self.layout.target().map(|i| self.values[i])
    }

    pub fn prior_target(&self) -> Option<f64> {
        self.layout.prior_target().map(|i| self.values[i])
    }
}

/// Discrete-time linear system `x_{n+1} = A x_n + b u_n` with scalar control
/// and fixed step `h` (forward-Euler discretizations of the continuous
/// models).
#[derive(Debug, Clone)]
#[allow(non_snake_case)]
pub struct LinearSystem {
    pub A: DMatrix<f64>,
    pub b: DVector<f64>,
    pub h: f64,
}

impl LinearSystem {
    #[allow(non_snake_case)]
    pub fn new(A: DMatrix<f64>, b: DVector<f64>, h: f64) -> Result<Self> {
        if A.nrows() != A.ncols() {
            return Err(Error::Dimension(format!(
                "system matrix must be square, got {}x{}",
                A.nrows(),
                A.ncols()
            )));
        }
        if b.len() != A.nrows() {
            return Err(Error::Dimension(format!(
                "input vector length {} does not match state dimension {}",
                b.len(),
                A.nrows()
            )));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Parameter(format!("step must be positive, got {h}")));
        }
        Ok(Self { A, b, h })
    }

    pub fn dim(&self) -> usize {
        self.A.nrows()
    }

    /// One Euler step.
    pub fn step(&self, x: &DVector<f64>, u: f64) -> DVector<f64> {
        &self.A * x + &self.b * u
    }
}

/// States `x_0..x_N` (N+1 entries) plus the controls `u_0..u_{N-1}` that
/// produced them.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub layout: StateLayout,
    pub h: f64,
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<f64>,
}

impl Trajectory {
    /// Number of steps N; `states` holds N+1 entries.
    pub fn n_steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.h
    }

    pub fn position(&self, n: usize) -> f64 {
        self.states[n][self.layout.pos()]
    }

    pub fn velocity(&self, n: usize) -> f64 {
        self.states[n][self.layout.vel()]
    }

    pub fn positions(&self) -> Vec<f64> {
        let i = self.layout.pos();
        self.states.iter().map(|x| x[i]).collect()
    }

    pub fn velocities(&self) -> Vec<f64> {
        let i = self.layout.vel();
        self.states.iter().map(|x| x[i]).collect()
    }

    pub fn state(&self, n: usize) -> StateVector {
        StateVector {
            layout: self.layout,
            values: self.states[n].clone(),
        }
    }
}

/// Closed-form rollout under a given control sequence.
pub fn rollout(
    system: &LinearSystem,
    layout: StateLayout,
    x0: DVector<f64>,
    controls: &[f64],
) -> Result<Trajectory> {
    if x0.len() != system.dim() || layout.dim() != system.dim() {
        return Err(Error::Dimension(format!(
            "rollout: x0 length {}, layout dim {}, system dim {}",
            x0.len(),
            layout.dim(),
            system.dim()
        )));
    }
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(x0);
    for &u in controls {
        let next = system.step(states.last().unwrap(), u);
        states.push(next);
    }
    Ok(Trajectory {
        layout,
        h: system.h,
        states,
        controls: controls.to_vec(),
    })
}

/// Gaussian state distribution. The covariance is kept symmetric PSD: the
/// constructor symmetrizes and clamps negative eigenvalues to zero.
#[derive(Debug, Clone)]
pub struct StateDistribution {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl StateDistribution {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Dimension(format!(
                "covariance {}x{} does not match mean length {}",
                cov.nrows(),
                cov.ncols(),
                mean.len()
            )));
        }
        Ok(Self {
            mean,
            cov: linalg::clamp_psd(&cov),
        })
    }

    /// Point mass at `mean`.
    pub fn deterministic(mean: DVector<f64>) -> Self {
        let k = mean.len();
        Self {
            mean,
            cov: DMatrix::zeros(k, k),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Marginal over the leading (position, velocity) components.
    pub fn pos_vel_marginal(&self) -> (Vector2<f64>, Matrix2<f64>) {
        let mean = Vector2::new(self.mean[0], self.mean[1]);
        let cov = Matrix2::new(
            self.cov[(0, 0)],
            self.cov[(0, 1)],
            self.cov[(1, 0)],
            self.cov[(1, 1)],
        );
        (mean, cov)
    }
}

/// Per-step Gaussians `ρ_0..ρ_N` describing a stochastic closed loop.
#[derive(Debug, Clone)]
pub struct DistributionTrajectory {
    pub layout: StateLayout,
    pub h: f64,
    pub steps: Vec<StateDistribution>,
}

impl DistributionTrajectory {
    pub fn n_steps(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn mean_positions(&self) -> Vec<f64> {
        self.steps.iter().map(|d| d.mean()[0]).collect()
    }

    pub fn position_variances(&self) -> Vec<f64> {
        self.steps.iter().map(|d| d.cov()[(0, 0)]).collect()
    }
}

/// One exact moment-propagation step for the closed loop
/// `x' = A x + (1 + σ_u η) b u`, `u = -l·x` with the controller reading the
/// true state. With `σ_u = 0` this reduces to `Σ' = (A - b lᵀ) Σ (A - b lᵀ)ᵀ`.
///
/// The control-noise contribution uses the full second moment `E[u²]`
/// (covariance plus squared mean), because the noise scales with the realized
/// control, not its deviation from the mean.
pub fn propagate_moments(
    system: &LinearSystem,
    dist: &StateDistribution,
    l_gain: &DVector<f64>,
    sigma_u: f64,
) -> Result<StateDistribution> {
    let k = system.dim();
    if dist.dim() != k || l_gain.len() != k {
        return Err(Error::Dimension(format!(
            "propagate_moments: dist dim {}, gain len {}, system dim {}",
            dist.dim(),
            l_gain.len(),
            k
        )));
    }
    let a_cl = &system.A - &system.b * l_gain.transpose();
    let mean = &a_cl * dist.mean();
    let second_moment = dist.cov() + dist.mean() * dist.mean().transpose();
    let u2 = (l_gain.transpose() * &second_moment * l_gain)[(0, 0)];
    let cov = &a_cl * dist.cov() * a_cl.transpose()
        + (sigma_u * sigma_u * u2) * (&system.b * system.b.transpose());
    StateDistribution::new(mean, linalg::symmetrize(&cov))
}

/// Joint Gaussian moments of the true state and the controller's internal
/// estimate, propagated as one 2k-dimensional system.
///
/// Marginal-only propagation of the true state is wrong here: the control is a
/// function of the estimate, and state/estimate correlations feed back into
/// the state covariance. Only the k-dimensional true-state marginal is
/// exposed.
#[derive(Debug, Clone)]
pub struct JointMoments {
    k: usize,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl JointMoments {
    /// Joint init: true state `x_0 ~ dist`, estimate fixed at `xhat0`
    /// (deterministic, so all estimate covariance blocks start at zero).
    pub fn new(dist: &StateDistribution, xhat0: &DVector<f64>) -> Result<Self> {
        let k = dist.dim();
        if xhat0.len() != k {
            return Err(Error::Dimension(format!(
                "estimate length {} does not match state dimension {}",
                xhat0.len(),
                k
            )));
        }
        let mut mean = DVector::zeros(2 * k);
        mean.rows_mut(0, k).copy_from(dist.mean());
        mean.rows_mut(k, k).copy_from(xhat0);
        let mut cov = DMatrix::zeros(2 * k, 2 * k);
        cov.view_mut((0, 0), (k, k)).copy_from(dist.cov());
        Ok(Self { k, mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn mean_state(&self) -> DVector<f64> {
        self.mean.rows(0, self.k).into_owned()
    }

    pub fn mean_estimate(&self) -> DVector<f64> {
        self.mean.rows(self.k, self.k).into_owned()
    }

    /// True-state marginal, eigenvalue-clamped for export.
    pub fn state_marginal(&self) -> StateDistribution {
        let mean = self.mean_state();
        let cov = self.cov.view((0, 0), (self.k, self.k)).into_owned();
        StateDistribution::new(mean, cov).expect("marginal dimensions are consistent")
    }

    /// E[x xᵀ] (second moment, not covariance), unclamped; expected-cost
    /// accumulation needs the raw recursion output.
    pub fn state_second_moment(&self) -> DMatrix<f64> {
        let m = self.mean_state();
        self.cov.view((0, 0), (self.k, self.k)).into_owned() + &m * m.transpose()
    }

    /// E[x̂ x̂ᵀ] (second moment, not covariance).
    pub fn estimate_second_moment(&self) -> DMatrix<f64> {
        let m = self.mean_estimate();
        self.cov.view((self.k, self.k), (self.k, self.k)).into_owned() + &m * m.transpose()
    }

    /// E[(x - x̂)(x - x̂)ᵀ], including any estimate bias. This is the quantity
    /// the filter-gain update needs when the initial estimate is wrong on
    /// purpose (unobserved target component).
    pub fn error_second_moment(&self) -> DMatrix<f64> {
        let k = self.k;
        let pxx = self.cov.view((0, 0), (k, k));
        let pxh = self.cov.view((0, k), (k, k));
        let phh = self.cov.view((k, k), (k, k));
        let err_cov = pxx - &pxh - pxh.transpose() + phh;
        let bias = self.mean_state() - self.mean_estimate();
        err_cov + &bias * bias.transpose()
    }

    /// E[u] and E[u²] for `u = -l·x̂`.
    pub fn control_moments(&self, l_gain: &DVector<f64>) -> (f64, f64) {
        let u_mean = -l_gain.dot(&self.mean_estimate());
        let u2 = (l_gain.transpose() * self.estimate_second_moment() * l_gain)[(0, 0)];
        (u_mean, u2)
    }

    /// One step of the noisy output-feedback loop:
    ///
    /// ```text
    /// x'  = A x + (1 + σ_u η) b u,          u = -l·x̂,  η ~ N(0,1)
    /// y   = H x + G ξ,                       ξ ~ N(0,I)
    /// x̂'  = A x̂ + b u + K (y - H x̂)
    /// ```
    ///
    /// The update is exact: the joint mean gets the linear part, and the
    /// covariance gets the linear part plus the two independent noise
    /// injections (control-scaled in the state block, observation-scaled in
    /// the estimate block via K).
    #[allow(non_snake_case)]
    pub fn step(
        &mut self,
        system: &LinearSystem,
        l_gain: &DVector<f64>,
        k_gain: &DMatrix<f64>,
        H: &DMatrix<f64>,
        G: &DMatrix<f64>,
        sigma_u: f64,
    ) {
        let k = self.k;
        debug_assert_eq!(system.dim(), k);
        debug_assert_eq!(l_gain.len(), k);
        debug_assert_eq!(k_gain.nrows(), k);
        debug_assert_eq!(k_gain.ncols(), H.nrows());
        debug_assert_eq!(H.ncols(), k);
        debug_assert_eq!(G.nrows(), H.nrows());

        let bl = &system.b * l_gain.transpose(); // k×k, rank 1
        let kh = k_gain * H;

        let mut f = DMatrix::zeros(2 * k, 2 * k);
        f.view_mut((0, 0), (k, k)).copy_from(&system.A);
        f.view_mut((0, k), (k, k)).copy_from(&(-&bl));
        f.view_mut((k, 0), (k, k)).copy_from(&kh);
        f.view_mut((k, k), (k, k)).copy_from(&(&system.A - &bl - &kh));

        let (_, u2) = self.control_moments(l_gain);

        let mut noise = DMatrix::zeros(2 * k, 2 * k);
        noise
            .view_mut((0, 0), (k, k))
            .copy_from(&((sigma_u * sigma_u * u2) * (&system.b * system.b.transpose())));
        let kg = k_gain * G;
        noise
            .view_mut((k, k), (k, k))
            .copy_from(&(&kg * kg.transpose()));

        self.mean = &f * &self.mean;
        self.cov = linalg::symmetrize(&(&f * &self.cov * f.transpose() + noise));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn toy_system() -> LinearSystem {
        // 2-state integrator-like system
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 0.9]);
        let b = DVector::from_column_slice(&[0.0, 0.1]);
        LinearSystem::new(a, b, 0.1).unwrap()
    }

    #[test]
    fn step_matches_hand_computation() {
        let sys = toy_system();
        let x = DVector::from_column_slice(&[1.0, 2.0]);
        let next = sys.step(&x, 3.0);
        assert_relative_eq!(next[0], 1.0 + 0.1 * 2.0, epsilon = 1e-15);
        assert_relative_eq!(next[1], 0.9 * 2.0 + 0.1 * 3.0, epsilon = 1e-15);
    }

    #[test]
    fn rollout_chains_steps() {
        let sys = toy_system();
        let x0 = DVector::from_column_slice(&[0.5, -0.5]);
        let controls = [1.0, -1.0, 0.25];
        let traj = rollout(&sys, StateLayout::PosVel, x0.clone(), &controls).unwrap();
        assert_eq!(traj.n_steps(), 3);
        let mut x = x0;
        for (n, &u) in controls.iter().enumerate() {
            x = sys.step(&x, u);
            assert_relative_eq!(traj.states[n + 1][0], x[0], epsilon = 1e-15);
            assert_relative_eq!(traj.states[n + 1][1], x[1], epsilon = 1e-15);
        }
    }

    proptest! {
        // step is linear in (x, u)
        #[test]
        fn step_linearity(
            xa in proptest::array::uniform2(-10.0_f64..10.0),
            xb in proptest::array::uniform2(-10.0_f64..10.0),
            ua in -5.0_f64..5.0,
            ub in -5.0_f64..5.0,
            alpha in -2.0_f64..2.0,
            beta in -2.0_f64..2.0,
        ) {
            let sys = toy_system();
            let va = DVector::from_column_slice(&xa);
            let vb = DVector::from_column_slice(&xb);
            let combined = sys.step(&(&va * alpha + &vb * beta), alpha * ua + beta * ub);
            let separate = sys.step(&va, ua) * alpha + sys.step(&vb, ub) * beta;
            for i in 0..2 {
                prop_assert!((combined[i] - separate[i]).abs() < 1e-9 * (1.0 + separate[i].abs()));
            }
        }
    }

    #[test]
    fn distribution_clamps_negative_eigenvalues() {
        let mean = DVector::zeros(2);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-12]);
        let dist = StateDistribution::new(mean, cov).unwrap();
        let eigvals = dist.cov().clone().symmetric_eigen().eigenvalues;
        assert!(eigvals.iter().all(|&ev| ev >= 0.0));
    }

    #[test]
    fn propagate_moments_scalar_example() {
        // A=1, b=1, L=0.5, σ_u=1, x ~ δ(2): next mean 1, next variance 1
        let sys = LinearSystem::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
            1.0,
        )
        .unwrap();
        let dist = StateDistribution::deterministic(DVector::from_element(1, 2.0));
        let l = DVector::from_element(1, 0.5);
        let next = propagate_moments(&sys, &dist, &l, 1.0).unwrap();
        assert_relative_eq!(next.mean()[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(next.cov()[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_noise_moments_match_rollout() {
        let sys = toy_system();
        let x0 = DVector::from_column_slice(&[1.0, 0.0]);
        let l = DVector::from_column_slice(&[0.4, 0.2]);

        // closed-loop rollout u_n = -l·x_n
        let mut x = x0.clone();
        let mut controls = Vec::new();
        for _ in 0..50 {
            let u = -l.dot(&x);
            controls.push(u);
            x = sys.step(&x, u);
        }
        let traj = rollout(&sys, StateLayout::PosVel, x0.clone(), &controls).unwrap();

        let mut dist = StateDistribution::deterministic(x0);
        for n in 0..50 {
            dist = propagate_moments(&sys, &dist, &l, 0.0).unwrap();
            assert_relative_eq!(dist.mean()[0], traj.states[n + 1][0], epsilon = 1e-12);
            assert_relative_eq!(dist.mean()[1], traj.states[n + 1][1], epsilon = 1e-12);
            assert!(dist.cov().amax() < 1e-15);
        }
    }

    #[test]
    fn joint_moments_reduce_to_exact_state_case() {
        // Perfect observation (H = I, G = 0) with K = I makes x̂' = x' exactly
        // when x̂_0 = x_0 is deterministic and there is no control noise, hence
        // the joint engine must agree with the exact-state propagator.
        let sys = toy_system();
        let x0 = DVector::from_column_slice(&[1.0, -0.3]);
        let l = DVector::from_column_slice(&[0.4, 0.2]);
        let h_obs = DMatrix::identity(2, 2);
        let g_obs = DMatrix::zeros(2, 2);
        let k_gain = sys.A.clone(); // x̂' = A x̂ + b u + A(x - x̂) = A x + b u = x'

        let dist0 = StateDistribution::deterministic(x0.clone());
        let mut joint = JointMoments::new(&dist0, &x0).unwrap();
        let mut exact = dist0;
        for _ in 0..30 {
            joint.step(&sys, &l, &k_gain, &h_obs, &g_obs, 0.0);
            exact = propagate_moments(&sys, &exact, &l, 0.0).unwrap();
            let marg = joint.state_marginal();
            assert_relative_eq!(marg.mean()[0], exact.mean()[0], epsilon = 1e-12);
            assert_relative_eq!(marg.mean()[1], exact.mean()[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn error_second_moment_includes_bias() {
        let mean = DVector::from_column_slice(&[1.0, 0.0]);
        let dist = StateDistribution::deterministic(mean);
        let xhat = DVector::from_column_slice(&[0.0, 0.0]);
        let joint = JointMoments::new(&dist, &xhat).unwrap();
        let e2 = joint.error_second_moment();
        assert_relative_eq!(e2[(0, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(e2[(1, 1)], 0.0, epsilon = 1e-15);
    }
}
