//! Pointer-movement models: equilibrium-control spring-mass-damper, quintic
//! polynomial, and optimal-feedback-control families sharing one task
//! description.
//!
//! All models produce positions in meters on a 1-D axis at a fixed step; the
//! stochastic families additionally produce per-step Gaussian state
//! distributions.

mod lqg;
mod minjerk;
mod pointing;
mod riccati;
mod two_ol;

pub use lqg::{
    solve_elqg, solve_lqg, LqgSolution, SolveOptions, ELQG_OBS_DIM, LQG_OBS_DIM,
};
pub use minjerk::{minjerk_trajectory, MinJerkBoundary};
pub use pointing::{
    build_pointing_system, build_pointing_system_with_prior, control_cost_weight,
    state_cost_matrix, MASS_KG, TAU_1_S, TAU_2_S,
};
pub use riccati::{lq_backward_recursion, RiccatiSolution, StateCostSchedule};
pub use two_ol::{build_2ol_system, simulate_2ol_eq, two_ol_acceleration};

use nalgebra::{DVector, Matrix2};

use crate::error::{Error, Result};
use crate::lindyn::{DistributionTrajectory, StateLayout, Trajectory, DEFAULT_STEP_S};

/// One aimed movement: start, target, target width, horizon, step, and the
/// initial kinematic state (mean and position-velocity covariance).
#[derive(Debug, Clone)]
pub struct TaskSpec {
    /// Initial position mean (m). Usually equals `start`.
    pub p0: f64,
    /// Initial velocity mean (m/s).
    pub v0: f64,
    /// Covariance of (position, velocity) at step 0.
    pub pos_vel_cov: Matrix2<f64>,
    /// Movement origin / previous target center T0 (m).
    pub start: f64,
    /// Target center T (m).
    pub target: f64,
    /// Target width W (m); a movement counts as on-target within W/2 of T.
    pub width: f64,
    /// Horizon N (steps); trajectories have N+1 samples.
    pub n_steps: usize,
    /// Step h (s).
    pub h: f64,
}

impl TaskSpec {
    /// Task starting at rest at `start`.
    pub fn new(start: f64, target: f64, width: f64, n_steps: usize) -> Self {
        Self {
            p0: start,
            v0: 0.0,
            pos_vel_cov: Matrix2::zeros(),
            start,
            target,
            width,
            n_steps,
            h: DEFAULT_STEP_S,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 2 {
            return Err(Error::Parameter(format!(
                "horizon must be at least 2 steps, got {}",
                self.n_steps
            )));
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::Parameter(format!("step must be positive, got {}", self.h)));
        }
        if !(self.width >= 0.0) {
            return Err(Error::Parameter(format!(
                "target width must be nonnegative, got {}",
                self.width
            )));
        }
        for (name, v) in [
            ("p0", self.p0),
            ("v0", self.v0),
            ("start", self.start),
            ("target", self.target),
        ] {
            if !v.is_finite() {
                return Err(Error::Parameter(format!("{name} must be finite, got {v}")));
            }
        }
        if !self.pos_vel_cov.iter().all(|v| v.is_finite()) {
            return Err(Error::Parameter("initial covariance must be finite".into()));
        }
        Ok(())
    }

    /// Movement duration N·h (s).
    pub fn duration(&self) -> f64 {
        self.n_steps as f64 * self.h
    }

    /// Movement amplitude |T - T0|.
    pub fn distance(&self) -> f64 {
        (self.target - self.start).abs()
    }
}

/// Spring-mass-damper parameters. Damping ratio ζ = d / (2√k) is derived.
#[derive(Debug, Clone, Copy)]
pub struct TwoOlParams {
    /// Stiffness k (1/s²).
    pub k: f64,
    /// Damping d (1/s).
    pub d: f64,
}

impl TwoOlParams {
    pub fn new(k: f64, d: f64) -> Result<Self> {
        let p = Self { k, d };
        p.validate()?;
        Ok(p)
    }

    /// Construct from stiffness and damping ratio: d = 2ζ√k.
    pub fn from_stiffness_and_damping_ratio(k: f64, zeta: f64) -> Result<Self> {
        if !(k >= 0.0) || !k.is_finite() {
            return Err(Error::Parameter(format!("stiffness must be >= 0, got {k}")));
        }
        if !zeta.is_finite() || zeta < 0.0 {
            return Err(Error::Parameter(format!("damping ratio must be >= 0, got {zeta}")));
        }
        Self::new(k, 2.0 * zeta * k.sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 0.0) || !self.k.is_finite() {
            return Err(Error::Parameter(format!("stiffness must be >= 0, got {}", self.k)));
        }
        if !(self.d >= 0.0) || !self.d.is_finite() {
            return Err(Error::Parameter(format!("damping must be >= 0, got {}", self.d)));
        }
        Ok(())
    }

    /// Damping ratio ζ = d / (2√k); NaN for k = 0.
    pub fn damping_ratio(&self) -> f64 {
        self.d / (2.0 * self.k.sqrt())
    }
}

/// Number of polynomial steps for the quintic model. Real-valued ("relaxed")
/// so it can be optimized continuously; the surge extension holds the final
/// state afterwards.
#[derive(Debug, Clone, Copy)]
pub struct MinJerkParams {
    pub n_mj: f64,
}

impl MinJerkParams {
    pub fn new(n_mj: f64) -> Result<Self> {
        if !n_mj.is_finite() || n_mj < 0.0 {
            return Err(Error::Parameter(format!(
                "polynomial step count must be >= 0, got {n_mj}"
            )));
        }
        Ok(Self { n_mj })
    }
}

/// Quadratic cost weights: distance-to-target is weighted 1, velocity ω_v,
/// force ω_f per step (or terminally, depending on the model family), and the
/// squared control ω_r / (N-1) per step.
#[derive(Debug, Clone, Copy)]
pub struct LqCostWeights {
    pub omega_v: f64,
    pub omega_f: f64,
    pub omega_r: f64,
}

impl LqCostWeights {
    pub fn new(omega_v: f64, omega_f: f64, omega_r: f64) -> Result<Self> {
        let w = Self {
            omega_v,
            omega_f,
            omega_r,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_v >= 0.0) || !self.omega_v.is_finite() {
            return Err(Error::Parameter(format!(
                "velocity weight must be >= 0, got {}",
                self.omega_v
            )));
        }
        if !(self.omega_f >= 0.0) || !self.omega_f.is_finite() {
            return Err(Error::Parameter(format!(
                "force weight must be >= 0, got {}",
                self.omega_f
            )));
        }
        if !(self.omega_r > 0.0) || !self.omega_r.is_finite() {
            return Err(Error::Parameter(format!(
                "control weight must be > 0, got {}",
                self.omega_r
            )));
        }
        Ok(())
    }
}

/// Multiplicative control noise σ_u and sensor noise scale σ_s for the
/// output-feedback model with constant observation of (p, v, f).
#[derive(Debug, Clone, Copy)]
pub struct LqgNoiseParams {
    pub sigma_u: f64,
    pub sigma_s: f64,
}

impl LqgNoiseParams {
    pub fn new(sigma_u: f64, sigma_s: f64) -> Result<Self> {
        let p = Self { sigma_u, sigma_s };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_u >= 1e-10) || !self.sigma_u.is_finite() {
            return Err(Error::Parameter(format!(
                "control noise must be >= 1e-10, got {}",
                self.sigma_u
            )));
        }
        if !(self.sigma_s >= 0.0) || !self.sigma_s.is_finite() {
            return Err(Error::Parameter(format!(
                "sensor noise must be >= 0, got {}",
                self.sigma_s
            )));
        }
        Ok(())
    }
}

/// Noise parameters for the gaze-dependent observation model: velocity, force
/// and fixation noise levels, eccentricity-proportional position noise γ, and
/// the (relaxed, real-valued) saccade step n_s at which fixation moves from
/// the origin to the target.
#[derive(Debug, Clone, Copy)]
pub struct ElqgParams {
    pub sigma_u: f64,
    pub sigma_v: f64,
    pub sigma_f: f64,
    pub sigma_e: f64,
    pub gamma: f64,
    pub n_s: f64,
}

impl ElqgParams {
    pub fn new(
        sigma_u: f64,
        sigma_v: f64,
        sigma_f: f64,
        sigma_e: f64,
        gamma: f64,
        n_s: f64,
    ) -> Result<Self> {
        let p = Self {
            sigma_u,
            sigma_v,
            sigma_f,
            sigma_e,
            gamma,
            n_s,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_u >= 1e-10) || !self.sigma_u.is_finite() {
            return Err(Error::Parameter(format!(
                "control noise must be >= 1e-10, got {}",
                self.sigma_u
            )));
        }
        for (name, v) in [
            ("velocity noise", self.sigma_v),
            ("force noise", self.sigma_f),
            ("fixation noise", self.sigma_e),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.gamma >= 4e-18) || !self.gamma.is_finite() {
            return Err(Error::Parameter(format!(
                "eccentricity noise must be >= 4e-18, got {}",
                self.gamma
            )));
        }
        if !(self.n_s >= 0.0) || !self.n_s.is_finite() {
            return Err(Error::Parameter(format!(
                "saccade step must be >= 0, got {}",
                self.n_s
            )));
        }
        Ok(())
    }
}

/// Feedback law produced by the optimal-control solvers: control gains
/// `u_n = -L_n x̂_n`, filter gains for the estimate update when the model is
/// output-feedback, and solve diagnostics.
#[derive(Debug, Clone)]
pub struct ControlLaw {
    /// One gain row per step, length N.
    pub l_gains: Vec<DVector<f64>>,
    /// Filter gains, length N; `None` for exact-state models.
    pub k_gains: Option<Vec<nalgebra::DMatrix<f64>>>,
    /// Whether the iterative solve met its relative-improvement tolerance.
    pub converged: bool,
    /// Gain/filter update rounds performed (0 for direct solves).
    pub iterations: usize,
    /// Expected objective value under the law.
    pub expected_cost: f64,
}

/// Model families exposed by the fitting and CLI layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    TwoOlEq,
    MinJerk,
    Lqr,
    Lqg,
    Elqg,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::TwoOlEq,
        ModelKind::MinJerk,
        ModelKind::Lqr,
        ModelKind::Lqg,
        ModelKind::Elqg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TwoOlEq => "2ol-eq",
            ModelKind::MinJerk => "minjerk",
            ModelKind::Lqr => "lqr",
            ModelKind::Lqg => "lqg",
            ModelKind::Elqg => "elqg",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "2ol-eq" => Ok(ModelKind::TwoOlEq),
            "minjerk" => Ok(ModelKind::MinJerk),
            "lqr" => Ok(ModelKind::Lqr),
            "lqg" => Ok(ModelKind::Lqg),
            "elqg" => Ok(ModelKind::Elqg),
            other => Err(Error::Parameter(format!(
                "unknown model '{other}' (expected 2ol-eq, minjerk, lqr, lqg, or elqg)"
            ))),
        }
    }

    /// True for families whose prediction is a distribution sequence rather
    /// than a single trajectory.
    pub fn is_stochastic(self) -> bool {
        matches!(self, ModelKind::Lqg | ModelKind::Elqg)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A model family together with its parameter values.
#[derive(Debug, Clone)]
pub enum ModelParams {
    TwoOlEq(TwoOlParams),
    MinJerk(MinJerkParams),
    Lqr(LqCostWeights),
    Lqg {
        weights: LqCostWeights,
        noise: LqgNoiseParams,
    },
    Elqg {
        weights: LqCostWeights,
        noise: ElqgParams,
    },
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::TwoOlEq(_) => ModelKind::TwoOlEq,
            ModelParams::MinJerk(_) => ModelKind::MinJerk,
            ModelParams::Lqr(_) => ModelKind::Lqr,
            ModelParams::Lqg { .. } => ModelKind::Lqg,
            ModelParams::Elqg { .. } => ModelKind::Elqg,
        }
    }
}

/// Flat per-step kinematics of one simulated movement, ready for CSV export:
/// position, velocity, acceleration (N+1 each) and the control sequence (N).
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub h: f64,
    pub pos: Vec<f64>,
    pub vel: Vec<f64>,
    pub acc: Vec<f64>,
    pub control: Vec<f64>,
}

impl SimTrace {
    pub fn n_steps(&self) -> usize {
        self.pos.len().saturating_sub(1)
    }

    /// First step n with |p_n - T| <= W/2, as time in seconds.
    pub fn time_to_target(&self, target: f64, width: f64) -> Option<f64> {
        self.pos
            .iter()
            .position(|&p| (p - target).abs() <= width / 2.0)
            .map(|n| n as f64 * self.h)
    }

    pub fn peak_speed(&self) -> f64 {
        self.vel.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Result of running one model on one task.
pub struct SimOutput {
    pub trace: SimTrace,
    /// Per-step state Gaussians for the stochastic families.
    pub distribution: Option<DistributionTrajectory>,
    /// Full solver output for the stochastic families (kept for sampling).
    pub solution: Option<LqgSolution>,
    /// Solve diagnostics when an optimal-control solve was involved.
    pub law: Option<ControlLaw>,
}

fn pointing_trace(traj: &Trajectory) -> SimTrace {
    // Unit effective mass: acceleration equals the force state.
    let f_idx = traj
        .layout
        .force()
        .expect("pointing trajectories carry a force state");
    SimTrace {
        h: traj.h,
        pos: traj.positions(),
        vel: traj.velocities(),
        acc: traj.states.iter().map(|x| x[f_idx]).collect(),
        control: traj.controls.clone(),
    }
}

/// Run any model on a task. Stochastic families return the analytic
/// distribution sequence and their mean trajectory as the trace.
pub fn simulate_model(
    params: &ModelParams,
    task: &TaskSpec,
    opts: &SolveOptions,
) -> Result<SimOutput> {
    task.validate()?;
    match params {
        ModelParams::TwoOlEq(p) => {
            let traj = simulate_2ol_eq(p, task)?;
            let acc = two_ol_acceleration(p, &traj);
            Ok(SimOutput {
                trace: SimTrace {
                    h: traj.h,
                    pos: traj.positions(),
                    vel: traj.velocities(),
                    acc,
                    control: traj.controls.clone(),
                },
                distribution: None,
                solution: None,
                law: None,
            })
        }
        ModelParams::MinJerk(p) => {
            let boundary = MinJerkBoundary::rest_to_rest(task.p0, task.target);
            let traj = minjerk_trajectory(p, task, &boundary)?;
            let a_idx = traj.layout.acc().expect("polynomial trajectories carry acceleration");
            Ok(SimOutput {
                trace: SimTrace {
                    h: traj.h,
                    pos: traj.positions(),
                    vel: traj.velocities(),
                    acc: traj.states.iter().map(|x| x[a_idx]).collect(),
                    control: traj.controls.clone(),
                },
                distribution: None,
                solution: None,
                law: None,
            })
        }
        ModelParams::Lqr(w) => {
            let sol = solve_lqr(task, w)?;
            let traj = sol.simulate();
            Ok(SimOutput {
                trace: pointing_trace(&traj),
                distribution: None,
                solution: None,
                law: Some(sol.law),
            })
        }
        ModelParams::Lqg { weights, noise } => {
            let sol = solve_lqg(task, weights, noise, opts)?;
            let traj = sol.mean_trajectory();
            let dist = sol.predict_distribution();
            let law = sol.law.clone();
            Ok(SimOutput {
                trace: pointing_trace(&traj),
                distribution: Some(dist),
                solution: Some(sol),
                law: Some(law),
            })
        }
        ModelParams::Elqg { weights, noise } => {
            let sol = solve_elqg(task, weights, noise, opts)?;
            let traj = sol.mean_trajectory();
            let dist = sol.predict_distribution();
            let law = sol.law.clone();
            Ok(SimOutput {
                trace: pointing_trace(&traj),
                distribution: Some(dist),
                solution: Some(sol),
                law: Some(law),
            })
        }
    }
}

/// Exact-state linear-quadratic solution for the pointing system.
pub struct LqrSolution {
    pub system: crate::lindyn::LinearSystem,
    pub layout: StateLayout,
    pub x0: DVector<f64>,
    pub riccati: RiccatiSolution,
    pub law: ControlLaw,
}

impl LqrSolution {
    /// Deterministic closed-loop rollout u_n = -L_n x_n.
    pub fn simulate(&self) -> Trajectory {
        let mut states = Vec::with_capacity(self.riccati.l_gains.len() + 1);
        let mut controls = Vec::with_capacity(self.riccati.l_gains.len());
        states.push(self.x0.clone());
        for l in &self.riccati.l_gains {
            let x = states.last().unwrap();
            let u = -l.dot(x);
            controls.push(u);
            states.push(self.system.step(x, u));
        }
        Trajectory {
            layout: self.layout,
            h: self.system.h,
            states,
            controls,
        }
    }
}

/// Solve the exact-state pointing problem with running state costs at every
/// step and control cost ω_r/(N-1).
pub fn solve_lqr(task: &TaskSpec, weights: &LqCostWeights) -> Result<LqrSolution> {
    task.validate()?;
    weights.validate()?;
    let layout = StateLayout::Pointing;
    let system = build_pointing_system(task.h)?;
    let q = state_cost_matrix(layout, weights);
    let r = control_cost_weight(weights, task.n_steps);
    let riccati = lq_backward_recursion(
        &system.A,
        &system.b,
        &StateCostSchedule::EveryStep(q),
        r,
        task.n_steps,
    )?;
    let x0 = pointing::initial_mean(layout, task);
    let expected_cost = (x0.transpose() * &riccati.cost_to_go[0] * &x0)[(0, 0)];
    let law = ControlLaw {
        l_gains: riccati.l_gains.clone(),
        k_gains: None,
        converged: true,
        iterations: 0,
        expected_cost,
    };
    Ok(LqrSolution {
        system,
        layout,
        x0,
        riccati,
        law,
    })
}
