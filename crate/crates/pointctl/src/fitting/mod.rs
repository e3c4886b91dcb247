//! Parameter identification: an outer global search (differential evolution)
//! proposes parameter vectors inside per-model bounds, an inner solve runs
//! the model, and the loss compares the outcome against a reference
//! ensemble. Deterministic families score the summed squared position error
//! against the ensemble mean; stochastic families score the mean Wasserstein
//! distance between predicted and observed per-frame Gaussians.

mod de;

pub use de::{differential_evolution, DeResult, FitConfig};

use crate::data::TrajectoryEnsemble;
use crate::error::{Error, Result};
use crate::lindyn::DistributionTrajectory;
use crate::metrics::{mwd, sse, Gaussian2};
use crate::models::{
    minjerk_trajectory, simulate_model, ElqgParams, LqCostWeights, LqgNoiseParams, MinJerkBoundary,
    MinJerkParams, ModelKind, ModelParams, SimOutput, SimTrace, SolveOptions, TaskSpec,
    TwoOlParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Continuous,
    /// Searched as a real number even though the model reads it as a step
    /// count (fractional values are meaningful to the models).
    RelaxedInteger,
}

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
    pub kind: ParamKind,
}

impl ParamEntry {
    fn continuous(name: &'static str, lo: f64, hi: f64) -> Self {
        Self {
            name,
            lo,
            hi,
            kind: ParamKind::Continuous,
        }
    }

    fn relaxed(name: &'static str, lo: f64, hi: f64) -> Self {
        Self {
            name,
            lo,
            hi,
            kind: ParamKind::RelaxedInteger,
        }
    }
}

/// Box bounds of one model family's parameter vector, in a fixed order.
#[derive(Debug, Clone)]
pub struct ParameterSpace {
    pub entries: Vec<ParamEntry>,
}

impl ParameterSpace {
    /// Default search box per family. Step-count parameters are bounded by
    /// the task horizon `n_steps`.
    pub fn for_model(kind: ModelKind, n_steps: usize) -> Self {
        let n = n_steps as f64;
        let entries = match kind {
            ModelKind::TwoOlEq => vec![
                ParamEntry::continuous("k", 0.0, 500.0),
                ParamEntry::continuous("d", 0.0, 500.0),
            ],
            ModelKind::MinJerk => vec![ParamEntry::relaxed("n_mj", 0.0, n)],
            ModelKind::Lqr => vec![
                ParamEntry::continuous("omega_r", 2e-9, 20.0),
                ParamEntry::continuous("omega_v", 0.0, 0.1),
                ParamEntry::continuous("omega_f", 0.0, 1e-3),
            ],
            ModelKind::Lqg => vec![
                ParamEntry::continuous("omega_r", 4e-18, 7e-3),
                ParamEntry::continuous("omega_v", 0.0, 10.0),
                ParamEntry::continuous("omega_f", 0.0, 10.0),
                ParamEntry::continuous("sigma_u", 1e-9, 5.0),
                ParamEntry::continuous("sigma_s", 0.0, 5.0),
            ],
            ModelKind::Elqg => vec![
                ParamEntry::continuous("omega_r", 4e-18, 7e-3),
                ParamEntry::continuous("omega_v", 0.0, 10.0),
                ParamEntry::continuous("omega_f", 0.0, 10.0),
                ParamEntry::continuous("sigma_u", 1e-9, 5.0),
                ParamEntry::continuous("sigma_v", 0.0, 10.0),
                ParamEntry::continuous("sigma_f", 0.0, 50.0),
                ParamEntry::continuous("sigma_e", 0.0, 5.0),
                ParamEntry::continuous("gamma", 4e-18, 100.0),
                ParamEntry::relaxed("n_s", 0.0, n),
            ],
        };
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            if !(e.lo < e.hi) || !e.lo.is_finite() || !e.hi.is_finite() {
                return Err(Error::Fit(format!(
                    "parameter '{}' needs finite bounds with lower < upper, got [{}, {}]",
                    e.name, e.lo, e.hi
                )));
            }
        }
        Ok(())
    }

    pub fn clip(&self, x: &mut [f64]) {
        for (v, e) in x.iter_mut().zip(&self.entries) {
            *v = v.clamp(e.lo, e.hi);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.entries)
                .all(|(v, e)| *v >= e.lo && *v <= e.hi)
    }
}

/// Interpret a search vector (in the `ParameterSpace::for_model` order) as
/// model parameters.
pub fn params_from_vector(kind: ModelKind, x: &[f64]) -> Result<ModelParams> {
    let need = |n: usize| -> Result<()> {
        if x.len() == n {
            Ok(())
        } else {
            Err(Error::Fit(format!(
                "{kind} expects {n} parameters, got {}",
                x.len()
            )))
        }
    };
    match kind {
        ModelKind::TwoOlEq => {
            need(2)?;
            Ok(ModelParams::TwoOlEq(TwoOlParams::new(x[0], x[1])?))
        }
        ModelKind::MinJerk => {
            need(1)?;
            Ok(ModelParams::MinJerk(MinJerkParams::new(x[0])?))
        }
        ModelKind::Lqr => {
            need(3)?;
            Ok(ModelParams::Lqr(LqCostWeights::new(x[1], x[2], x[0])?))
        }
        ModelKind::Lqg => {
            need(5)?;
            Ok(ModelParams::Lqg {
                weights: LqCostWeights::new(x[1], x[2], x[0])?,
                noise: LqgNoiseParams::new(x[3], x[4])?,
            })
        }
        ModelKind::Elqg => {
            need(9)?;
            Ok(ModelParams::Elqg {
                weights: LqCostWeights::new(x[1], x[2], x[0])?,
                noise: ElqgParams::new(x[3], x[4], x[5], x[6], x[7], x[8])?,
            })
        }
    }
}

/// Flatten model parameters back into the search-vector order.
pub fn vector_from_params(params: &ModelParams) -> Vec<f64> {
    match params {
        ModelParams::TwoOlEq(p) => vec![p.k, p.d],
        ModelParams::MinJerk(p) => vec![p.n_mj],
        ModelParams::Lqr(w) => vec![w.omega_r, w.omega_v, w.omega_f],
        ModelParams::Lqg { weights: w, noise } => vec![
            w.omega_r,
            w.omega_v,
            w.omega_f,
            noise.sigma_u,
            noise.sigma_s,
        ],
        ModelParams::Elqg { weights: w, noise } => vec![
            w.omega_r,
            w.omega_v,
            w.omega_f,
            noise.sigma_u,
            noise.sigma_v,
            noise.sigma_f,
            noise.sigma_e,
            noise.gamma,
            noise.n_s,
        ],
    }
}

/// Run one candidate. MinJerk honors the caller's boundary conditions (the
/// fit derives them from the reference data); other families take their
/// start state from the task.
fn simulate_candidate(
    kind: ModelKind,
    x: &[f64],
    task: &TaskSpec,
    boundary: Option<&MinJerkBoundary>,
    opts: &SolveOptions,
) -> Result<SimOutput> {
    let params = params_from_vector(kind, x)?;
    match (&params, boundary) {
        (ModelParams::MinJerk(p), Some(b)) => {
            let traj = minjerk_trajectory(p, task, b)?;
            let a_idx = traj
                .layout
                .acc()
                .expect("polynomial trajectories carry acceleration");
            Ok(SimOutput {
                trace: SimTrace {
                    h: traj.h,
                    pos: traj.positions(),
                    vel: traj.velocities(),
                    acc: traj.states.iter().map(|s| s[a_idx]).collect(),
                    control: traj.controls.clone(),
                },
                distribution: None,
                solution: None,
                law: None,
            })
        }
        _ => simulate_model(&params, task, opts),
    }
}

/// Summed squared error between the candidate's positions and a reference
/// position series. Any solver or simulation failure maps to +infinity.
pub fn loss_deterministic(
    kind: ModelKind,
    x: &[f64],
    task: &TaskSpec,
    boundary: Option<&MinJerkBoundary>,
    reference: &[f64],
) -> f64 {
    let out = match simulate_candidate(kind, x, task, boundary, &SolveOptions::default()) {
        Ok(out) => out,
        Err(_) => return f64::INFINITY,
    };
    match sse(&out.trace.pos, reference) {
        Ok(l) if l.is_finite() => l,
        _ => f64::INFINITY,
    }
}

/// Mean Wasserstein distance between the candidate's predicted per-frame
/// position-velocity Gaussians and a reference Gaussian series. Failures map
/// to +infinity.
pub fn loss_stochastic(
    kind: ModelKind,
    x: &[f64],
    task: &TaskSpec,
    reference: &[Gaussian2],
    opts: &SolveOptions,
) -> f64 {
    let out = match simulate_candidate(kind, x, task, None, opts) {
        Ok(out) => out,
        Err(_) => return f64::INFINITY,
    };
    let dist = match &out.distribution {
        Some(d) => d,
        None => return f64::INFINITY,
    };
    let sim = crate::metrics::pos_vel_series(dist);
    match mwd(&sim, reference) {
        Ok(l) if l.is_finite() => l,
        _ => f64::INFINITY,
    }
}

/// Identified parameters with their search diagnostics and the winning
/// model output.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub kind: ModelKind,
    pub names: Vec<&'static str>,
    pub best: Vec<f64>,
    pub params: ModelParams,
    pub loss: f64,
    /// Best loss after the initial population and after each generation.
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub generations: usize,
    pub converged: bool,
    pub seed: u64,
    pub trace: SimTrace,
    pub distribution: Option<DistributionTrajectory>,
}

/// Boundary conditions for the polynomial family, taken from the reference:
/// initial position and velocity from frame 0, initial acceleration from the
/// smoothed mean series, final state at rest on the target.
fn boundary_from_ensemble(ensemble: &TrajectoryEnsemble, task: &TaskSpec) -> MinJerkBoundary {
    let a0 = crate::data::reference_acceleration(&ensemble.mean_pos, ensemble.h)
        .map(|a| a[0])
        .unwrap_or(0.0);
    MinJerkBoundary {
        p0: ensemble.mean_pos[0],
        v0: ensemble.mean_vel[0],
        a0,
        pf: task.target,
        vf: 0.0,
        af: 0.0,
    }
}

/// Fit one model family to one condition's reference ensemble.
///
/// Deterministic families are scored against the ensemble mean positions;
/// stochastic families against the ensemble's per-frame Gaussians. The
/// returned result carries the winning trajectory (and distribution for
/// stochastic families). If every candidate in the entire search failed, the
/// fit reports an error instead of an infinite loss.
pub fn fit(
    kind: ModelKind,
    task: &TaskSpec,
    ensemble: &TrajectoryEnsemble,
    cfg: &FitConfig,
) -> Result<FitResult> {
    if ensemble.n_trials() == 0 || ensemble.mean_pos.is_empty() {
        return Err(Error::Fit("reference ensemble is empty".into()));
    }
    task.validate()?;
    if ensemble.mean_pos.len() != task.n_steps + 1 {
        return Err(Error::Fit(format!(
            "reference has {} frames but the task horizon needs {}",
            ensemble.mean_pos.len(),
            task.n_steps + 1
        )));
    }

    let space = ParameterSpace::for_model(kind, task.n_steps);
    let opts = SolveOptions::default();
    let boundary = (kind == ModelKind::MinJerk).then(|| boundary_from_ensemble(ensemble, task));
    let reference_gaussians = kind.is_stochastic().then(|| ensemble.gaussian_series());

    let de = {
        let boundary = boundary.as_ref();
        let gaussians = reference_gaussians.as_deref();
        let mean_pos = &ensemble.mean_pos;
        let opts = &opts;
        let loss = |x: &[f64]| -> f64 {
            match gaussians {
                Some(g) => loss_stochastic(kind, x, task, g, opts),
                None => loss_deterministic(kind, x, task, boundary, mean_pos),
            }
        };
        differential_evolution(&space, loss, cfg)?
    };

    if !de.best_loss.is_finite() {
        return Err(Error::Fit(format!(
            "every candidate evaluation failed while fitting {kind} \
             ({} evaluations over {} generations)",
            de.evaluations, de.generations
        )));
    }

    let params = params_from_vector(kind, &de.best)?;
    let winner = simulate_candidate(kind, &de.best, task, boundary.as_ref(), &opts)?;
    Ok(FitResult {
        kind,
        names: space.names(),
        best: de.best,
        params,
        loss: de.best_loss,
        history: de.history,
        evaluations: de.evaluations,
        generations: de.generations,
        converged: de.converged,
        seed: cfg.seed,
        trace: winner.trace,
        distribution: winner.distribution,
    })
}
