//! Finite-horizon discrete-time linear-quadratic regulator via the backward
//! Riccati recursion, for a single control channel.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;

/// Where the state cost applies: at every step 0..=N, or only at the final
/// step N.
#[derive(Debug, Clone)]
pub enum StateCostSchedule {
    EveryStep(DMatrix<f64>),
    TerminalOnly(DMatrix<f64>),
}

impl StateCostSchedule {
    pub fn terminal(&self) -> &DMatrix<f64> {
        match self {
            StateCostSchedule::EveryStep(q) | StateCostSchedule::TerminalOnly(q) => q,
        }
    }

    /// State cost at step n < N.
    pub fn running(&self) -> Option<&DMatrix<f64>> {
        match self {
            StateCostSchedule::EveryStep(q) => Some(q),
            StateCostSchedule::TerminalOnly(_) => None,
        }
    }

    /// Accumulate x' Q_n x for a step (used by simulation-side cost checks).
    pub fn state_cost(&self, n: usize, n_steps: usize, x: &DVector<f64>) -> f64 {
        match self {
            StateCostSchedule::EveryStep(q) => (x.transpose() * q * x)[(0, 0)],
            StateCostSchedule::TerminalOnly(q) => {
                if n == n_steps {
                    (x.transpose() * q * x)[(0, 0)]
                } else {
                    0.0
                }
            }
        }
    }
}

/// Output of the backward pass: optimal gains L_0..L_{N-1} (u_n = -L_n x_n)
/// and cost-to-go matrices S_0..S_N with J*(x, n) = x' S_n x.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub l_gains: Vec<DVector<f64>>,
    pub cost_to_go: Vec<DMatrix<f64>>,
}

/// Backward recursion
///   L_n = (r + b' S_{n+1} b)^{-1} b' S_{n+1} A
///   S_n = Q_n + A' S_{n+1} A - A' S_{n+1} b L_n,  S_N = Q_N
/// for scalar control cost r per step.
#[allow(non_snake_case)]
pub fn lq_backward_recursion(
    A: &DMatrix<f64>,
    b: &DVector<f64>,
    schedule: &StateCostSchedule,
    r: f64,
    n_steps: usize,
) -> Result<RiccatiSolution> {
    let k = A.nrows();
    if A.ncols() != k {
        return Err(Error::Dimension(format!(
            "dynamics matrix must be square, got {}x{}",
            A.nrows(),
            A.ncols()
        )));
    }
    if b.len() != k {
        return Err(Error::Dimension(format!(
            "control vector length {} does not match state dimension {k}",
            b.len()
        )));
    }
    let q_dim_ok = {
        let q = schedule.terminal();
        q.nrows() == k && q.ncols() == k
    };
    if !q_dim_ok {
        return Err(Error::Dimension("state cost matrix does not match state dimension".into()));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Parameter(format!("control cost must be > 0, got {r}")));
    }
    if n_steps == 0 {
        return Err(Error::Parameter("horizon must be at least 1 step".into()));
    }

    let mut cost_to_go = vec![DMatrix::zeros(k, k); n_steps + 1];
    let mut l_gains = vec![DVector::zeros(k); n_steps];
    cost_to_go[n_steps] = symmetrize(schedule.terminal());
    for n in (0..n_steps).rev() {
        let s_next = &cost_to_go[n + 1];
        let sb = s_next * b;
        let m = r + b.dot(&sb);
        // M > 0 is guaranteed for r > 0 and S PSD; guard against drift.
        if !(m > 0.0) {
            return Err(Error::Parameter(format!(
                "control curvature became nonpositive ({m}) at step {n}"
            )));
        }
        let l = (A.transpose() * &sb) / m; // row vector b' S A stored as column
        let mut s = A.transpose() * s_next * A - (A.transpose() * &sb) * l.transpose();
        if let Some(q) = schedule.running() {
            s += q;
        }
        cost_to_go[n] = symmetrize(&s);
        l_gains[n] = l;
    }
    Ok(RiccatiSolution { l_gains, cost_to_go })
}
