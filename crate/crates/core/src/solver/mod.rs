//! Photometric bundle adjustment solvers.
//!
//! Both solvers minimize `Σ_f Σ_n Σ_{x∈P_n} ρ_γ(I₀(x) − I_f(W(x; p_fn)))` by
//! damped Gauss-Newton with IRLS Huber weights, share the convergence test
//! (largest anchor reprojection change below a pixel threshold) and fix the
//! scale gauge by normalizing the mean inverse depth to one after each
//! accepted step. The reference camera is the identity and is not optimized.

mod driver;
mod fc;
mod hessian;
mod huber;
mod ic;
mod problem;

use alloc::vec::Vec;

pub use fc::fc_solve;
pub use hessian::{BlockHessian, BlockVector, HessianFactor, LinearSolver, Matrix7, Vector7};
pub use huber::{huber_weight, HuberLoss};
pub use ic::{build_ic_system, ic_solve, IcSystem};
pub use problem::{energy_eval, Params, ProblemState, ResidualSet};

use crate::geometry::Pose;
use crate::{Error, Result};

/// Monotonic time source used for per-iteration timings.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// Reports zero elapsed time; for builds without `std`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

#[cfg(feature = "std")]
#[derive(Debug, Clone, Copy)]
pub struct StdClock {
    origin: std::time::Instant,
}

#[cfg(feature = "std")]
impl Default for StdClock {
    fn default() -> Self {
        Self {
            origin: std::time::Instant::now(),
        }
    }
}

#[cfg(feature = "std")]
impl Clock for StdClock {
    fn now_ms(&self) -> f64 {
        self.origin.elapsed().as_secs_f64() * 1e3
    }
}

/// Levenberg damping `H + λI`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Damping {
    pub initial: f64,
    pub increase: f64,
    pub decrease: f64,
    pub min: f64,
}

impl Default for Damping {
    fn default() -> Self {
        Self {
            initial: 1e-6,
            increase: 10.0,
            decrease: 10.0,
            min: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub huber: HuberLoss,
    /// Convergence threshold on the largest anchor reprojection update, px.
    pub threshold_px: f64,
    pub max_iterations: usize,
    /// `None` runs plain Gauss-Newton: every step is taken.
    pub damping: Option<Damping>,
    /// Consecutive rejected (or, undamped, energy-increasing) steps before
    /// the solve is declared diverged.
    pub max_bad_steps: usize,
    pub linear_solver: LinearSolver,
    /// Evaluate residuals and Jacobians on the rayon pool when available.
    /// Results are identical either way.
    pub parallel: bool,
    /// Inverse compositional only: rebuild `H = Jᵀ W J` with the current
    /// Huber weights every iteration instead of keeping the initial weights.
    pub ic_refresh_weights: bool,
    pub record_snapshots: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            huber: HuberLoss::default(),
            threshold_px: 5e-3,
            max_iterations: 200,
            damping: Some(Damping::default()),
            max_bad_steps: 10,
            linear_solver: LinearSolver::Schur,
            parallel: true,
            ic_refresh_weights: false,
            record_snapshots: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_px > 0.0) {
            return Err(Error::InvalidConfig(
                "convergence threshold must be positive",
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1"));
        }
        if self.max_bad_steps == 0 {
            return Err(Error::InvalidConfig("max_bad_steps must be at least 1"));
        }
        if let Some(d) = &self.damping {
            if !(d.initial >= 0.0 && d.min >= 0.0 && d.increase > 1.0 && d.decrease >= 1.0) {
                return Err(Error::InvalidConfig("invalid damping schedule"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ForwardsCompositional,
    InverseCompositional,
}

impl Method {
    pub fn short_name(&self) -> &'static str {
        match self {
            Method::ForwardsCompositional => "fc",
            Method::InverseCompositional => "ic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Warning {
    /// The initial translation of this frame is zero, so inverse depths are
    /// unobservable from it under the inverse compositional linearization.
    ZeroInitialTranslation { frame: usize },
    /// The inverse-depth row of the Hessian is zero for this point.
    UnobservableDepth { point: usize },
}

/// State after an accepted iteration (iteration 0 is the initialization).
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub energy: f64,
    pub max_update_px: f64,
    /// Cumulative since the start of the solve.
    pub wall_ms: f64,
    pub hessian_builds: usize,
    pub hessian_factorizations: usize,
    pub active_residuals: usize,
    pub damping: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub poses: Vec<Pose>,
    pub inv_depths: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub method: Method,
    pub status: SolveStatus,
    /// Outer iterations performed, including a final one whose step was
    /// below the threshold but not taken.
    pub iterations: usize,
    pub records: Vec<IterationRecord>,
    /// Parallel to `records` when snapshots are enabled.
    pub snapshots: Vec<Snapshot>,
    pub hessian_builds: usize,
    pub hessian_factorizations: usize,
    pub warnings: Vec<Warning>,
    /// Solver wall-clock time including any final rejected step.
    pub total_ms: f64,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn initial_energy(&self) -> f64 {
        self.records[0].energy
    }

    pub fn final_energy(&self) -> f64 {
        self.records.last().map(|r| r.energy).unwrap_or(f64::NAN)
    }

    /// Mean time per outer iteration, excluding the initial linearization
    /// recorded with iteration 0.
    pub fn mean_iteration_ms(&self) -> f64 {
        let first = self.records.first().map(|r| r.wall_ms).unwrap_or(0.0);
        if self.iterations == 0 {
            return 0.0;
        }
        (self.total_ms - first) / self.iterations as f64
    }
}
