//! Two-player linear-quadratic covariance steering games.
//!
//! The minimizing player (the *controller*) must steer a Gaussian state
//! distribution to a prescribed terminal mean and covariance; the maximizing
//! player (the *stopper*) shares the quadratic payoff but ignores that
//! terminal requirement. The game separates into a mean game over open-loop
//! inputs and a covariance game over feedback gains:
//!
//! * [`model`] lifts stage dynamics and weights to horizon-length matrices and
//!   evaluates the payoff decomposition.
//! * [`mean_game`] solves the unconstrained mean saddle point in closed form,
//!   the best responses, the relative-controllability test and the
//!   constrained upper game.
//! * [`cov_game`] works in gain space: prior covariance, gain-space payoff,
//!   the unconstrained stationary saddle, and the Jacobi iteration with a
//!   spectral-norm constrained controller step.
//! * [`montecarlo`] rolls out closed-loop trajectories and compares empirical
//!   moments with the analytic predictions.

pub mod cov_game;
pub mod error;
pub mod linalg;
pub mod mean_game;
pub mod model;
pub mod montecarlo;

mod barrier;

pub use cov_game::{
    ControllerStep, CovGame, CurvatureReport, FallbackSolution, GainProfile, JacobiIterate, JacobiOptions,
    JacobiTrace, PriorCovariance, StepCheck, StepOptions, StructureMultipliers, UcsgSolution,
};
pub use error::{Error, Result};
pub use mean_game::{ConstrainedMeanSolution, MeanGame, MeanSaddle, RelativeControllability};
pub use model::{CostWeights, GaussianBoundary, LiftedSystem, MeanTrajectory, Payoff, StageSystem};
pub use montecarlo::{empirical_moments, ellipse_points, rollout, EmpiricalMoments, RolloutBatch};

/// Tolerance for definiteness checks on weights, covariances and curvature factors.
pub const EIG_TOL: f64 = 1e-10;
