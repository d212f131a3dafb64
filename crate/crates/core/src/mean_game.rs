//! Mean steering game over the open-loop mean inputs `(U, V)`.
//!
//! With `P = B'QB + R` and `H = C'QC - S` the payoff gradients are
//!
//! ```text
//! grad_U J = 2 (P U + B'QC V + B'QA mu0)
//! grad_V J = 2 (C'QB U + H V + C'QA mu0)
//! ```
//!
//! Every solve goes through the Schur complement on `H`, which is negative
//! definite whenever the stopper's problem is concave.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, min_eigenvalue, numerical_rank, singular_values, symmetrized};
use crate::model::{check_len, mean_cost, CostWeights, LiftedSystem};
use crate::EIG_TOL;

/// Default relative threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-9;
/// Condition number of `G R^-1 G'` above which the constrained solve is flagged.
pub const GRAM_COND_WARN: f64 = 1e12;

/// Result of the stopper concavity check `S - C'QC > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanConcavity {
    pub holds: bool,
    pub min_eig: f64,
}

/// Unique saddle point of the unconstrained mean game.
#[derive(Debug, Clone)]
pub struct MeanSaddle {
    pub controller: DVector<f64>,
    pub stopper: DVector<f64>,
    pub value: f64,
    /// Norms of the payoff gradients in `U` and `V` at the solution.
    pub grad_norms: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct RelativeControllability {
    /// `G = B_N - C_N (C'QC - S)^-1 C'QB`
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub rank_tol: f64,
}

impl RelativeControllability {
    pub fn full_row_rank(&self) -> bool {
        self.rank == self.matrix.nrows()
    }
}

/// Controller-first (upper) solution with the terminal mean constraint.
#[derive(Debug, Clone)]
pub struct ConstrainedMeanSolution {
    pub controller: DVector<f64>,
    /// Stopper best response to `controller`.
    pub stopper: DVector<f64>,
    pub multiplier: DVector<f64>,
    /// Reduced Hessian `R + B'QB - B'QC (C'QC - S)^-1 C'QB`.
    pub reduced_hessian: DMatrix<f64>,
    /// Reduced linear term `(B'QC (C'QC - S)^-1 C' - B') Q A mu0`.
    pub reduced_linear: DVector<f64>,
    pub terminal_residual: f64,
    pub value: f64,
    pub gram_condition: f64,
    pub warning: Option<String>,
}

/// Cached lifted products for one `(system, weights)` pair.
#[derive(Debug, Clone)]
pub struct MeanGame<'a> {
    sys: &'a LiftedSystem,
    weights: &'a CostWeights,
    controller_hessian: DMatrix<f64>,
    cross: DMatrix<f64>,
    stopper_hessian: DMatrix<f64>,
    controller_drift: DMatrix<f64>,
    stopper_drift: DMatrix<f64>,
    concavity: MeanConcavity,
    // Cholesky of -(C'QC - S); present iff concavity holds
    neg_stopper_chol: Option<Cholesky<f64, Dyn>>,
    pub rank_tol: f64,
}

impl<'a> MeanGame<'a> {
    pub fn new(sys: &'a LiftedSystem, weights: &'a CostWeights) -> Result<Self> {
        Self::with_tolerances(sys, weights, EIG_TOL, RANK_TOL)
    }

    pub fn with_tolerances(sys: &'a LiftedSystem, weights: &'a CostWeights, eig_tol: f64, rank_tol: f64) -> Result<Self> {
        weights.check_against(sys)?;
        let q = weights.q_bar();
        let qb = q * sys.controller_map();
        let qc = q * sys.stopper_map();
        let qa = q * sys.state_map();
        let controller_hessian = symmetrized(&(sys.controller_map().transpose() * &qb + weights.r_bar()));
        let cross = sys.controller_map().transpose() * &qc;
        let stopper_hessian = symmetrized(&(sys.stopper_map().transpose() * &qc - weights.s_bar()));
        let controller_drift = sys.controller_map().transpose() * &qa;
        let stopper_drift = sys.stopper_map().transpose() * &qa;

        let neg = -&stopper_hessian;
        let min_eig = min_eigenvalue(&neg);
        let holds = min_eig > eig_tol;
        let neg_stopper_chol = if holds { neg.cholesky() } else { None };
        Ok(Self {
            sys,
            weights,
            controller_hessian,
            cross,
            stopper_hessian,
            controller_drift,
            stopper_drift,
            concavity: MeanConcavity { holds: holds && neg_stopper_chol.is_some(), min_eig },
            neg_stopper_chol,
            rank_tol,
        })
    }

    pub fn system(&self) -> &LiftedSystem {
        self.sys
    }

    /// Smallest eigenvalue of `S - C'QC` and whether it clears `eig_tol`.
    pub fn concavity(&self) -> MeanConcavity {
        self.concavity
    }

    fn require_concave(&self) -> Result<&Cholesky<f64, Dyn>> {
        self.neg_stopper_chol
            .as_ref()
            .ok_or(Error::MeanConcavity { min_eig: self.concavity.min_eig })
    }

    /// `B'QB + R`
    pub fn controller_hessian(&self) -> &DMatrix<f64> {
        &self.controller_hessian
    }
    /// `C'QC - S`
    pub fn stopper_hessian(&self) -> &DMatrix<f64> {
        &self.stopper_hessian
    }

    pub fn cost(&self, mu0: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        mean_cost(self.sys, self.weights, mu0, u, v)
    }

    /// Full gradients of the mean payoff with respect to `U` and `V`.
    pub fn gradients(&self, mu0: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let gu = &self.controller_hessian * u + &self.cross * v + &self.controller_drift * mu0;
        let gv = self.cross.tr_mul(u) + &self.stopper_hessian * v + &self.stopper_drift * mu0;
        (gu * 2.0, gv * 2.0)
    }

    /// Controller best response `U = -(B'QB + R)^-1 (B'QC V + B'QA mu0)`.
    pub fn controller_best_response(&self, mu0: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_inputs(mu0, None, Some(v))?;
        let rhs = -(&self.cross * v + &self.controller_drift * mu0);
        let chol = self
            .controller_hessian
            .clone()
            .cholesky()
            .ok_or(Error::Singular { what: "controller Hessian B'QB + R" })?;
        Ok(chol.solve(&rhs))
    }

    /// Stopper best response `V = -(C'QC - S)^-1 (C'QB U + C'QA mu0)`.
    pub fn stopper_best_response(&self, mu0: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_inputs(mu0, Some(u), None)?;
        let chol = self.require_concave()?;
        Ok(chol.solve(&(self.cross.tr_mul(u) + &self.stopper_drift * mu0)))
    }

    /// `(R_red, M_red)`: the controller's problem after substituting the
    /// stopper's best response is `min U' R_red U - 2 M_red' U + const`.
    fn reduced(&self, mu0: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let chol = self.require_concave()?;
        let neg_inv_cross_t = chol.solve(&self.cross.transpose());
        let reduced_hessian = symmetrized(&(&self.controller_hessian + &self.cross * &neg_inv_cross_t));
        let reduced_linear =
            -(&self.controller_drift * mu0) - &self.cross * chol.solve(&(&self.stopper_drift * mu0));
        Ok((reduced_hessian, reduced_linear))
    }

    /// Closed-form saddle of the unconstrained mean game.
    pub fn solve_unconstrained(&self, mu0: &DVector<f64>) -> Result<MeanSaddle> {
        self.check_inputs(mu0, None, None)?;
        let (reduced_hessian, reduced_linear) = self.reduced(mu0)?;
        let chol = reduced_hessian
            .cholesky()
            .ok_or(Error::Singular { what: "saddle system (Schur complement)" })?;
        let controller = chol.solve(&reduced_linear);
        let stopper = self.stopper_best_response(mu0, &controller)?;
        let (gu, gv) = self.gradients(mu0, &controller, &stopper);
        Ok(MeanSaddle {
            value: self.cost(mu0, &controller, &stopper),
            grad_norms: [gu.norm(), gv.norm()],
            controller,
            stopper,
        })
    }

    /// Terminal mean reached when the stopper best-responds:
    /// `mu_N = offset(mu0) + G U`. Returns the offset.
    pub fn terminal_offset(&self, mu0: &DVector<f64>) -> Result<DVector<f64>> {
        let chol = self.require_concave()?;
        let an = self.sys.state_row(self.sys.horizon());
        let cn = self.sys.stopper_row(self.sys.horizon());
        Ok(an * mu0 + cn * chol.solve(&(&self.stopper_drift * mu0)))
    }

    pub fn relative_controllability(&self) -> Result<RelativeControllability> {
        let chol = self.require_concave()?;
        let bn = self.sys.controller_row(self.sys.horizon());
        let cn = self.sys.stopper_row(self.sys.horizon());
        let matrix = bn + cn * chol.solve(&self.cross.transpose());
        let singular_values = singular_values(&matrix);
        let rank = numerical_rank(&singular_values, self.rank_tol);
        Ok(RelativeControllability { matrix, rank, singular_values, rank_tol: self.rank_tol })
    }

    /// Whether the terminal mean `mu_n` is reachable in the upper game:
    /// `rank [G | mu_N - offset] == rank G`.
    pub fn rank_condition(&self, rc: &RelativeControllability, mu0: &DVector<f64>, mu_n: &DVector<f64>) -> Result<bool> {
        check_len("terminal mean", mu_n.len(), self.sys.n_state())?;
        let target = mu_n - self.terminal_offset(mu0)?;
        Ok(rank_condition_holds(&rc.matrix, &target, rc.rank_tol))
    }

    /// Upper-game controller input meeting the terminal mean exactly, with the
    /// stopper best-responding.
    pub fn solve_constrained_upper(&self, mu0: &DVector<f64>, mu_n: &DVector<f64>) -> Result<ConstrainedMeanSolution> {
        self.check_inputs(mu0, None, None)?;
        check_len("terminal mean", mu_n.len(), self.sys.n_state())?;
        let rc = self.relative_controllability()?;
        if !rc.full_row_rank() {
            return Err(Error::RankDeficient {
                rank: rc.rank,
                required: rc.matrix.nrows(),
                singular_values: rc.singular_values.clone(),
            });
        }
        let g = &rc.matrix;
        let (reduced_hessian, reduced_linear) = self.reduced(mu0)?;
        let chol = reduced_hessian
            .clone()
            .cholesky()
            .ok_or(Error::Singular { what: "reduced controller Hessian" })?;
        let rinv_m = chol.solve(&reduced_linear);
        let rinv_gt = chol.solve(&g.transpose());
        let gram = symmetrized(&(g * &rinv_gt));
        let gram_condition = condition_number(&gram);
        let rhs = mu_n - self.terminal_offset(mu0)? - g * &rinv_m;
        let half_multiplier = gram
            .clone()
            .cholesky()
            .map(|c| c.solve(&rhs))
            .or_else(|| gram.clone().lu().solve(&rhs))
            .ok_or(Error::Singular { what: "G R^-1 G'" })?;
        let multiplier = &half_multiplier * 2.0;
        let controller = &rinv_m + &rinv_gt * &half_multiplier;
        let stopper = self.stopper_best_response(mu0, &controller)?;

        let horizon = self.sys.horizon();
        let achieved = self.sys.state_row(horizon) * mu0
            + self.sys.controller_row(horizon) * &controller
            + self.sys.stopper_row(horizon) * &stopper;
        let terminal_residual = (mu_n - achieved).norm();
        let mut warning = None;
        if gram_condition > GRAM_COND_WARN {
            warning = Some(format!("G R^-1 G' is ill-conditioned (condition number {gram_condition:.3e})"));
        }
        if terminal_residual > 1e-8 * (1.0 + mu_n.norm()) {
            let msg = format!("terminal mean residual {terminal_residual:.3e} exceeds tolerance");
            warning = Some(match warning {
                Some(w) => format!("{w}; {msg}"),
                None => msg,
            });
        }
        Ok(ConstrainedMeanSolution {
            value: self.cost(mu0, &controller, &stopper),
            controller,
            stopper,
            multiplier,
            reduced_hessian,
            reduced_linear,
            terminal_residual,
            gram_condition,
            warning,
        })
    }

    fn check_inputs(&self, mu0: &DVector<f64>, u: Option<&DVector<f64>>, v: Option<&DVector<f64>>) -> Result<()> {
        check_len("initial mean", mu0.len(), self.sys.n_state())?;
        if let Some(u) = u {
            check_len("controller mean input", u.len(), self.sys.horizon() * self.sys.n_controller())?;
        }
        if let Some(v) = v {
            check_len("stopper mean input", v.len(), self.sys.horizon() * self.sys.n_stopper())?;
        }
        Ok(())
    }
}

/// `rank [g | target] == rank g` with the same relative threshold on both.
pub fn rank_condition_holds(g: &DMatrix<f64>, target: &DVector<f64>, rank_tol: f64) -> bool {
    let base = numerical_rank(&singular_values(g), rank_tol);
    let mut aug = DMatrix::zeros(g.nrows(), g.ncols() + 1);
    aug.columns_mut(0, g.ncols()).copy_from(g);
    aug.column_mut(g.ncols()).copy_from(target);
    numerical_rank(&singular_values(&aug), rank_tol) == base
}
