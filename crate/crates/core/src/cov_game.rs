//! Covariance game in feedback-gain space.
//!
//! Gains act on the auxiliary process `y_k = x_k - mu_k` (state deviation
//! with the feedback removed), so the lifted feedback deviation of the state
//! is `(I + B K + C L) Sigma_s^{1/2} z` and the covariance payoff is
//!
//! ```text
//! J(K, L) = tr(((I+BK+CL)' Q (I+BK+CL) + K'RK - L'SL) Sigma_s).
//! ```
//!
//! `K` and `L` are block diagonal with a trailing zero block column. All
//! solvers work on the free entries only and map back with the pattern
//! enforced exactly.

use nalgebra::{DMatrix, DVector};

use crate::barrier::{self, BarrierSettings, NormMap, PhaseOne};
use crate::error::{Error, Result};
use crate::linalg::{max_eigenvalue, min_eigenvalue, pd_inv_sqrt, psd_sqrt, spectral_norm, sym_eigenvalues, symmetrized};
use crate::model::{CostWeights, LiftedSystem};
use crate::EIG_TOL;

/// Per-stage feedback gains `G_0 .. G_{N-1}`, each `rows x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainProfile {
    blocks: Vec<DMatrix<f64>>,
    rows: usize,
    n: usize,
}

impl GainProfile {
    pub fn zeros(horizon: usize, rows: usize, n: usize) -> Self {
        Self { blocks: vec![DMatrix::zeros(rows, n); horizon], rows, n }
    }

    pub fn from_blocks(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = blocks.first().ok_or_else(|| Error::Invalid("gain profile needs at least one block".into()))?;
        let (rows, n) = first.shape();
        for (k, b) in blocks.iter().enumerate() {
            if b.shape() != (rows, n) {
                return Err(Error::dim("gain block", Some(k), format!("{rows}x{n}"), format!("{}x{}", b.nrows(), b.ncols())));
            }
        }
        Ok(Self { blocks, rows, n })
    }

    /// Inverse of [`GainProfile::lifted`]. Any nonzero entry off the block
    /// diagonal is rejected.
    pub fn from_lifted(m: &DMatrix<f64>, horizon: usize, rows: usize, n: usize) -> Result<Self> {
        if m.shape() != (horizon * rows, (horizon + 1) * n) {
            return Err(Error::dim(
                "lifted gain",
                None,
                format!("{}x{}", horizon * rows, (horizon + 1) * n),
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        let mut blocks = Vec::with_capacity(horizon);
        for k in 0..horizon {
            blocks.push(m.view((k * rows, k * n), (rows, n)).into_owned());
        }
        let out = Self { blocks, rows, n };
        let residual = m - out.lifted();
        if residual.amax() != 0.0 {
            return Err(Error::Invalid(format!(
                "lifted gain has off-pattern entries (max {:.3e})",
                residual.amax()
            )));
        }
        Ok(out)
    }

    pub fn horizon(&self) -> usize {
        self.blocks.len()
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn n_state(&self) -> usize {
        self.n
    }
    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }
    pub fn block(&self, k: usize) -> &DMatrix<f64> {
        &self.blocks[k]
    }

    pub fn free_count(&self) -> usize {
        self.horizon() * self.rows * self.n
    }

    pub fn lifted(&self) -> DMatrix<f64> {
        let h = self.horizon();
        let mut out = DMatrix::zeros(h * self.rows, (h + 1) * self.n);
        for (k, b) in self.blocks.iter().enumerate() {
            out.view_mut((k * self.rows, k * self.n), (self.rows, self.n)).copy_from(b);
        }
        out
    }

    /// Free entries, ordered by stage then column-major within a block.
    pub fn to_free(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.free_count());
        let per = self.rows * self.n;
        for (k, b) in self.blocks.iter().enumerate() {
            out.rows_mut(k * per, per).copy_from_slice(b.as_slice());
        }
        out
    }

    pub fn from_free(horizon: usize, rows: usize, n: usize, x: &DVector<f64>) -> Self {
        assert_eq!(x.len(), horizon * rows * n, "free vector length");
        let per = rows * n;
        let blocks = (0..horizon)
            .map(|k| DMatrix::from_column_slice(rows, n, x.rows(k * per, per).as_slice()))
            .collect();
        Self { blocks, rows, n }
    }

    /// Frobenius distance between lifted gains.
    pub fn distance(&self, other: &Self) -> f64 {
        self.blocks.iter().zip(&other.blocks).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt()
    }

    pub fn check_against(&self, sys: &LiftedSystem, rows: usize) -> Result<()> {
        if self.horizon() != sys.horizon() {
            return Err(Error::dim("gain horizon", None, sys.horizon().to_string(), self.horizon().to_string()));
        }
        if self.rows != rows || self.n != sys.n_state() {
            return Err(Error::dim("gain block", None, format!("{rows}x{}", sys.n_state()), format!("{}x{}", self.rows, self.n)));
        }
        Ok(())
    }
}

/// Lifted positions `(row, col)` of the free gain entries, in
/// [`GainProfile::to_free`] order.
fn free_positions(horizon: usize, rows: usize, n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(horizon * rows * n);
    for k in 0..horizon {
        for b in 0..n {
            for a in 0..rows {
                out.push((k * rows + a, k * n + b));
            }
        }
    }
    out
}

fn gather(m: &DMatrix<f64>, pos: &[(usize, usize)]) -> DVector<f64> {
    DVector::from_iterator(pos.len(), pos.iter().map(|&(r, c)| m[(r, c)]))
}

/// Hessian of `tr(K' F K S)`-type terms restricted to free entries:
/// `2 F[r_i, r_j] S[c_i, c_j]`.
fn free_hessian(factor: &DMatrix<f64>, left: &[(usize, usize)], right: &[(usize, usize)], sigma: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(left.len(), right.len(), |i, j| {
        let (ri, ci) = left[i];
        let (rj, cj) = right[j];
        2.0 * factor[(ri, rj)] * sigma[(ci, cj)]
    })
}

/// `Sigma_s = A Sigma_0 A' + D D'` on the lifted horizon.
#[derive(Debug, Clone)]
pub struct PriorCovariance {
    matrix: DMatrix<f64>,
}

impl PriorCovariance {
    pub fn build(sys: &LiftedSystem, sigma0: &DMatrix<f64>) -> Result<Self> {
        let n = sys.n_state();
        if sigma0.shape() != (n, n) {
            return Err(Error::dim("initial covariance", None, format!("{n}x{n}"), format!("{}x{}", sigma0.nrows(), sigma0.ncols())));
        }
        let min0 = min_eigenvalue(sigma0);
        if min0 < -EIG_TOL * sigma0.amax().max(1.0) {
            return Err(Error::NotDefinite { what: "initial covariance", required: "positive semidefinite", min_eig: min0 });
        }
        let a = sys.state_map();
        let d = sys.noise_map();
        let matrix = symmetrized(&(a * sigma0 * a.transpose() + d * d.transpose()));
        let min_eig = min_eigenvalue(&matrix);
        if min_eig < -EIG_TOL * matrix.amax().max(1.0) {
            return Err(Error::NotDefinite { what: "prior covariance", required: "positive semidefinite", min_eig });
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix)
    }
}

/// Multipliers of the structural zeros, in the half-gradient scaling: on the
/// zero pattern `Theta = -(1/2) dJ/dK`, on free entries zero.
#[derive(Debug, Clone)]
pub struct StructureMultipliers {
    pub theta: DMatrix<f64>,
    pub xi: DMatrix<f64>,
}

/// Curvature of the covariance payoff.
///
/// `convex_in_k` / `concave_in_l` are the Kronecker-factor verdicts: the
/// prior is positive definite and the gain factor is definite. When the prior
/// is singular those are false, but the payoff restricted to the free entries
/// may still be strictly convex/concave; `convex_on_free` / `concave_on_free`
/// report that and are what the solvers require.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureReport {
    pub convex_in_k: bool,
    pub concave_in_l: bool,
    pub prior_singular: bool,
    pub prior_min_eig: f64,
    pub controller_factor_min_eig: f64,
    pub stopper_factor_max_eig: f64,
    pub convex_on_free: bool,
    pub concave_on_free: bool,
    pub free_controller_min_eig: f64,
    pub free_stopper_max_eig: f64,
}

#[derive(Debug, Clone)]
pub struct StepOptions {
    /// Accepted excess of the constraint norm over one.
    pub feas_tol: f64,
    /// Bound on the reported duality gap, relative to `1 + |J|`.
    pub solver_tol: f64,
    /// Target duality gap of the barrier method, relative to `1 + |f|`.
    pub gap_tol: f64,
    pub max_newton: usize,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self { feas_tol: 1e-6, solver_tol: 1e-7, gap_tol: 1e-10, max_newton: 5000 }
    }
}

#[derive(Debug, Clone)]
pub struct ControllerStep {
    pub gain: GainProfile,
    pub constraint_norm: f64,
    /// False when the unconstrained minimizer already satisfies the constraint.
    pub active: bool,
    pub duality_gap: f64,
    pub newton_steps: usize,
}

#[derive(Debug, Clone)]
pub struct UcsgSolution {
    pub controller: GainProfile,
    pub stopper: GainProfile,
    pub multipliers: StructureMultipliers,
}

#[derive(Debug, Clone)]
pub struct FallbackSolution {
    pub controller: GainProfile,
    pub stopper: GainProfile,
    pub composite_min_eig: f64,
}

#[derive(Debug, Clone)]
pub struct JacobiOptions {
    pub epsilon: f64,
    pub max_iter: usize,
    pub initial_controller: Option<GainProfile>,
    pub initial_stopper: Option<GainProfile>,
    pub step: StepOptions,
}

impl Default for JacobiOptions {
    fn default() -> Self {
        Self { epsilon: 1e-5, max_iter: 200, initial_controller: None, initial_stopper: None, step: StepOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct JacobiIterate {
    pub controller: GainProfile,
    pub stopper: GainProfile,
    pub cost: f64,
}

/// Payoff changes of one Jacobi sweep at the old iterate.
#[derive(Debug, Clone, Copy)]
pub struct StepCheck {
    /// `J(K_i, L_{i+1}) - J(K_i, L_i)`, never negative for an exact argmax.
    pub stopper_gain: f64,
    /// `J(K_i, L_i) - J(K_{i+1}, L_i)`, only when `K_i` is feasible for `L_i`.
    pub controller_gain: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct JacobiTrace {
    /// `(K_0, L_0)` first.
    pub iterates: Vec<JacobiIterate>,
    pub eps_k: Vec<f64>,
    pub eps_l: Vec<f64>,
    pub checks: Vec<StepCheck>,
    pub converged: bool,
    pub iterations: usize,
    pub feasible: bool,
    /// Returned pair: the polished equilibrium, the last iterate, or the
    /// fallback gains when the constraint cannot be met.
    pub controller: GainProfile,
    pub stopper: GainProfile,
    pub achieved_sigma_n: DMatrix<f64>,
    pub constraint_norm: f64,
    pub min_attainable_norm: Option<f64>,
    pub fallback: Option<FallbackSolution>,
}

impl JacobiTrace {
    /// True when every recorded step improved its player's payoff up to
    /// `slack * (1 + |J|)`.
    pub fn monotone(&self, slack: f64) -> bool {
        self.checks.iter().zip(&self.iterates).all(|(c, it)| {
            let tol = slack * (1.0 + it.cost.abs());
            c.stopper_gain >= -tol && c.controller_gain.is_none_or(|g| g >= -tol)
        })
    }
}

pub struct CovGame<'a> {
    sys: &'a LiftedSystem,
    sigma_s: &'a DMatrix<f64>,
    bt_q: DMatrix<f64>,
    ct_q: DMatrix<f64>,
    controller_factor: DMatrix<f64>,
    stopper_factor: DMatrix<f64>,
    cross: DMatrix<f64>,
    r_bar: DMatrix<f64>,
    s_bar: DMatrix<f64>,
    q_bar: DMatrix<f64>,
    k_pos: Vec<(usize, usize)>,
    l_pos: Vec<(usize, usize)>,
    h_kk: DMatrix<f64>,
    h_ll: DMatrix<f64>,
    h_kl: DMatrix<f64>,
    curvature: CurvatureReport,
}

fn definite_verdict(min_eig: f64, max_abs: f64, eig_tol: f64) -> bool {
    min_eig > eig_tol * max_abs.max(1.0)
}

impl<'a> CovGame<'a> {
    pub fn new(sys: &'a LiftedSystem, weights: &'a CostWeights, prior: &'a PriorCovariance) -> Result<Self> {
        Self::with_tolerance(sys, weights, prior, EIG_TOL)
    }

    pub fn with_tolerance(sys: &'a LiftedSystem, weights: &'a CostWeights, prior: &'a PriorCovariance, eig_tol: f64) -> Result<Self> {
        weights.check_against(sys)?;
        if prior.dim() != sys.lifted_dim() {
            return Err(Error::dim("prior covariance", None, sys.lifted_dim().to_string(), prior.dim().to_string()));
        }
        let sigma_s = prior.matrix();
        let q = weights.q_bar();
        let b = sys.controller_map();
        let c = sys.stopper_map();
        let bt_q = b.transpose() * q;
        let ct_q = c.transpose() * q;
        let controller_factor = symmetrized(&(&bt_q * b + weights.r_bar()));
        let stopper_factor = symmetrized(&(&ct_q * c - weights.s_bar()));
        let cross = &bt_q * c;

        let (h, n) = (sys.horizon(), sys.n_state());
        let k_pos = free_positions(h, sys.n_controller(), n);
        let l_pos = free_positions(h, sys.n_stopper(), n);
        let h_kk = symmetrized(&free_hessian(&controller_factor, &k_pos, &k_pos, sigma_s));
        let h_ll = symmetrized(&free_hessian(&stopper_factor, &l_pos, &l_pos, sigma_s));
        let h_kl = free_hessian(&cross, &k_pos, &l_pos, sigma_s);

        let prior_eigs = sym_eigenvalues(sigma_s);
        let prior_min_eig = prior_eigs.first().copied().unwrap_or(0.0);
        let prior_max = prior_eigs.last().copied().unwrap_or(0.0);
        let prior_pd = definite_verdict(prior_min_eig, prior_max, eig_tol);
        let controller_factor_min_eig = min_eigenvalue(&controller_factor);
        let stopper_factor_max_eig = max_eigenvalue(&stopper_factor);
        let free_k = sym_eigenvalues(&h_kk);
        let free_l = sym_eigenvalues(&h_ll);
        let free_controller_min_eig = free_k[0];
        let free_stopper_max_eig = *free_l.last().expect("nonempty");
        let curvature = CurvatureReport {
            convex_in_k: prior_pd && definite_verdict(controller_factor_min_eig, controller_factor.amax(), eig_tol),
            concave_in_l: prior_pd && definite_verdict(-stopper_factor_max_eig, stopper_factor.amax(), eig_tol),
            prior_singular: !prior_pd,
            prior_min_eig,
            controller_factor_min_eig,
            stopper_factor_max_eig,
            convex_on_free: definite_verdict(free_controller_min_eig, free_k.last().unwrap().abs(), eig_tol),
            concave_on_free: definite_verdict(-free_stopper_max_eig, free_l[0].abs(), eig_tol),
            free_controller_min_eig,
            free_stopper_max_eig,
        };

        Ok(Self {
            sys,
            sigma_s,
            bt_q,
            ct_q,
            controller_factor,
            stopper_factor,
            cross,
            r_bar: weights.r_bar().clone(),
            s_bar: weights.s_bar().clone(),
            q_bar: weights.q_bar().clone(),
            k_pos,
            l_pos,
            h_kk,
            h_ll,
            h_kl,
            curvature,
        })
    }

    pub fn system(&self) -> &LiftedSystem {
        self.sys
    }

    pub fn prior(&self) -> &DMatrix<f64> {
        self.sigma_s
    }

    pub fn check_curvature(&self) -> &CurvatureReport {
        &self.curvature
    }

    fn zero_controller(&self) -> GainProfile {
        GainProfile::zeros(self.sys.horizon(), self.sys.n_controller(), self.sys.n_state())
    }

    fn zero_stopper(&self) -> GainProfile {
        GainProfile::zeros(self.sys.horizon(), self.sys.n_stopper(), self.sys.n_state())
    }

    fn controller_from_free(&self, x: &DVector<f64>) -> GainProfile {
        GainProfile::from_free(self.sys.horizon(), self.sys.n_controller(), self.sys.n_state(), x)
    }

    fn stopper_from_free(&self, x: &DVector<f64>) -> GainProfile {
        GainProfile::from_free(self.sys.horizon(), self.sys.n_stopper(), self.sys.n_state(), x)
    }

    fn check_pair(&self, k: &GainProfile, l: &GainProfile) -> Result<()> {
        k.check_against(self.sys, self.sys.n_controller())?;
        l.check_against(self.sys, self.sys.n_stopper())
    }

    /// `I + B K + C L`
    pub fn closed_loop(&self, k: &GainProfile, l: &GainProfile) -> DMatrix<f64> {
        let mut phi = self.sys.controller_map() * k.lifted() + self.sys.stopper_map() * l.lifted();
        for i in 0..phi.nrows() {
            phi[(i, i)] += 1.0;
        }
        phi
    }

    pub fn cost(&self, k: &GainProfile, l: &GainProfile) -> f64 {
        let phi = self.closed_loop(k, l);
        let kl = k.lifted();
        let ll = l.lifted();
        let m = phi.transpose() * &self.q_bar * &phi + kl.transpose() * &self.r_bar * &kl - ll.transpose() * &self.s_bar * &ll;
        m.component_mul(self.sigma_s).sum()
    }

    /// Full gradients `(dJ/dK, dJ/dL)` with respect to every lifted entry.
    pub fn gradients(&self, k: &GainProfile, l: &GainProfile) -> (DMatrix<f64>, DMatrix<f64>) {
        let kl = k.lifted();
        let ll = l.lifted();
        let gk = (&self.bt_q + &self.controller_factor * &kl + &self.cross * &ll) * self.sigma_s * 2.0;
        let gl = (&self.ct_q + self.cross.transpose() * &kl + &self.stopper_factor * &ll) * self.sigma_s * 2.0;
        (gk, gl)
    }

    /// Free-entry gradients.
    fn free_gradients(&self, k: &GainProfile, l: &GainProfile) -> (DVector<f64>, DVector<f64>) {
        let (gk, gl) = self.gradients(k, l);
        (gather(&gk, &self.k_pos), gather(&gl, &self.l_pos))
    }

    pub fn structure_multipliers(&self, k: &GainProfile, l: &GainProfile) -> StructureMultipliers {
        let (mut gk, mut gl) = self.gradients(k, l);
        for &(r, c) in &self.k_pos {
            gk[(r, c)] = 0.0;
        }
        for &(r, c) in &self.l_pos {
            gl[(r, c)] = 0.0;
        }
        StructureMultipliers { theta: gk * -0.5, xi: gl * -0.5 }
    }

    /// Covariance of `x_k` under the feedback, `k = 0..=N`.
    pub fn state_covariances(&self, k: &GainProfile, l: &GainProfile) -> Vec<DMatrix<f64>> {
        let phi = self.closed_loop(k, l);
        let full = &phi * self.sigma_s * phi.transpose();
        let n = self.sys.n_state();
        (0..=self.sys.horizon())
            .map(|j| symmetrized(&full.view((j * n, j * n), (n, n)).into_owned()))
            .collect()
    }

    fn terminal_rows(&self, k: &GainProfile, l: &GainProfile) -> DMatrix<f64> {
        let n = self.sys.n_state();
        let h = self.sys.horizon();
        let mut rows = self.sys.controller_row(h) * k.lifted() + self.sys.stopper_row(h) * l.lifted();
        for i in 0..n {
            rows[(i, h * n + i)] += 1.0;
        }
        rows
    }

    pub fn terminal_cov(&self, k: &GainProfile, l: &GainProfile) -> DMatrix<f64> {
        let e = self.terminal_rows(k, l);
        symmetrized(&(&e * self.sigma_s * e.transpose()))
    }

    /// `||Sigma_N^{-1/2} E_N (I + BK + CL) Sigma_s^{1/2}||_2`
    pub fn constraint_norm(&self, k: &GainProfile, l: &GainProfile, sigma_n: &DMatrix<f64>) -> Result<f64> {
        let inv = terminal_inv_sqrt(sigma_n, self.sys.n_state())?;
        let m = inv * self.terminal_rows(k, l) * psd_sqrt(self.sigma_s);
        Ok(spectral_norm(&m))
    }

    fn require_convex(&self) -> Result<()> {
        if self.curvature.convex_on_free {
            Ok(())
        } else {
            Err(Error::Curvature { what: "controller payoff not convex in K", eig: self.curvature.free_controller_min_eig })
        }
    }

    fn require_concave(&self) -> Result<()> {
        if self.curvature.concave_on_free {
            Ok(())
        } else {
            Err(Error::Curvature { what: "stopper payoff not concave in L", eig: self.curvature.free_stopper_max_eig })
        }
    }

    /// `argmax_L J(K, L)` over structured gains.
    pub fn stopper_step(&self, k: &GainProfile) -> Result<GainProfile> {
        self.require_concave()?;
        k.check_against(self.sys, self.sys.n_controller())?;
        let (_, lin) = self.free_gradients(k, &self.zero_stopper());
        let neg = -&self.h_ll;
        let chol = neg.cholesky().ok_or(Error::Singular { what: "stopper Hessian" })?;
        Ok(self.stopper_from_free(&chol.solve(&lin)))
    }

    /// `argmin_K J(K, L)` subject to the terminal covariance bound.
    pub fn controller_step(
        &self,
        l: &GainProfile,
        sigma_n: &DMatrix<f64>,
        warm: Option<&GainProfile>,
        opts: &StepOptions,
    ) -> Result<ControllerStep> {
        self.require_convex()?;
        l.check_against(self.sys, self.sys.n_stopper())?;
        let inv = terminal_inv_sqrt(sigma_n, self.sys.n_state())?;
        let zero = self.zero_controller();
        let (lin, _) = self.free_gradients(&zero, l);
        let chol = self.h_kk.clone().cholesky().ok_or(Error::Singular { what: "controller Hessian" })?;

        let h = self.sys.horizon();
        let b_n = self.sys.controller_row(h);
        let dirs = DMatrix::from_fn(self.sys.n_state(), self.k_pos.len(), |i, j| {
            let r = self.k_pos[j].0;
            (inv.row(i) * b_n.column(r))[(0, 0)]
        });
        let map = NormMap {
            base: &inv * self.terminal_rows(&zero, l),
            dirs,
            cols: self.k_pos.iter().map(|&(_, c)| c).collect(),
            weight: self.sigma_s,
        };
        let settings = BarrierSettings { gap_tol: opts.gap_tol, max_newton: opts.max_newton, ..BarrierSettings::default() };

        let unconstrained = chol.solve(&(-&lin));
        let lmax = map.lambda_max(&unconstrained);
        if lmax <= 1.0 {
            return Ok(ControllerStep {
                gain: self.controller_from_free(&unconstrained),
                constraint_norm: lmax.max(0.0).sqrt(),
                active: false,
                duality_gap: 0.0,
                newton_steps: 0,
            });
        }

        let start = match warm {
            Some(w) => {
                w.check_against(self.sys, self.sys.n_controller())?;
                w.to_free()
            }
            None => DVector::zeros(self.k_pos.len()),
        };
        let (start, beta) = match barrier::phase_one(&map, start, Some(1.0), &settings) {
            PhaseOne::Feasible(x) => (x, 1.0),
            PhaseOne::Minimum { x, lambda_max } => {
                let relaxed = (1.0 + opts.feas_tol).powi(2);
                if lambda_max > relaxed {
                    return Err(Error::InfeasibleCovariance { min_norm: lambda_max.max(0.0).sqrt() });
                }
                (x, relaxed)
            }
        };
        let out = barrier::minimize(&self.h_kk, &lin, &map, beta, start, &settings)
            .ok_or_else(|| Error::Invalid("controller step did not converge".into()))?;
        let gain = self.controller_from_free(&out.x);
        let value = self.cost(&gain, l);
        if out.gap > opts.solver_tol * (1.0 + value.abs()) {
            return Err(Error::Invalid(format!("controller step duality gap {:.3e} above tolerance", out.gap)));
        }
        Ok(ControllerStep {
            constraint_norm: map.lambda_max(&out.x).max(0.0).sqrt(),
            gain,
            active: true,
            duality_gap: out.gap,
            newton_steps: out.newton_steps,
        })
    }

    /// Stationary point of the unconstrained game from the joint first-order
    /// system over all free entries.
    pub fn solve_ucsg_stationary(&self) -> Result<UcsgSolution> {
        self.require_convex()?;
        self.require_concave()?;
        let (pk, pl) = (self.k_pos.len(), self.l_pos.len());
        let mut joint = DMatrix::zeros(pk + pl, pk + pl);
        joint.view_mut((0, 0), (pk, pk)).copy_from(&self.h_kk);
        joint.view_mut((0, pk), (pk, pl)).copy_from(&self.h_kl);
        joint.view_mut((pk, 0), (pl, pk)).copy_from(&self.h_kl.transpose());
        joint.view_mut((pk, pk), (pl, pl)).copy_from(&self.h_ll);
        let (gk, gl) = self.free_gradients(&self.zero_controller(), &self.zero_stopper());
        let mut rhs = DVector::zeros(pk + pl);
        rhs.rows_mut(0, pk).copy_from(&(-gk));
        rhs.rows_mut(pk, pl).copy_from(&(-gl));
        let sol = joint.clone().lu().solve(&rhs).ok_or(Error::Singular { what: "covariance stationarity system" })?;
        if !sol.iter().all(|v| v.is_finite()) {
            return Err(Error::Singular { what: "covariance stationarity system" });
        }
        let controller = self.controller_from_free(&sol.rows(0, pk).into_owned());
        let stopper = self.stopper_from_free(&sol.rows(pk, pl).into_owned());
        let multipliers = self.structure_multipliers(&controller, &stopper);
        Ok(UcsgSolution { controller, stopper, multipliers })
    }

    /// Minimize `K -> J(K, L(K))` where `L(K)` is the stopper's best response.
    pub fn fallback_solve(&self) -> Result<FallbackSolution> {
        self.require_concave()?;
        let neg = (-&self.h_ll).cholesky().ok_or(Error::Singular { what: "stopper Hessian" })?;
        // L(x) = y0 + T x
        let (gk, gl) = self.free_gradients(&self.zero_controller(), &self.zero_stopper());
        let y0 = neg.solve(&gl);
        let t = neg.solve(&self.h_kl.transpose());
        let composite = symmetrized(&(&self.h_kk + &self.h_kl * &t));
        let composite_min_eig = min_eigenvalue(&composite);
        let scale = composite.amax().max(1.0);
        if composite_min_eig <= EIG_TOL * scale {
            return Err(Error::Curvature { what: "composed controller payoff not convex", eig: composite_min_eig });
        }
        let grad0 = gk + &self.h_kl * &y0;
        let x = composite.cholesky().ok_or(Error::Singular { what: "composed Hessian" })?.solve(&(-grad0));
        let y = y0 + t * &x;
        Ok(FallbackSolution {
            controller: self.controller_from_free(&x),
            stopper: self.stopper_from_free(&y),
            composite_min_eig,
        })
    }

    /// Jacobi iteration: both players respond simultaneously to the previous
    /// iterate until both gain updates fall below `epsilon`.
    pub fn jacobi_solve(&self, sigma_n: &DMatrix<f64>, opts: &JacobiOptions) -> Result<JacobiTrace> {
        self.require_convex()?;
        self.require_concave()?;
        terminal_inv_sqrt(sigma_n, self.sys.n_state())?;
        let mut k = opts.initial_controller.clone().unwrap_or_else(|| self.zero_controller());
        let mut l = opts.initial_stopper.clone().unwrap_or_else(|| self.zero_stopper());
        self.check_pair(&k, &l)?;
        let step = &opts.step;

        let mut iterates = vec![JacobiIterate { cost: self.cost(&k, &l), controller: k.clone(), stopper: l.clone() }];
        let (mut eps_k, mut eps_l, mut checks) = (Vec::new(), Vec::new(), Vec::new());
        let mut converged = false;
        let mut infeasible = None;

        for _ in 0..opts.max_iter {
            let l_next = self.stopper_step(&k)?;
            let k_step = match self.controller_step(&l, sigma_n, Some(&k), step) {
                Ok(s) => s,
                Err(Error::InfeasibleCovariance { min_norm }) => {
                    infeasible = Some(min_norm);
                    break;
                }
                Err(e) => return Err(e),
            };
            let k_next = k_step.gain;
            let here = self.cost(&k, &l);
            let k_feasible = self.constraint_norm(&k, &l, sigma_n)? <= 1.0;
            checks.push(StepCheck {
                stopper_gain: self.cost(&k, &l_next) - here,
                controller_gain: k_feasible.then(|| here - self.cost(&k_next, &l)),
            });
            eps_k.push(k_next.distance(&k));
            eps_l.push(l_next.distance(&l));
            k = k_next;
            l = l_next;
            iterates.push(JacobiIterate { cost: self.cost(&k, &l), controller: k.clone(), stopper: l.clone() });
            if eps_k.last().unwrap() <= &opts.epsilon && eps_l.last().unwrap() <= &opts.epsilon {
                converged = true;
                break;
            }
        }

        if let Some(min_norm) = infeasible {
            let fb = self.fallback_solve()?;
            return Ok(JacobiTrace {
                iterations: eps_k.len(),
                achieved_sigma_n: self.terminal_cov(&fb.controller, &fb.stopper),
                constraint_norm: self.constraint_norm(&fb.controller, &fb.stopper, sigma_n)?,
                controller: fb.controller.clone(),
                stopper: fb.stopper.clone(),
                fallback: Some(fb),
                min_attainable_norm: Some(min_norm),
                iterates,
                eps_k,
                eps_l,
                checks,
                converged: false,
                feasible: false,
            });
        }

        if converged {
            // The last K answered the previous L; answer the final L so the
            // returned pair meets the bound exactly.
            k = self.controller_step(&l, sigma_n, Some(&k), step)?.gain;
        }
        let constraint_norm = self.constraint_norm(&k, &l, sigma_n)?;
        Ok(JacobiTrace {
            iterations: eps_k.len(),
            achieved_sigma_n: self.terminal_cov(&k, &l),
            feasible: constraint_norm <= 1.0 + step.feas_tol,
            constraint_norm,
            controller: k,
            stopper: l,
            min_attainable_norm: None,
            fallback: None,
            iterates,
            eps_k,
            eps_l,
            checks,
            converged,
        })
    }
}

fn terminal_inv_sqrt(sigma_n: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    if sigma_n.shape() != (n, n) {
        return Err(Error::dim("terminal covariance", None, format!("{n}x{n}"), format!("{}x{}", sigma_n.nrows(), sigma_n.ncols())));
    }
    pd_inv_sqrt(sigma_n).ok_or_else(|| Error::NotDefinite {
        what: "terminal covariance",
        required: "positive definite",
        min_eig: min_eigenvalue(sigma_n),
    })
}
