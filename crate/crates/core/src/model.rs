//! Stage dynamics, horizon lifting, weights and the payoff decomposition.
//!
//! The lifted state stacks `x_0, ..., x_N` ((N+1) blocks of size n), so block
//! row 0 of the state map is the identity and block row 0 of every input map
//! is zero:
//!
//! ```text
//! X = A x0 + B U + C V + D W
//! ```

use nalgebra::{DMatrix, DVector};

use crate::cov_game::{GainProfile, PriorCovariance};
use crate::error::{Error, Result};
use crate::linalg::{block_diag, min_eigenvalue, relative_asymmetry, symmetrized, trace_of_product};
use crate::EIG_TOL;

/// Per-stage matrices of `x_{k+1} = A_k x_k + B_k u_k + C_k v_k + D_k w_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSystem {
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    c: Vec<DMatrix<f64>>,
    d: Vec<DMatrix<f64>>,
}

impl StageSystem {
    /// Time-varying system; all four sequences must have the horizon length.
    pub fn new(
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        c: Vec<DMatrix<f64>>,
        d: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let horizon = a.len();
        if horizon == 0 {
            return Err(Error::Invalid("horizon must be at least 1".into()));
        }
        for (name, seq) in [("B", &b), ("C", &c), ("D", &d)] {
            if seq.len() != horizon {
                return Err(Error::dim(format!("{name} sequence length"), None, horizon, seq.len()));
            }
        }
        let n = a[0].nrows();
        let (m, l, r) = (b[0].ncols(), c[0].ncols(), d[0].ncols());
        if n == 0 || m == 0 || l == 0 || r == 0 {
            return Err(Error::Invalid(format!(
                "all dimensions must be positive (n={n}, m={m}, l={l}, r={r})"
            )));
        }
        for k in 0..horizon {
            let checks = [
                ("A", a[k].shape(), (n, n)),
                ("B", b[k].shape(), (n, m)),
                ("C", c[k].shape(), (n, l)),
                ("D", d[k].shape(), (n, r)),
            ];
            for (name, found, expected) in checks {
                if found != expected {
                    return Err(Error::dim(
                        name,
                        Some(k),
                        format!("{}x{}", expected.0, expected.1),
                        format!("{}x{}", found.0, found.1),
                    ));
                }
            }
        }
        Ok(Self { a, b, c, d })
    }

    pub fn time_invariant(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        horizon: usize,
    ) -> Result<Self> {
        Self::new(vec![a; horizon], vec![b; horizon], vec![c; horizon], vec![d; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.a.len()
    }
    pub fn n_state(&self) -> usize {
        self.a[0].nrows()
    }
    pub fn n_controller(&self) -> usize {
        self.b[0].ncols()
    }
    pub fn n_stopper(&self) -> usize {
        self.c[0].ncols()
    }
    pub fn n_noise(&self) -> usize {
        self.d[0].ncols()
    }
    pub fn a(&self, k: usize) -> &DMatrix<f64> {
        &self.a[k]
    }
    pub fn b(&self, k: usize) -> &DMatrix<f64> {
        &self.b[k]
    }
    pub fn c(&self, k: usize) -> &DMatrix<f64> {
        &self.c[k]
    }
    pub fn d(&self, k: usize) -> &DMatrix<f64> {
        &self.d[k]
    }

    /// One step of the stage recursion.
    pub fn step(
        &self,
        k: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
        v: &DVector<f64>,
        w: &DVector<f64>,
    ) -> DVector<f64> {
        &self.a[k] * x + &self.b[k] * u + &self.c[k] * v + &self.d[k] * w
    }

    /// Replace every noise matrix; used by scenario variants that only change
    /// the noise intensity.
    pub fn with_noise(&self, d: Vec<DMatrix<f64>>) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), self.c.clone(), d)
    }
}

/// Horizon-length maps from `(x0, U, V, W)` to the stacked state.
#[derive(Debug, Clone)]
pub struct LiftedSystem {
    horizon: usize,
    n: usize,
    m: usize,
    l: usize,
    r: usize,
    state_map: DMatrix<f64>,
    controller_map: DMatrix<f64>,
    stopper_map: DMatrix<f64>,
    noise_map: DMatrix<f64>,
}

/// Causal lifting of the stage recursion.
pub fn lift(sys: &StageSystem) -> LiftedSystem {
    let (horizon, n) = (sys.horizon(), sys.n_state());
    let (m, l, r) = (sys.n_controller(), sys.n_stopper(), sys.n_noise());
    let rows = (horizon + 1) * n;
    let mut state_map = DMatrix::zeros(rows, n);
    let mut controller_map = DMatrix::zeros(rows, horizon * m);
    let mut stopper_map = DMatrix::zeros(rows, horizon * l);
    let mut noise_map = DMatrix::zeros(rows, horizon * r);
    state_map.view_mut((0, 0), (n, n)).fill_with_identity();

    // block row k+1 = A_k * (block row k) + [input block at column k]
    for k in 0..horizon {
        let a = sys.a(k);
        let next = a * state_map.rows(k * n, n);
        state_map.rows_mut((k + 1) * n, n).copy_from(&next);
        for (map, input, width) in [
            (&mut controller_map, sys.b(k), m),
            (&mut stopper_map, sys.c(k), l),
            (&mut noise_map, sys.d(k), r),
        ] {
            let mut next = a * map.rows(k * n, n);
            next.view_mut((0, k * width), (n, width)).copy_from(input);
            map.rows_mut((k + 1) * n, n).copy_from(&next);
        }
    }

    LiftedSystem {
        horizon,
        n,
        m,
        l,
        r,
        state_map,
        controller_map,
        stopper_map,
        noise_map,
    }
}

impl LiftedSystem {
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn n_state(&self) -> usize {
        self.n
    }
    pub fn n_controller(&self) -> usize {
        self.m
    }
    pub fn n_stopper(&self) -> usize {
        self.l
    }
    pub fn n_noise(&self) -> usize {
        self.r
    }
    /// `(N+1) n`
    pub fn lifted_dim(&self) -> usize {
        (self.horizon + 1) * self.n
    }

    pub fn state_map(&self) -> &DMatrix<f64> {
        &self.state_map
    }
    pub fn controller_map(&self) -> &DMatrix<f64> {
        &self.controller_map
    }
    pub fn stopper_map(&self) -> &DMatrix<f64> {
        &self.stopper_map
    }
    pub fn noise_map(&self) -> &DMatrix<f64> {
        &self.noise_map
    }

    /// `E_k = [0, .., I_n, .., 0]` selecting block k of the stacked state.
    pub fn selector(&self, k: usize) -> DMatrix<f64> {
        assert!(k <= self.horizon, "selector index {k} beyond horizon {}", self.horizon);
        let mut e = DMatrix::zeros(self.n, self.lifted_dim());
        e.view_mut((0, k * self.n), (self.n, self.n)).fill_with_identity();
        e
    }
    pub fn initial_selector(&self) -> DMatrix<f64> {
        self.selector(0)
    }
    pub fn terminal_selector(&self) -> DMatrix<f64> {
        self.selector(self.horizon)
    }

    fn block_row(&self, map: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
        map.rows(k * self.n, self.n).into_owned()
    }
    /// `E_k A`
    pub fn state_row(&self, k: usize) -> DMatrix<f64> {
        self.block_row(&self.state_map, k)
    }
    /// `E_k B`
    pub fn controller_row(&self, k: usize) -> DMatrix<f64> {
        self.block_row(&self.controller_map, k)
    }
    /// `E_k C`
    pub fn stopper_row(&self, k: usize) -> DMatrix<f64> {
        self.block_row(&self.stopper_map, k)
    }
    /// `E_k D`
    pub fn noise_row(&self, k: usize) -> DMatrix<f64> {
        self.block_row(&self.noise_map, k)
    }

    /// `A x0 + B U + C V + D W`
    pub fn propagate(
        &self,
        x0: &DVector<f64>,
        u: &DVector<f64>,
        v: &DVector<f64>,
        w: &DVector<f64>,
    ) -> DVector<f64> {
        &self.state_map * x0 + &self.controller_map * u + &self.stopper_map * v + &self.noise_map * w
    }

    /// Split a stacked state into its per-step blocks.
    pub fn unstack(&self, stacked: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..=self.horizon)
            .map(|k| stacked.rows(k * self.n, self.n).into_owned())
            .collect()
    }
}

/// Stage and lifted quadratic weights.
#[derive(Debug, Clone)]
pub struct CostWeights {
    stage_q: Vec<DMatrix<f64>>,
    stage_r: Vec<DMatrix<f64>>,
    stage_s: Vec<DMatrix<f64>>,
    q_bar: DMatrix<f64>,
    r_bar: DMatrix<f64>,
    s_bar: DMatrix<f64>,
}

/// Validate stage weights and build `blkdiag(Q_0..Q_{N-1}, 0)`,
/// `blkdiag(R_0..R_{N-1})`, `blkdiag(S_0..S_{N-1})`.
///
/// `q` may hold N or N+1 entries; the terminal block is zero either way.
pub fn lift_weights(
    q: &[DMatrix<f64>],
    r: &[DMatrix<f64>],
    s: &[DMatrix<f64>],
    eig_tol: f64,
) -> Result<CostWeights> {
    let horizon = r.len();
    if horizon == 0 {
        return Err(Error::Invalid("weights need at least one stage".into()));
    }
    if s.len() != horizon {
        return Err(Error::dim("S sequence length", None, horizon, s.len()));
    }
    if q.len() != horizon && q.len() != horizon + 1 {
        return Err(Error::dim("Q sequence length", None, format!("{horizon} or {}", horizon + 1), q.len()));
    }
    let n = q[0].nrows();
    let (m, l) = (r[0].nrows(), s[0].nrows());

    let mut stage_q = Vec::with_capacity(horizon + 1);
    for (k, qk) in q.iter().take(horizon).enumerate() {
        check_square(qk, "Q", k, n)?;
        check_symmetric(qk, "Q")?;
        let e = min_eigenvalue(qk);
        if e < -eig_tol {
            return Err(Error::Definiteness { what: "Q", stage: k, required: "positive semidefinite", min_eig: e });
        }
        stage_q.push(symmetrized(qk));
    }
    stage_q.push(DMatrix::zeros(n, n));

    let definite = |mats: &[DMatrix<f64>], name: &'static str, dim: usize| -> Result<Vec<DMatrix<f64>>> {
        mats.iter()
            .enumerate()
            .map(|(k, mk)| {
                check_square(mk, name, k, dim)?;
                check_symmetric(mk, name)?;
                let e = min_eigenvalue(mk);
                if e <= eig_tol {
                    return Err(Error::Definiteness { what: name, stage: k, required: "positive definite", min_eig: e });
                }
                Ok(symmetrized(mk))
            })
            .collect()
    };
    let stage_r = definite(r, "R", m)?;
    let stage_s = definite(s, "S", l)?;

    Ok(CostWeights {
        q_bar: block_diag(&stage_q),
        r_bar: block_diag(&stage_r),
        s_bar: block_diag(&stage_s),
        stage_q,
        stage_r,
        stage_s,
    })
}

fn check_square(m: &DMatrix<f64>, name: &'static str, k: usize, dim: usize) -> Result<()> {
    if m.shape() != (dim, dim) {
        return Err(Error::dim(name, Some(k), format!("{dim}x{dim}"), format!("{}x{}", m.nrows(), m.ncols())));
    }
    Ok(())
}

fn check_symmetric(m: &DMatrix<f64>, name: &'static str) -> Result<()> {
    let asym = relative_asymmetry(m);
    if asym > 1e-12 {
        return Err(Error::NotSymmetric { what: name, asymmetry: asym });
    }
    Ok(())
}

impl CostWeights {
    /// Uniform weights over a horizon.
    pub fn time_invariant(q: DMatrix<f64>, r: DMatrix<f64>, s: DMatrix<f64>, horizon: usize) -> Result<Self> {
        lift_weights(&vec![q; horizon], &vec![r; horizon], &vec![s; horizon], EIG_TOL)
    }
    pub fn horizon(&self) -> usize {
        self.stage_r.len()
    }
    /// `Q_k` for `k = 0..=N` (the last one is zero).
    pub fn q(&self, k: usize) -> &DMatrix<f64> {
        &self.stage_q[k]
    }
    pub fn r(&self, k: usize) -> &DMatrix<f64> {
        &self.stage_r[k]
    }
    pub fn s(&self, k: usize) -> &DMatrix<f64> {
        &self.stage_s[k]
    }
    pub fn q_bar(&self) -> &DMatrix<f64> {
        &self.q_bar
    }
    pub fn r_bar(&self) -> &DMatrix<f64> {
        &self.r_bar
    }
    pub fn s_bar(&self) -> &DMatrix<f64> {
        &self.s_bar
    }

    pub(crate) fn check_against(&self, sys: &LiftedSystem) -> Result<()> {
        if self.horizon() != sys.horizon() {
            return Err(Error::dim("weights horizon", None, sys.horizon(), self.horizon()));
        }
        let expect = [
            ("Q", self.stage_q[0].nrows(), sys.n_state()),
            ("R", self.stage_r[0].nrows(), sys.n_controller()),
            ("S", self.stage_s[0].nrows(), sys.n_stopper()),
        ];
        for (name, found, want) in expect {
            if found != want {
                return Err(Error::dim(format!("{name} weight size"), None, want, found));
            }
        }
        Ok(())
    }
}

/// Initial distribution and terminal target.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBoundary {
    mu0: DVector<f64>,
    sigma0: DMatrix<f64>,
    mu_n: DVector<f64>,
    sigma_n: DMatrix<f64>,
}

impl GaussianBoundary {
    pub fn new(mu0: DVector<f64>, sigma0: DMatrix<f64>, mu_n: DVector<f64>, sigma_n: DMatrix<f64>) -> Result<Self> {
        let n = mu0.len();
        if mu_n.len() != n {
            return Err(Error::dim("terminal mean", None, n, mu_n.len()));
        }
        for (name, m) in [("initial covariance", &sigma0), ("terminal covariance", &sigma_n)] {
            if m.shape() != (n, n) {
                return Err(Error::dim(name, None, format!("{n}x{n}"), format!("{}x{}", m.nrows(), m.ncols())));
            }
        }
        let asym = relative_asymmetry(&sigma0);
        if asym > 1e-12 {
            return Err(Error::NotSymmetric { what: "initial covariance", asymmetry: asym });
        }
        let asym = relative_asymmetry(&sigma_n);
        if asym > 1e-12 {
            return Err(Error::NotSymmetric { what: "terminal covariance", asymmetry: asym });
        }
        let e = min_eigenvalue(&sigma0);
        if e < -EIG_TOL {
            return Err(Error::NotDefinite { what: "initial covariance", required: "positive semidefinite", min_eig: e });
        }
        Ok(Self {
            mu0,
            sigma0: symmetrized(&sigma0),
            mu_n,
            sigma_n: symmetrized(&sigma_n),
        })
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }
    pub fn mu0(&self) -> &DVector<f64> {
        &self.mu0
    }
    pub fn sigma0(&self) -> &DMatrix<f64> {
        &self.sigma0
    }
    pub fn mu_n(&self) -> &DVector<f64> {
        &self.mu_n
    }
    pub fn sigma_n(&self) -> &DMatrix<f64> {
        &self.sigma_n
    }
}

/// Stacked mean states for given open-loop mean inputs.
#[derive(Debug, Clone)]
pub struct MeanTrajectory {
    pub states: DVector<f64>,
    pub controller: DVector<f64>,
    pub stopper: DVector<f64>,
    n: usize,
}

impl MeanTrajectory {
    pub fn new(sys: &LiftedSystem, mu0: &DVector<f64>, controller: DVector<f64>, stopper: DVector<f64>) -> Result<Self> {
        check_len("initial mean", mu0.len(), sys.n_state())?;
        check_len("controller mean input", controller.len(), sys.horizon() * sys.n_controller())?;
        check_len("stopper mean input", stopper.len(), sys.horizon() * sys.n_stopper())?;
        let states = sys.state_map() * mu0 + sys.controller_map() * &controller + sys.stopper_map() * &stopper;
        Ok(Self { states, controller, stopper, n: sys.n_state() })
    }

    pub fn state(&self, k: usize) -> DVector<f64> {
        self.states.rows(k * self.n, self.n).into_owned()
    }

    pub fn terminal(&self) -> DVector<f64> {
        let steps = self.states.len() / self.n;
        self.state(steps - 1)
    }
}

pub(crate) fn check_len(what: &str, found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::dim(what, None, expected, found));
    }
    Ok(())
}

/// `J_mu(U, V) = X'QX + U'RU - V'SV` along the mean trajectory.
pub fn mean_cost(sys: &LiftedSystem, w: &CostWeights, mu0: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let x = sys.state_map() * mu0 + sys.controller_map() * u + sys.stopper_map() * v;
    x.dot(&(w.q_bar() * &x)) + u.dot(&(w.r_bar() * u)) - v.dot(&(w.s_bar() * v))
}

/// Mean part, covariance part and total of the expected payoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Payoff {
    pub total: f64,
    pub mean: f64,
    pub covariance: f64,
}

/// Expected payoff of the policy `u = U + K y`, `v = V + L y`.
///
/// `total` is computed from the full second moments of `(X, U, V)`
/// independently of the two parts, so `total == mean + covariance` is a real
/// check of the mean/covariance separation.
#[allow(clippy::too_many_arguments)]
pub fn payoff(
    sys: &LiftedSystem,
    w: &CostWeights,
    boundary: &GaussianBoundary,
    ubar: &DVector<f64>,
    vbar: &DVector<f64>,
    k: &GainProfile,
    l: &GainProfile,
) -> Result<Payoff> {
    w.check_against(sys)?;
    check_len("initial mean", boundary.dim(), sys.n_state())?;
    k.check_against(sys, sys.n_controller())?;
    l.check_against(sys, sys.n_stopper())?;
    let traj = MeanTrajectory::new(sys, boundary.mu0(), ubar.clone(), vbar.clone())?;
    let prior = PriorCovariance::build(sys, boundary.sigma0())?;
    let sigma_s = prior.matrix();

    let kl = k.lifted();
    let ll = l.lifted();
    let mut closed = sys.controller_map() * &kl + sys.stopper_map() * &ll;
    for i in 0..closed.nrows() {
        closed[(i, i)] += 1.0;
    }

    let mean = mean_cost(sys, w, boundary.mu0(), ubar, vbar);
    let x_cov = &closed * sigma_s * closed.transpose();
    let u_cov = &kl * sigma_s * kl.transpose();
    let v_cov = &ll * sigma_s * ll.transpose();
    let covariance =
        trace_of_product(w.q_bar(), &x_cov) + trace_of_product(w.r_bar(), &u_cov) - trace_of_product(w.s_bar(), &v_cov);

    let x_second = &x_cov + &traj.states * traj.states.transpose();
    let u_second = &u_cov + ubar * ubar.transpose();
    let v_second = &v_cov + vbar * vbar.transpose();
    let total = trace_of_product(w.q_bar(), &x_second) + trace_of_product(w.r_bar(), &u_second)
        - trace_of_product(w.s_bar(), &v_second);

    Ok(Payoff { total, mean, covariance })
}
