//! Log-barrier path following for
//!
//! ```text
//! minimize    1/2 x'Hx + g'x
//! subject to  lambda_max(Z(x)) <= beta,   Z(x) = G(x) S G(x)'
//! ```
//!
//! where `G(x) = G0 + sum_i x_i u_i e_{c_i}'` is affine with rank-one
//! directions and `S` is PSD. By the Schur complement
//! `-log det(beta I - Z(x))` is the log-det barrier of an affine LMI, so it is
//! self-concordant and damped Newton needs no line search. The duality gap on
//! the central path is `n / t` with `n = rows of G`.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{max_eigenvalue, symmetrized};

/// Affine matrix map with rank-one directions and its weighted Gram matrix.
pub(crate) struct NormMap<'a> {
    pub base: DMatrix<f64>,
    /// Column i is `u_i`.
    pub dirs: DMatrix<f64>,
    pub cols: Vec<usize>,
    pub weight: &'a DMatrix<f64>,
}

struct BarrierEval {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
    /// Phase-one extras: d/ds, d2/ds2, d2/ds dx.
    s_terms: Option<(f64, f64, DVector<f64>)>,
}

impl NormMap<'_> {
    pub fn dim(&self) -> usize {
        self.cols.len()
    }

    pub fn map(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut g = self.base.clone();
        for (i, &c) in self.cols.iter().enumerate() {
            if x[i] != 0.0 {
                let mut col = g.column_mut(c);
                col.axpy(x[i], &self.dirs.column(i), 1.0);
            }
        }
        g
    }

    pub fn gram(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let g = self.map(x);
        symmetrized(&(&g * self.weight * g.transpose()))
    }

    pub fn lambda_max(&self, x: &DVector<f64>) -> f64 {
        max_eigenvalue(&self.gram(x))
    }

    /// `-log det(s I - Z(x))` with derivatives; `None` outside the domain.
    fn barrier(&self, x: &DVector<f64>, s: f64, phase_one: bool) -> Option<BarrierEval> {
        let g = self.map(x);
        let gs = &g * self.weight;
        let rows = g.nrows();
        let mut w = -symmetrized(&(&gs * g.transpose()));
        for i in 0..rows {
            w[(i, i)] += s;
        }
        let chol = w.cholesky()?;
        let value = -2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !value.is_finite() {
            return None;
        }
        let p = chol.inverse();
        let p = symmetrized(&p);

        let k = self.dim();
        let mut h = DMatrix::zeros(rows, k);
        for (i, &c) in self.cols.iter().enumerate() {
            h.column_mut(i).copy_from(&gs.column(c));
        }
        let pu = &p * &self.dirs;
        let ph = &p * &h;
        let a = h.transpose() * &pu; // a[i,j] = h_i' P u_j
        let upu = self.dirs.transpose() * &pu;
        let hph = h.transpose() * &ph;

        let grad = DVector::from_fn(k, |i, _| 2.0 * a[(i, i)]);
        let mut hess = DMatrix::zeros(k, k);
        for j in 0..k {
            for i in 0..k {
                let sc = self.weight[(self.cols[i], self.cols[j])];
                hess[(i, j)] = 2.0 * a[(j, i)] * a[(i, j)] + 2.0 * (hph[(i, j)] + sc) * upu[(i, j)];
            }
        }
        let hess = symmetrized(&hess);

        let s_terms = phase_one.then(|| {
            let pp = &p * &p;
            let ppu = &pp * &self.dirs;
            let ds = -p.trace();
            let dss = pp.trace();
            let dsx = DVector::from_fn(k, |i, _| -2.0 * h.column(i).dot(&ppu.column(i)));
            (ds, dss, dsx)
        });
        Some(BarrierEval { value, grad, hess, s_terms })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BarrierSettings {
    pub gap_tol: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub growth: f64,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        Self { gap_tol: 1e-10, newton_tol: 1e-10, max_newton: 5000, growth: 10.0 }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BarrierOutcome {
    pub x: DVector<f64>,
    pub gap: f64,
    pub newton_steps: usize,
}

fn solve_newton(hess: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = hess.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    // tiny diagonal shift for numerically indefinite systems
    let shift = 1e-14 * hess.diagonal().amax().max(1e-300);
    let mut shifted = hess.clone();
    for i in 0..shifted.nrows() {
        shifted[(i, i)] += shift;
    }
    shifted.clone().cholesky().map(|ch| ch.solve(rhs)).or_else(|| shifted.lu().solve(rhs))
}

/// Damped Newton on a self-concordant objective. `eval` returns
/// `(value, grad, hess)` or `None` outside the domain.
fn centering<F>(z: &mut DVector<f64>, settings: &BarrierSettings, steps: &mut usize, mut eval: F) -> bool
where
    F: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>, DMatrix<f64>)>,
{
    let mut current = match eval(z) {
        Some(e) => e,
        None => return false,
    };
    let mut previous = f64::INFINITY;
    loop {
        if *steps >= settings.max_newton {
            return false;
        }
        let (_, ref grad, ref hess) = current;
        let Some(dir) = solve_newton(hess, &(-grad)) else {
            return false;
        };
        let dec2 = -grad.dot(&dir);
        if !dec2.is_finite() {
            return false;
        }
        // a small decrement that stops shrinking is the rounding floor
        if dec2 <= settings.newton_tol || (dec2 < 1e-3 && dec2 >= 0.5 * previous) {
            return true;
        }
        previous = dec2;
        let dec = dec2.max(0.0).sqrt();
        let mut step = if dec > 0.25 { 1.0 / (1.0 + dec) } else { 1.0 };
        *steps += 1;
        // The damped step stays inside the Dikin ellipsoid; the halving loop only
        // guards against rounding right at the boundary.
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &*z + &dir * step;
            if let Some(e) = eval(&trial) {
                if e.0 <= current.0 + 1e-12 * current.0.abs().max(1.0) || dec <= 0.25 {
                    accepted = Some((trial, e));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, e)) => {
                *z = trial;
                current = e;
            }
            // Rounding floor reached: a stall with a small decrement is converged.
            None => return dec2 < 1e-6,
        }
    }
}

/// Minimize the quadratic subject to `lambda_max(Z(x)) <= beta` from a strictly
/// feasible `x0`.
pub(crate) fn minimize(
    hess: &DMatrix<f64>,
    lin: &DVector<f64>,
    constraint: &NormMap<'_>,
    beta: f64,
    x0: DVector<f64>,
    settings: &BarrierSettings,
) -> Option<BarrierOutcome> {
    let rows = constraint.base.nrows() as f64;
    let objective = |x: &DVector<f64>| 0.5 * x.dot(&(hess * x)) + lin.dot(x);
    let mut x = x0;
    let f0 = objective(&x);
    let mut t = (rows / (1.0 + f0.abs())).clamp(1e-8, 1e8);
    let mut steps = 0;
    loop {
        let ok = centering(&mut x, settings, &mut steps, |z| {
            let b = constraint.barrier(z, beta, false)?;
            let grad = (hess * z + lin) * t + &b.grad;
            let h = hess * t + &b.hess;
            Some((t * objective(z) + b.value, grad, h))
        });
        if !ok && steps >= settings.max_newton {
            return None;
        }
        let gap = rows / t;
        if gap <= settings.gap_tol * (1.0 + objective(&x).abs()) {
            return Some(BarrierOutcome { x, gap, newton_steps: steps });
        }
        t *= settings.growth;
    }
}

#[derive(Debug, Clone)]
pub(crate) enum PhaseOne {
    /// Strictly feasible point with `lambda_max(Z) < beta`.
    Feasible(DVector<f64>),
    /// Minimizer of `lambda_max(Z)` and the attained value.
    Minimum { x: DVector<f64>, lambda_max: f64 },
}

/// Minimize `lambda_max(Z(x))`, stopping early once `Z(x) < target I` with
/// margin. A tiny proximal term keeps directions that do not move `Z` fixed.
pub(crate) fn phase_one(
    constraint: &NormMap<'_>,
    x0: DVector<f64>,
    target: Option<f64>,
    settings: &BarrierSettings,
) -> PhaseOne {
    let k = constraint.dim();
    let rows = constraint.base.nrows() as f64;
    let start_lmax = constraint.lambda_max(&x0);
    if let Some(beta) = target {
        if start_lmax < beta * (1.0 - 1e-9) {
            return PhaseOne::Feasible(x0);
        }
    }
    let scale = start_lmax.abs().max(1e-12);
    let prox = 1e-12 * scale;
    let anchor = x0.clone();

    let mut z = DVector::zeros(k + 1);
    z.rows_mut(0, k).copy_from(&x0);
    z[k] = start_lmax + 0.1 * scale + 1e-12;
    let mut t = rows / scale;
    let mut steps = 0;
    let extract = |z: &DVector<f64>| z.rows(0, k).into_owned();

    loop {
        let ok = centering(&mut z, settings, &mut steps, |zz| {
            let x = zz.rows(0, k).into_owned();
            let s = zz[k];
            let b = constraint.barrier(&x, s, true)?;
            let (ds, dss, dsx) = b.s_terms.expect("phase one terms");
            let dx = &x - &anchor;
            let mut grad = DVector::zeros(k + 1);
            grad.rows_mut(0, k).copy_from(&(&b.grad + &dx * (t * prox)));
            grad[k] = t + ds;
            let mut h = DMatrix::zeros(k + 1, k + 1);
            h.view_mut((0, 0), (k, k)).copy_from(&b.hess);
            for i in 0..k {
                h[(i, i)] += t * prox;
                h[(i, k)] = dsx[i];
                h[(k, i)] = dsx[i];
            }
            h[(k, k)] = dss;
            let value = t * (s + 0.5 * prox * dx.norm_squared()) + b.value;
            Some((value, grad, h))
        });
        let x = extract(&z);
        let lmax = constraint.lambda_max(&x);
        if let Some(beta) = target {
            if lmax < beta * (1.0 - 1e-9) {
                return PhaseOne::Feasible(x);
            }
        }
        let gap = rows / t;
        if gap <= 1e-10 * (1.0 + z[k].abs()) || (!ok && steps >= settings.max_newton) {
            return PhaseOne::Minimum { x, lambda_max: lmax };
        }
        t *= settings.growth;
    }
}
