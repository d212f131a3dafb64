//! Closed-loop rollouts and empirical moments.
//!
//! Trajectory `i` draws from a ChaCha8 generator seeded with `seed` on stream
//! `i`, so a batch is bit-identical for a given seed regardless of how rayon
//! schedules the work.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::cov_game::GainProfile;
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, psd_factor, symmetrized};
use crate::model::{check_len, CostWeights, GaussianBoundary, StageSystem};
use crate::EIG_TOL;

/// Name of the generator, recorded in output metadata.
pub const RNG_NAME: &str = "ChaCha8";

/// Sampled trajectories stored flat, trajectory-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub samples: usize,
    pub seed: u64,
    horizon: usize,
    n: usize,
    m: usize,
    l: usize,
    states: Vec<f64>,
    controls_u: Vec<f64>,
    controls_v: Vec<f64>,
    aux_y: Vec<f64>,
}

impl RolloutBatch {
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn n_state(&self) -> usize {
        self.n
    }

    pub fn state(&self, i: usize, k: usize) -> &[f64] {
        let at = (i * (self.horizon + 1) + k) * self.n;
        &self.states[at..at + self.n]
    }
    pub fn aux(&self, i: usize, k: usize) -> &[f64] {
        let at = (i * (self.horizon + 1) + k) * self.n;
        &self.aux_y[at..at + self.n]
    }
    pub fn controller(&self, i: usize, k: usize) -> &[f64] {
        let at = (i * self.horizon + k) * self.m;
        &self.controls_u[at..at + self.m]
    }
    pub fn stopper(&self, i: usize, k: usize) -> &[f64] {
        let at = (i * self.horizon + k) * self.l;
        &self.controls_v[at..at + self.l]
    }
}

fn gaussian(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| StandardNormal.sample(rng))
}

/// Roll out `x_{k+1} = A x + B u + C v + D w` under `u = U_k + K_k y_k`,
/// `v = V_k + L_k y_k`, with `y_0 = x_0 - mu_0` and `y_{k+1} = A y + D w`.
#[allow(clippy::too_many_arguments)]
pub fn rollout(
    sys: &StageSystem,
    boundary: &GaussianBoundary,
    ubar: &DVector<f64>,
    vbar: &DVector<f64>,
    k: &GainProfile,
    l: &GainProfile,
    samples: usize,
    seed: u64,
) -> Result<RolloutBatch> {
    if samples == 0 {
        return Err(Error::Invalid("rollout needs at least one sample".into()));
    }
    let (h, n, m, ls, r) = (sys.horizon(), sys.n_state(), sys.n_controller(), sys.n_stopper(), sys.n_noise());
    check_len("initial mean", boundary.dim(), n)?;
    check_len("controller mean input", ubar.len(), h * m)?;
    check_len("stopper mean input", vbar.len(), h * ls)?;
    for (g, rows, what) in [(k, m, "controller gain"), (l, ls, "stopper gain")] {
        if g.horizon() != h || g.rows() != rows || g.n_state() != n {
            return Err(Error::dim(what, None, format!("{h} blocks of {rows}x{n}"), format!("{} blocks of {}x{}", g.horizon(), g.rows(), g.n_state())));
        }
    }
    let factor = psd_factor(boundary.sigma0(), EIG_TOL).ok_or(Error::NotDefinite {
        what: "initial covariance",
        required: "positive semidefinite",
        min_eig: min_eigenvalue(boundary.sigma0()),
    })?;
    let mu0 = boundary.mu0();

    let mut batch = RolloutBatch {
        samples,
        seed,
        horizon: h,
        n,
        m,
        l: ls,
        states: vec![0.0; samples * (h + 1) * n],
        controls_u: vec![0.0; samples * h * m],
        controls_v: vec![0.0; samples * h * ls],
        aux_y: vec![0.0; samples * (h + 1) * n],
    };
    batch
        .states
        .par_chunks_mut((h + 1) * n)
        .zip(batch.aux_y.par_chunks_mut((h + 1) * n))
        .zip(batch.controls_u.par_chunks_mut(h * m))
        .zip(batch.controls_v.par_chunks_mut(h * ls))
        .enumerate()
        .for_each(|(i, (((xs, ys), us), vs))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut x = mu0 + &factor * gaussian(&mut rng, factor.ncols());
            let mut y = &x - mu0;
            xs[..n].copy_from_slice(x.as_slice());
            ys[..n].copy_from_slice(y.as_slice());
            for j in 0..h {
                let u = ubar.rows(j * m, m) + k.block(j) * &y;
                let v = vbar.rows(j * ls, ls) + l.block(j) * &y;
                let w = gaussian(&mut rng, r);
                let dw = sys.d(j) * &w;
                x = sys.a(j) * &x + sys.b(j) * &u + sys.c(j) * &v + &dw;
                y = sys.a(j) * &y + dw;
                us[j * m..(j + 1) * m].copy_from_slice(u.as_slice());
                vs[j * ls..(j + 1) * ls].copy_from_slice(v.as_slice());
                xs[(j + 1) * n..(j + 2) * n].copy_from_slice(x.as_slice());
                ys[(j + 1) * n..(j + 2) * n].copy_from_slice(y.as_slice());
            }
        });
    Ok(batch)
}

/// Per-step sample statistics of a batch.
#[derive(Debug, Clone)]
pub struct EmpiricalMoments {
    pub samples: usize,
    pub mean: Vec<DVector<f64>>,
    /// Unbiased sample covariance.
    pub cov: Vec<DMatrix<f64>>,
    pub mean_stderr: Vec<DVector<f64>>,
    /// Standard error of each covariance entry from fourth central moments.
    pub cov_stderr: Vec<DMatrix<f64>>,
    /// Sample mean of `sum x'Qx + u'Ru - v'Sv`.
    pub cost_estimate: f64,
    pub cost_stderr: f64,
}

pub fn empirical_moments(batch: &RolloutBatch, weights: &CostWeights) -> Result<EmpiricalMoments> {
    let s = batch.samples;
    if s < 2 {
        return Err(Error::Invalid("empirical moments need at least two samples".into()));
    }
    if weights.horizon() != batch.horizon {
        return Err(Error::dim("weight horizon", None, batch.horizon, weights.horizon()));
    }
    let (h, n) = (batch.horizon, batch.n);
    let sf = s as f64;
    let mut mean = Vec::with_capacity(h + 1);
    let mut cov = Vec::with_capacity(h + 1);
    let mut mean_stderr = Vec::with_capacity(h + 1);
    let mut cov_stderr = Vec::with_capacity(h + 1);

    for k in 0..=h {
        // shifted by the first sample so identical trajectories give exactly zero spread
        let shift = DVector::from_column_slice(batch.state(0, k));
        let mut mu_d = DVector::zeros(n);
        for i in 0..s {
            mu_d += DVector::from_column_slice(batch.state(i, k)) - &shift;
        }
        mu_d /= sf;
        let mu = &shift + &mu_d;
        let mut c = DMatrix::zeros(n, n);
        let mut m4 = DMatrix::zeros(n, n);
        for i in 0..s {
            let d = DVector::from_column_slice(batch.state(i, k)) - &shift - &mu_d;
            let outer = &d * d.transpose();
            m4 += outer.component_mul(&outer);
            c += outer;
        }
        let biased = &c / sf;
        let c = symmetrized(&(c / (sf - 1.0)));
        // Var of the product of centred coordinates, divided by the sample count.
        let var = (m4 / sf - biased.component_mul(&biased)).map(|v| v.max(0.0));
        cov_stderr.push(var.map(|v| (v / sf).sqrt()));
        mean_stderr.push(c.diagonal().map(|v| (v.max(0.0) / sf).sqrt()));
        mean.push(mu);
        cov.push(c);
    }

    let costs: Vec<f64> = (0..s)
        .map(|i| {
            let mut acc = 0.0;
            for k in 0..=h {
                let x = DVector::from_column_slice(batch.state(i, k));
                acc += (x.transpose() * weights.q(k) * &x)[(0, 0)];
            }
            for k in 0..h {
                let u = DVector::from_column_slice(batch.controller(i, k));
                let v = DVector::from_column_slice(batch.stopper(i, k));
                acc += (u.transpose() * weights.r(k) * &u)[(0, 0)] - (v.transpose() * weights.s(k) * &v)[(0, 0)];
            }
            acc
        })
        .collect();
    let cost_estimate = costs.iter().sum::<f64>() / sf;
    let cost_var = costs.iter().map(|c| (c - cost_estimate).powi(2)).sum::<f64>() / (sf - 1.0);

    Ok(EmpiricalMoments {
        samples: s,
        mean,
        cov,
        mean_stderr,
        cov_stderr,
        cost_estimate,
        cost_stderr: (cost_var / sf).sqrt(),
    })
}

/// Boundary of the `nsigma` confidence ellipse of the marginal over `dims`.
pub fn ellipse_points(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    dims: (usize, usize),
    nsigma: f64,
    npoints: usize,
) -> Result<Vec<[f64; 2]>> {
    let (a, b) = dims;
    let n = mean.len();
    if a >= n || b >= n || cov.shape() != (n, n) {
        return Err(Error::dim("ellipse dimensions", None, format!("indices below {n}"), format!("({a}, {b})")));
    }
    let sub = DMatrix::from_row_slice(2, 2, &[cov[(a, a)], cov[(a, b)], cov[(b, a)], cov[(b, b)]]);
    let factor = psd_factor(&sub, EIG_TOL).ok_or(Error::NotDefinite {
        what: "ellipse covariance",
        required: "positive semidefinite",
        min_eig: min_eigenvalue(&sub),
    })?;
    Ok((0..npoints)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / npoints as f64;
            let p = &factor * DVector::from_vec(vec![t.cos(), t.sin()]) * nsigma;
            [mean[a] + p[0], mean[b] + p[1]]
        })
        .collect())
}
