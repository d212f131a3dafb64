#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use steergame::model::lift;
use steergame::{CostWeights, GaussianBoundary, LiftedSystem, PriorCovariance, StageSystem};

pub fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

pub fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_row_slice(v))
}

pub struct Instance {
    pub stages: StageSystem,
    pub sys: LiftedSystem,
    pub weights: CostWeights,
    pub boundary: GaussianBoundary,
    pub prior: PriorCovariance,
}

impl Instance {
    pub fn new(stages: StageSystem, weights: CostWeights, boundary: GaussianBoundary) -> Self {
        let sys = lift(&stages);
        let prior = PriorCovariance::build(&sys, boundary.sigma0()).unwrap();
        Self { stages, sys, weights, boundary, prior }
    }
}

/// Planar double integrator, 0.2 s steps, ten stages, opposing inputs.
pub fn test_example(noise: f64) -> Instance {
    let dt = 0.2;
    let a = DMatrix::from_row_slice(4, 4, &[1.0, 0.0, dt, 0.0, 0.0, 1.0, 0.0, dt, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    let b = DMatrix::from_row_slice(4, 2, &[dt * dt, 0.0, 0.0, dt * dt, dt, 0.0, 0.0, dt]);
    let c = -&b;
    let d = DMatrix::identity(4, 4) * noise;
    let stages = StageSystem::time_invariant(a, b, c, d, 10).unwrap();
    let weights = CostWeights::time_invariant(DMatrix::identity(4, 4), DMatrix::identity(2, 2), DMatrix::identity(2, 2) * 100.0, 10).unwrap();
    let boundary = GaussianBoundary::new(
        DVector::from_row_slice(&[-10.0, 6.0, 0.0, 0.0]),
        diag(&[0.05, 0.05, 0.01, 0.01]),
        DVector::zeros(4),
        diag(&[0.005, 0.005, 0.001, 0.001]),
    )
    .unwrap();
    Instance::new(stages, weights, boundary)
}


/// Scalar stage data for oracles that bypass the lifting.
#[derive(Clone, Copy)]
pub struct Scalar {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub q: f64,
    pub r: f64,
    pub s: f64,
    pub mu0: f64,
    pub sigma0: f64,
}

impl Scalar {
    pub fn instance(&self, n: usize, mu_n: f64, sigma_n: f64) -> Instance {
        let stages = StageSystem::time_invariant(scalar(self.a), scalar(self.b), scalar(self.c), scalar(self.d), n).unwrap();
        let weights = CostWeights::time_invariant(scalar(self.q), scalar(self.r), scalar(self.s), n).unwrap();
        let boundary = GaussianBoundary::new(
            DVector::from_element(1, self.mu0),
            scalar(self.sigma0),
            DVector::from_element(1, mu_n),
            scalar(sigma_n),
        )
        .unwrap();
        Instance::new(stages, weights, boundary)
    }

    /// Mean payoff and terminal mean by direct recursion.
    pub fn mean_game(&self, u: &[f64], v: &[f64]) -> (f64, f64) {
        let mut x = self.mu0;
        let mut j = 0.0;
        for k in 0..u.len() {
            j += self.q * x * x + self.r * u[k] * u[k] - self.s * v[k] * v[k];
            x = self.a * x + self.b * u[k] + self.c * v[k];
        }
        (j, x)
    }

    /// Feedback payoff and terminal variance from the joint covariance of the
    /// state deviation and the auxiliary process.
    pub fn feedback(&self, k: &[f64], l: &[f64]) -> (f64, f64) {
        let (mut pxx, mut pxy, mut pyy) = (self.sigma0, self.sigma0, self.sigma0);
        let mut j = 0.0;
        for i in 0..k.len() {
            j += self.q * pxx + (self.r * k[i] * k[i] - self.s * l[i] * l[i]) * pyy;
            let g = self.b * k[i] + self.c * l[i];
            let d2 = self.d * self.d;
            let nxx = self.a * self.a * pxx + 2.0 * self.a * g * pxy + g * g * pyy + d2;
            let nxy = self.a * self.a * pxy + self.a * g * pyy + d2;
            let nyy = self.a * self.a * pyy + d2;
            pxx = nxx;
            pxy = nxy;
            pyy = nyy;
        }
        (j, pxx)
    }
}

/// `(H, g, c)` of a quadratic `f(x) = c + g'x + x'Hx/2` recovered by
/// polarization, exact up to rounding.
pub fn quadratic_of<F: Fn(&DVector<f64>) -> f64>(f: F, n: usize) -> (DMatrix<f64>, DVector<f64>, f64) {
    let c = f(&DVector::zeros(n));
    let e = |i: usize| {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        v
    };
    let mut g = DVector::zeros(n);
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let fp = f(&e(i));
        let fm = f(&(-e(i)));
        g[i] = 0.5 * (fp - fm);
        h[(i, i)] = fp + fm - 2.0 * c;
    }
    for i in 0..n {
        for j in 0..i {
            let v = f(&(e(i) + e(j))) - f(&e(i)) - f(&e(j)) + c;
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    (h, g, c)
}

/// Stationary point of a quadratic.
pub fn stationary(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    h.clone().lu().solve(&(-g)).unwrap()
}

/// The scalar two-stage game used by several oracles.
pub const SCALAR: Scalar = Scalar { a: 1.2, b: 1.0, c: 0.4, d: 1.0, q: 1.0, r: 0.5, s: 4.0, mu0: 1.5, sigma0: 0.8 };
