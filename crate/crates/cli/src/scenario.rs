//! Scenario files.
//!
//! A scenario is a TOML document with a `name`, the required tables
//! `system`, `boundary` and `weights`, and optional `solver` and `parameters`
//! tables. Matrices are row-major lists of rows. Square matrices also accept
//! a bare number `c` or the strings `"I"`, `"c*I"` and `"diag(a, b, ...)"`;
//! any shape accepts `"zeros"`.
//!
//! ```toml
//! name = "double_integrator"
//!
//! [system]
//! mode = "lti"            # "lti", "ltv" or "continuous"
//! horizon = 10
//! n_state = 4
//! n_controller = 2
//! n_stopper = 2
//! n_noise = 4
//! a = [[1, 0, 0.2, 0], [0, 1, 0, 0.2], [0, 0, 1, 0], [0, 0, 0, 1]]
//! b = [[0.04, 0], [0, 0.04], [0.2, 0], [0, 0.2]]
//! c = [[-0.04, 0], [0, -0.04], [-0.2, 0], [0, -0.2]]
//! d = "0.01*I"
//!
//! [boundary]
//! mu0 = [-10, 6, 0, 0]
//! sigma0 = "diag(0.05, 0.05, 0.01, 0.01)"
//! mu_n = [0, 0, 0, 0]
//! sigma_n = "diag(0.005, 0.005, 0.001, 0.001)"
//!
//! [weights]
//! q = "I"
//! r = "I"
//! s = "100*I"
//! ```
//!
//! `mode = "ltv"` replaces `a`..`d` with one `[[system.stage]]` table per
//! step. `mode = "continuous"` takes `a_c`, `b_c`, `c_c`, `noise_input`, `dt`
//! and `alpha` and discretizes with a zero-order hold.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use steergame::{CostWeights, GaussianBoundary, StageSystem};
use toml::Value;

use crate::discretize::discretize;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Lti,
    Ltv,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Jacobi stopping threshold on both gain updates.
    pub epsilon: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Monte Carlo rollouts.
    pub samples: usize,
    /// Sampled trajectories written to CSV.
    pub trajectories: usize,
    pub feas_tol: f64,
    pub eig_tol: f64,
    pub rank_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            max_iter: 200,
            seed: 0,
            samples: 1000,
            trajectories: 100,
            feas_tol: 1e-6,
            eig_tol: steergame::EIG_TOL,
            rank_tol: steergame::mean_game::RANK_TOL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    pub stages: StageSystem,
    pub boundary: GaussianBoundary,
    pub weights: CostWeights,
    pub solver: SolverOptions,
    /// Sampling interval of a continuous-time scenario.
    pub dt: Option<f64>,
    /// Free-form numbers carried through to the report and plot script.
    pub parameters: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    system: RawSystem,
    boundary: RawBoundary,
    weights: RawWeights,
    #[serde(default)]
    solver: SolverOptions,
    #[serde(default)]
    parameters: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    mode: Mode,
    horizon: usize,
    n_state: usize,
    n_controller: usize,
    n_stopper: usize,
    n_noise: usize,
    a: Option<Value>,
    b: Option<Value>,
    c: Option<Value>,
    d: Option<Value>,
    stage: Option<Vec<RawStage>>,
    a_c: Option<Value>,
    b_c: Option<Value>,
    c_c: Option<Value>,
    noise_input: Option<Value>,
    dt: Option<f64>,
    alpha: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStage {
    a: Value,
    b: Value,
    c: Value,
    d: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoundary {
    mu0: Value,
    sigma0: Value,
    mu_n: Value,
    sigma_n: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeights {
    q: Value,
    r: Value,
    s: Value,
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_scenario_str(&text, path)
}

/// Parse scenario text; `origin` only labels diagnostics.
pub fn parse_scenario_str(text: &str, origin: &Path) -> Result<Scenario, CliError> {
    let raw: RawScenario =
        toml::from_str(text).map_err(|e| CliError::Parse { path: origin.to_path_buf(), message: e.to_string() })?;
    let sys = &raw.system;
    let (n, m, l, r, h) = (sys.n_state, sys.n_controller, sys.n_stopper, sys.n_noise, sys.horizon);
    for (field, v) in [("system.horizon", h), ("system.n_state", n), ("system.n_controller", m), ("system.n_stopper", l)] {
        if v == 0 {
            return Err(CliError::field(field, "must be positive"));
        }
    }
    check_solver(&raw.solver)?;

    let stages = match sys.mode {
        Mode::Lti => {
            only_fields(sys, &["a", "b", "c", "d"])?;
            StageSystem::time_invariant(
                matrix("system.a", required(&sys.a, "system.a")?, n, n)?,
                matrix("system.b", required(&sys.b, "system.b")?, n, m)?,
                matrix("system.c", required(&sys.c, "system.c")?, n, l)?,
                matrix("system.d", required(&sys.d, "system.d")?, n, r)?,
                h,
            )
        }
        Mode::Ltv => {
            only_fields(sys, &["stage"])?;
            let list = sys.stage.as_ref().ok_or_else(|| CliError::field("system.stage", "missing for mode \"ltv\""))?;
            if list.len() != h {
                return Err(CliError::field("system.stage", format!("expected {h} stages, found {}", list.len())));
            }
            let mut mats = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for (k, st) in list.iter().enumerate() {
                let p = format!("system.stage[{k}]");
                mats.0.push(matrix(&format!("{p}.a"), &st.a, n, n)?);
                mats.1.push(matrix(&format!("{p}.b"), &st.b, n, m)?);
                mats.2.push(matrix(&format!("{p}.c"), &st.c, n, l)?);
                mats.3.push(matrix(&format!("{p}.d"), &st.d, n, r)?);
            }
            StageSystem::new(mats.0, mats.1, mats.2, mats.3)
        }
        Mode::Continuous => {
            only_fields(sys, &["a_c", "b_c", "c_c", "noise_input", "dt", "alpha"])?;
            let dt = sys.dt.ok_or_else(|| CliError::field("system.dt", "missing for mode \"continuous\""))?;
            let alpha = sys.alpha.ok_or_else(|| CliError::field("system.alpha", "missing for mode \"continuous\""))?;
            let disc = discretize(
                &matrix("system.a_c", required(&sys.a_c, "system.a_c")?, n, n)?,
                &matrix("system.b_c", required(&sys.b_c, "system.b_c")?, n, m)?,
                &matrix("system.c_c", required(&sys.c_c, "system.c_c")?, n, l)?,
                &matrix("system.noise_input", required(&sys.noise_input, "system.noise_input")?, n, r)?,
                dt,
                alpha,
            )?;
            StageSystem::time_invariant(disc.a, disc.b, disc.c, disc.d, h)
        }
    }
    .map_err(|e| CliError::field("system", e))?;

    let b = &raw.boundary;
    let boundary = GaussianBoundary::new(
        vector("boundary.mu0", &b.mu0, n)?,
        matrix("boundary.sigma0", &b.sigma0, n, n)?,
        vector("boundary.mu_n", &b.mu_n, n)?,
        matrix("boundary.sigma_n", &b.sigma_n, n, n)?,
    )
    .map_err(|e| CliError::field("boundary", e))?;

    let w = &raw.weights;
    let weights = CostWeights::time_invariant(
        matrix("weights.q", &w.q, n, n)?,
        matrix("weights.r", &w.r, m, m)?,
        matrix("weights.s", &w.s, l, l)?,
        h,
    )
    .map_err(|e| CliError::field("weights", e))?;

    Ok(Scenario {
        name: raw.name,
        mode: sys.mode,
        stages,
        boundary,
        weights,
        solver: raw.solver,
        dt: sys.dt,
        parameters: raw.parameters,
    })
}

fn check_solver(s: &SolverOptions) -> Result<(), CliError> {
    let positive = [
        ("solver.epsilon", s.epsilon),
        ("solver.feas_tol", s.feas_tol),
        ("solver.eig_tol", s.eig_tol),
        ("solver.rank_tol", s.rank_tol),
    ];
    for (field, v) in positive {
        if !(v.is_finite() && v > 0.0) {
            return Err(CliError::field(field, format!("must be a positive number, found {v}")));
        }
    }
    if s.max_iter == 0 {
        return Err(CliError::field("solver.max_iter", "must be positive"));
    }
    if s.samples < 2 {
        return Err(CliError::field("solver.samples", "need at least 2 rollouts"));
    }
    Ok(())
}

fn required<'a>(v: &'a Option<Value>, field: &str) -> Result<&'a Value, CliError> {
    v.as_ref().ok_or_else(|| CliError::field(field, "missing for this mode"))
}

fn only_fields(sys: &RawSystem, allowed: &[&str]) -> Result<(), CliError> {
    let present = [
        ("a", sys.a.is_some()),
        ("b", sys.b.is_some()),
        ("c", sys.c.is_some()),
        ("d", sys.d.is_some()),
        ("stage", sys.stage.is_some()),
        ("a_c", sys.a_c.is_some()),
        ("b_c", sys.b_c.is_some()),
        ("c_c", sys.c_c.is_some()),
        ("noise_input", sys.noise_input.is_some()),
        ("dt", sys.dt.is_some()),
        ("alpha", sys.alpha.is_some()),
    ];
    match present.iter().find(|(name, set)| *set && !allowed.contains(name)) {
        Some((name, _)) => Err(CliError::field(format!("system.{name}"), format!("not used by mode {:?}", sys.mode))),
        None => Ok(()),
    }
}

fn number(field: &str, v: &Value) -> Result<f64, CliError> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(CliError::field(field, format!("expected a number, found {}", other.type_str()))),
    }
}

fn parse_f64(field: &str, s: &str) -> Result<f64, CliError> {
    s.trim().parse::<f64>().map_err(|_| CliError::field(field, format!("cannot read {:?} as a number", s.trim())))
}

/// Read a `rows x cols` matrix from a list of rows or a shorthand.
pub fn matrix(field: &str, v: &Value, rows: usize, cols: usize) -> Result<DMatrix<f64>, CliError> {
    let square = |m: DMatrix<f64>| {
        if rows == cols {
            Ok(m)
        } else {
            Err(CliError::field(field, format!("shorthand needs a square matrix, expected {rows}x{cols}")))
        }
    };
    match v {
        Value::Float(_) | Value::Integer(_) => square(DMatrix::identity(rows, rows) * number(field, v)?),
        Value::String(s) => {
            let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
            if t == "zeros" {
                Ok(DMatrix::zeros(rows, cols))
            } else if t == "I" {
                square(DMatrix::identity(rows, rows))
            } else if let Some(c) = t.strip_suffix("*I") {
                square(DMatrix::identity(rows, rows) * parse_f64(field, c)?)
            } else if let Some(inner) = t.strip_prefix("diag(").and_then(|r| r.strip_suffix(')')) {
                let d = inner.split(',').map(|x| parse_f64(field, x)).collect::<Result<Vec<_>, _>>()?;
                if d.len() != rows {
                    return Err(CliError::field(field, format!("diag needs {rows} entries, found {}", d.len())));
                }
                square(DMatrix::from_diagonal(&DVector::from_vec(d)))
            } else {
                Err(CliError::field(field, format!("unrecognized matrix shorthand {s:?}")))
            }
        }
        Value::Array(list) => {
            if list.len() != rows {
                return Err(CliError::field(field, format!("expected {rows} rows, found {}", list.len())));
            }
            let mut m = DMatrix::zeros(rows, cols);
            for (i, row) in list.iter().enumerate() {
                let Value::Array(row) = row else {
                    return Err(CliError::field(format!("{field}[{i}]"), "expected a list of numbers"));
                };
                if row.len() != cols {
                    return Err(CliError::field(format!("{field}[{i}]"), format!("expected {cols} columns, found {}", row.len())));
                }
                for (j, x) in row.iter().enumerate() {
                    m[(i, j)] = number(&format!("{field}[{i}][{j}]"), x)?;
                }
            }
            Ok(m)
        }
        other => Err(CliError::field(field, format!("expected a matrix, found {}", other.type_str()))),
    }
}

pub fn vector(field: &str, v: &Value, n: usize) -> Result<DVector<f64>, CliError> {
    let Value::Array(list) = v else {
        return Err(CliError::field(field, format!("expected a list of {n} numbers")));
    };
    if list.len() != n {
        return Err(CliError::field(field, format!("expected {n} entries, found {}", list.len())));
    }
    list.iter().enumerate().map(|(i, x)| number(&format!("{field}[{i}]"), x)).collect::<Result<Vec<_>, _>>().map(DVector::from_vec)
}
