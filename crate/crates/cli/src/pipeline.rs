//! Solver pipeline: verdicts, mean game, covariance game, rollouts, files.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use steergame::model::{lift, payoff};
use steergame::montecarlo::RNG_NAME;
use steergame::{
    empirical_moments, ellipse_points, rollout, ConstrainedMeanSolution, CovGame, EmpiricalMoments, Error, GainProfile,
    JacobiOptions, JacobiTrace, LiftedSystem, MeanGame, MeanSaddle, MeanTrajectory, PriorCovariance, StepOptions,
    UcsgSolution,
};

use crate::error::CliError;
use crate::output::{fmt_f64, indexed, pair_indexed, row_major, vec_values, OutputFile, Table, Writer};
use crate::plot::plot_script;
use crate::scenario::Scenario;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
const ELLIPSE_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SolveUnconstrained,
    SolveConstrained,
    Simulate,
    All,
}

impl Command {
    fn unconstrained(self) -> bool {
        matches!(self, Command::SolveUnconstrained | Command::All)
    }

    fn constrained(self) -> bool {
        !matches!(self, Command::SolveUnconstrained)
    }

    fn simulates(self) -> bool {
        matches!(self, Command::Simulate | Command::All)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// A terminal constraint cannot be met; reported, not a failure.
    Infeasible,
    SolverFailure,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConcavityVerdict {
    pub holds: bool,
    pub min_eig: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankVerdict {
    pub rank: usize,
    pub required: usize,
    pub full_row_rank: bool,
    pub singular_values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureVerdict {
    pub convex_in_k: bool,
    pub concave_in_l: bool,
    pub prior_singular: bool,
    pub convex_on_free: bool,
    pub concave_on_free: bool,
    pub free_controller_min_eig: f64,
    pub free_stopper_max_eig: f64,
}

/// Each field is copied from exactly one check in the solver library.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Feasibility {
    pub mean_concavity: Option<ConcavityVerdict>,
    pub rank_g: Option<RankVerdict>,
    pub rank_condition: Option<bool>,
    pub cov_curvature: Option<CurvatureVerdict>,
    pub ccsg_feasible: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub mean_value: Option<f64>,
    pub terminal_mean: Option<Vec<f64>>,
    pub terminal_residual: Option<f64>,
    pub covariance_value: Option<f64>,
    /// Row-major.
    pub terminal_covariance: Option<Vec<f64>>,
    pub total_value: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct JacobiSummary {
    pub converged: bool,
    pub iterations: usize,
    pub feasible: bool,
    pub final_eps_k: Option<f64>,
    pub final_eps_l: Option<f64>,
    pub constraint_norm: f64,
    pub min_attainable_norm: Option<f64>,
    pub used_fallback: bool,
    pub monotone: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloSummary {
    pub samples: usize,
    pub seed: u64,
    pub rng: &'static str,
    pub terminal_mean: Vec<f64>,
    pub terminal_mean_stderr: Vec<f64>,
    pub terminal_covariance: Vec<f64>,
    pub terminal_covariance_stderr: Vec<f64>,
    pub cost_estimate: f64,
    pub cost_stderr: f64,
}

/// Solver objects behind the report, for library callers.
#[derive(Debug, Clone, Default)]
pub struct Solutions {
    pub mean_saddle: Option<MeanSaddle>,
    pub ucsg: Option<UcsgSolution>,
    pub constrained_mean: Option<ConstrainedMeanSolution>,
    pub jacobi: Option<JacobiTrace>,
    pub moments: BTreeMap<String, EmpiricalMoments>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub command: Command,
    pub version: &'static str,
    pub seed: u64,
    pub samples: usize,
    pub status: Status,
    pub feasibility: Feasibility,
    pub unconstrained: Option<SolveSummary>,
    pub constrained: Option<SolveSummary>,
    pub jacobi: Option<JacobiSummary>,
    pub monte_carlo: BTreeMap<String, MonteCarloSummary>,
    pub parameters: BTreeMap<String, f64>,
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
    /// Every emitted file except `report.json` itself.
    pub outputs: Vec<OutputFile>,
    #[serde(skip)]
    pub solutions: Solutions,
}

impl RunReport {
    fn fail(&mut self, stage: &str, e: &Error) {
        self.errors.push(format!("{stage}: {e}"));
        let infeasible = matches!(e, Error::InfeasibleCovariance { .. } | Error::RankDeficient { .. });
        self.status = match (self.status, infeasible) {
            (Status::SolverFailure, _) | (_, false) => Status::SolverFailure,
            _ => Status::Infeasible,
        };
    }

    fn infeasible(&mut self) {
        if self.status == Status::Ok {
            self.status = Status::Infeasible;
        }
    }
}

struct Context<'a> {
    scenario: &'a Scenario,
    sys: &'a LiftedSystem,
    mean: MeanGame<'a>,
    cov: CovGame<'a>,
}

/// Run `command` on `scenario` and write artifacts into `outdir`.
///
/// Solver failures and infeasibility are recorded in the report; only
/// problems with the inputs or the output directory return `Err`.
pub fn run(scenario: &Scenario, command: Command, outdir: &Path) -> Result<RunReport, CliError> {
    let opts = &scenario.solver;
    let sys = lift(&scenario.stages);
    let prior = PriorCovariance::build(&sys, scenario.boundary.sigma0()).map_err(|e| CliError::field("boundary.sigma0", e))?;
    let mean = MeanGame::with_tolerances(&sys, &scenario.weights, opts.eig_tol, opts.rank_tol)
        .map_err(|e| CliError::field("weights", e))?;
    let cov = CovGame::with_tolerance(&sys, &scenario.weights, &prior, opts.eig_tol).map_err(|e| CliError::field("weights", e))?;
    let ctx = Context { scenario, sys: &sys, mean, cov };

    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let header = format!(
        "# steergame {VERSION} scenario={} seed={} rng={RNG_NAME} generated_at={stamp}",
        scenario.name, opts.seed
    );
    let mut out = Writer::new(outdir, header)?;

    let concavity = ctx.mean.concavity();
    let curvature = ctx.cov.check_curvature();
    let mut report = RunReport {
        scenario: scenario.name.clone(),
        command,
        version: VERSION,
        seed: opts.seed,
        samples: opts.samples,
        status: Status::Ok,
        feasibility: Feasibility {
            mean_concavity: Some(ConcavityVerdict { holds: concavity.holds, min_eig: concavity.min_eig }),
            cov_curvature: Some(CurvatureVerdict {
                convex_in_k: curvature.convex_in_k,
                concave_in_l: curvature.concave_in_l,
                prior_singular: curvature.prior_singular,
                convex_on_free: curvature.convex_on_free,
                concave_on_free: curvature.concave_on_free,
                free_controller_min_eig: curvature.free_controller_min_eig,
                free_stopper_max_eig: curvature.free_stopper_max_eig,
            }),
            ..Feasibility::default()
        },
        unconstrained: None,
        constrained: None,
        jacobi: None,
        monte_carlo: BTreeMap::new(),
        parameters: scenario.parameters.clone(),
        errors: Vec::new(),
        warnings: Vec::new(),
        outputs: Vec::new(),
        solutions: Solutions::default(),
    };
    if curvature.prior_singular {
        report.warnings.push("prior covariance is singular; curvature judged on the free gain entries".into());
    }

    if command.unconstrained() {
        unconstrained(&ctx, &mut report, &mut out, command.simulates())?;
    }
    if command.constrained() {
        constrained(&ctx, &mut report, &mut out, command.simulates())?;
    }
    out.emit_raw("plot.py", &plot_script(scenario, command))?;

    report.outputs = out.files.clone();
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    let path = outdir.join("report.json");
    std::fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(report)
}

fn unconstrained(ctx: &Context, report: &mut RunReport, out: &mut Writer, simulate: bool) -> Result<(), CliError> {
    let b = &ctx.scenario.boundary;
    let saddle = match ctx.mean.solve_unconstrained(b.mu0()) {
        Ok(s) => Some(s),
        Err(e) => {
            report.fail("unconstrained mean game", &e);
            None
        }
    };
    let ucsg = match ctx.cov.solve_ucsg_stationary() {
        Ok(s) => Some(s),
        Err(e) => {
            report.fail("unconstrained covariance game", &e);
            None
        }
    };
    let mean = saddle.as_ref().map(|s| (s.controller.clone(), s.stopper.clone()));
    let gains = ucsg.as_ref().map(|s| (s.controller.clone(), s.stopper.clone()));
    report.unconstrained = Some(emit_solution(ctx, report, out, "unconstrained", mean.as_ref(), gains.as_ref(), simulate)?);
    report.solutions.mean_saddle = saddle;
    report.solutions.ucsg = ucsg;
    Ok(())
}

fn constrained(ctx: &Context, report: &mut RunReport, out: &mut Writer, simulate: bool) -> Result<(), CliError> {
    let sc = ctx.scenario;
    let b = &sc.boundary;
    match ctx.mean.relative_controllability() {
        Ok(rc) => {
            report.feasibility.rank_g = Some(RankVerdict {
                rank: rc.rank,
                required: rc.matrix.nrows(),
                full_row_rank: rc.full_row_rank(),
                singular_values: rc.singular_values.clone(),
            });
            match ctx.mean.rank_condition(&rc, b.mu0(), b.mu_n()) {
                Ok(v) => report.feasibility.rank_condition = Some(v),
                Err(e) => report.fail("rank condition", &e),
            }
        }
        Err(e) => report.fail("relative controllability", &e),
    }
    let cmsg = match ctx.mean.solve_constrained_upper(b.mu0(), b.mu_n()) {
        Ok(s) => {
            if let Some(w) = &s.warning {
                report.warnings.push(format!("constrained mean game: {w}"));
            }
            Some(s)
        }
        Err(e) => {
            report.fail("constrained mean game", &e);
            None
        }
    };

    let jopts = JacobiOptions {
        epsilon: sc.solver.epsilon,
        max_iter: sc.solver.max_iter,
        step: StepOptions { feas_tol: sc.solver.feas_tol, ..StepOptions::default() },
        ..JacobiOptions::default()
    };
    let trace = match ctx.cov.jacobi_solve(b.sigma_n(), &jopts) {
        Ok(t) => Some(t),
        Err(e) => {
            report.fail("constrained covariance game", &e);
            None
        }
    };
    if let Some(t) = &trace {
        report.feasibility.ccsg_feasible = Some(t.feasible);
        if !t.feasible {
            report.infeasible();
            match t.min_attainable_norm {
                Some(m) => report.warnings.push(format!(
                    "terminal covariance bound unattainable (smallest reachable constraint norm {m:.6}); fallback gains reported"
                )),
                None => report.warnings.push("Jacobi iteration did not converge within max_iter".into()),
            }
        }
        report.jacobi = Some(JacobiSummary {
            converged: t.converged,
            iterations: t.iterations,
            feasible: t.feasible,
            final_eps_k: t.eps_k.last().copied(),
            final_eps_l: t.eps_l.last().copied(),
            constraint_norm: t.constraint_norm,
            min_attainable_norm: t.min_attainable_norm,
            used_fallback: t.fallback.is_some(),
            monotone: t.monotone(1e-9),
        });
        let mut table = Table::new(["iteration", "eps_k", "eps_l", "cost"]);
        for (i, it) in t.iterates.iter().enumerate() {
            let lead = [i.to_string()];
            if i == 0 {
                table.row(&lead, [f64::NAN, f64::NAN, it.cost]);
            } else {
                table.row(&lead, [t.eps_k[i - 1], t.eps_l[i - 1], it.cost]);
            }
        }
        out.emit("convergence.csv", &table.finish())?;
    }

    let mean = cmsg.as_ref().map(|s| (s.controller.clone(), s.stopper.clone()));
    let gains = trace.as_ref().map(|t| (t.controller.clone(), t.stopper.clone()));
    let mut summary = emit_solution(ctx, report, out, "constrained", mean.as_ref(), gains.as_ref(), simulate)?;
    summary.terminal_residual = cmsg.as_ref().map(|s| s.terminal_residual);
    report.constrained = Some(summary);
    report.solutions.constrained_mean = cmsg;
    report.solutions.jacobi = trace;
    Ok(())
}

type Pair<T> = (T, T);

/// Write mean, covariance, gain and ellipse tables for one solution and, when
/// asked and both halves exist, roll it out.
fn emit_solution(
    ctx: &Context,
    report: &mut RunReport,
    out: &mut Writer,
    tag: &str,
    mean: Option<&Pair<DVector<f64>>>,
    gains: Option<&Pair<GainProfile>>,
    simulate: bool,
) -> Result<SolveSummary, CliError> {
    let sc = ctx.scenario;
    let b = &sc.boundary;
    let (h, n) = (ctx.sys.horizon(), ctx.sys.n_state());
    let (m, l) = (ctx.sys.n_controller(), ctx.sys.n_stopper());
    let mut summary = SolveSummary {
        mean_value: None,
        terminal_mean: None,
        terminal_residual: None,
        covariance_value: None,
        terminal_covariance: None,
        total_value: None,
    };

    let traj = match mean {
        Some((u, v)) => {
            let t = MeanTrajectory::new(ctx.sys, b.mu0(), u.clone(), v.clone()).expect("solver output has lifted sizes");
            summary.mean_value = Some(ctx.mean.cost(b.mu0(), u, v));
            summary.terminal_mean = Some(t.terminal().iter().copied().collect());
            let mut table = Table::new(std::iter::once("step".to_string()).chain(indexed("x", n)));
            for k in 0..=h {
                table.row(&[k.to_string()], vec_values(&t.state(k)));
            }
            out.emit(&format!("{tag}_mean.csv"), &table.finish())?;
            let mut table =
                Table::new(std::iter::once("step".to_string()).chain(indexed("u", m)).chain(indexed("v", l)));
            for k in 0..h {
                table.row(&[k.to_string()], u.rows(k * m, m).iter().chain(v.rows(k * l, l).iter()).copied());
            }
            out.emit(&format!("{tag}_inputs.csv"), &table.finish())?;
            Some(t)
        }
        None => None,
    };

    let covs = match gains {
        Some((k, g)) => {
            summary.covariance_value = Some(ctx.cov.cost(k, g));
            let covs = ctx.cov.state_covariances(k, g);
            summary.terminal_covariance = Some(row_major(&covs[h]).collect());
            let mut table = Table::new(std::iter::once("step".to_string()).chain(pair_indexed("cov", n)));
            for (step, c) in covs.iter().enumerate() {
                table.row(&[step.to_string()], row_major(c));
            }
            out.emit(&format!("{tag}_covariance.csv"), &table.finish())?;
            let mut table = Table::new(["step", "player", "row", "col", "value"]);
            for step in 0..h {
                for (player, gp) in [("K", k), ("L", g)] {
                    let blk = gp.block(step);
                    for i in 0..blk.nrows() {
                        for j in 0..blk.ncols() {
                            table.row(&[step.to_string(), player.into(), i.to_string(), j.to_string()], [blk[(i, j)]]);
                        }
                    }
                }
            }
            out.emit(&format!("{tag}_gains.csv"), &table.finish())?;
            Some(covs)
        }
        None => None,
    };
    if let (Some(v), Some(c)) = (summary.mean_value, summary.covariance_value) {
        summary.total_value = Some(v + c);
    }

    if n >= 2 {
        let mut table = Table::new(["step", "kind", "point", "x", "y"]);
        let mut ellipse = |step: usize, kind: &str, mu: &DVector<f64>, cov: &DMatrix<f64>| {
            if let Ok(pts) = ellipse_points(mu, cov, (0, 1), 3.0, ELLIPSE_POINTS) {
                for (i, p) in pts.iter().enumerate() {
                    table.row(&[step.to_string(), kind.into(), i.to_string()], *p);
                }
            }
        };
        ellipse(0, "target", b.mu0(), b.sigma0());
        ellipse(h, "target", b.mu_n(), b.sigma_n());
        if let (Some(t), Some(covs)) = (&traj, &covs) {
            for (step, c) in covs.iter().enumerate() {
                ellipse(step, "state", &t.state(step), c);
            }
        }
        out.emit(&format!("{tag}_ellipse.csv"), &table.finish())?;
    }

    if simulate {
        match (mean, gains) {
            (Some((u, v)), Some((k, g))) => simulate_solution(ctx, report, out, tag, u, v, k, g)?,
            _ => report.warnings.push(format!("{tag}: rollouts skipped because no complete solution is available")),
        }
    }
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn simulate_solution(
    ctx: &Context,
    report: &mut RunReport,
    out: &mut Writer,
    tag: &str,
    u: &DVector<f64>,
    v: &DVector<f64>,
    k: &GainProfile,
    g: &GainProfile,
) -> Result<(), CliError> {
    let sc = ctx.scenario;
    let opts = &sc.solver;
    let n = ctx.sys.n_state();
    let h = ctx.sys.horizon();
    let batch = match rollout(&sc.stages, &sc.boundary, u, v, k, g, opts.samples, opts.seed) {
        Ok(b) => b,
        Err(e) => {
            report.fail(&format!("{tag} rollouts"), &e);
            return Ok(());
        }
    };
    let mo = match empirical_moments(&batch, &sc.weights) {
        Ok(m) => m,
        Err(e) => {
            report.fail(&format!("{tag} moments"), &e);
            return Ok(());
        }
    };

    let mut table = Table::new(["step".to_string(), "sample".to_string()].into_iter().chain(indexed("x", n)));
    for i in 0..opts.trajectories.min(batch.samples) {
        for step in 0..=h {
            table.row(&[step.to_string(), i.to_string()], batch.state(i, step).iter().copied());
        }
    }
    out.emit(&format!("{tag}_trajectories.csv"), &table.finish())?;

    let cols = std::iter::once("step".to_string())
        .chain(indexed("mean", n))
        .chain(indexed("mean_se", n))
        .chain(pair_indexed("cov", n))
        .chain(pair_indexed("cov_se", n));
    let mut table = Table::new(cols);
    for step in 0..=h {
        let vals = vec_values(&mo.mean[step])
            .chain(vec_values(&mo.mean_stderr[step]))
            .chain(row_major(&mo.cov[step]))
            .chain(row_major(&mo.cov_stderr[step]))
            .collect::<Vec<_>>();
        table.row(&[step.to_string()], vals);
    }
    out.emit(&format!("{tag}_empirical.csv"), &table.finish())?;

    let analytic = payoff(ctx.sys, &sc.weights, &sc.boundary, u, v, k, g).ok();
    if let Some(p) = analytic {
        let z = (mo.cost_estimate - p.total) / mo.cost_stderr.max(f64::MIN_POSITIVE);
        if z.abs() > 5.0 {
            report.warnings.push(format!(
                "{tag}: sampled cost {} differs from analytic {} by {z:.1} standard errors",
                fmt_f64(mo.cost_estimate),
                fmt_f64(p.total)
            ));
        }
    }
    report.monte_carlo.insert(
        tag.to_string(),
        MonteCarloSummary {
            samples: mo.samples,
            seed: opts.seed,
            rng: RNG_NAME,
            terminal_mean: mo.mean[h].iter().copied().collect(),
            terminal_mean_stderr: mo.mean_stderr[h].iter().copied().collect(),
            terminal_covariance: row_major(&mo.cov[h]).collect(),
            terminal_covariance_stderr: row_major(&mo.cov_stderr[h]).collect(),
            cost_estimate: mo.cost_estimate,
            cost_stderr: mo.cost_stderr,
        },
    );
    report.solutions.moments.insert(tag.to_string(), mo);
    Ok(())
}
