use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use steergame_cli::{exit, exit_code, parse_scenario, run, Command};

#[derive(Parser)]
#[command(name = "steergame", version, about = "Gaussian steering games: solve, simulate and plot")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Saddle point of the game without terminal constraints.
    SolveUnconstrained(Args),
    /// Terminal mean and covariance constrained solve.
    SolveConstrained(Args),
    /// Constrained solve followed by Monte Carlo rollouts.
    Simulate(Args),
    /// Everything above.
    All(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    outdir: PathBuf,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Exit with status 3 when a terminal constraint cannot be met.
    #[arg(long)]
    strict: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::SolveUnconstrained(a) => (Command::SolveUnconstrained, a),
        Cmd::SolveConstrained(a) => (Command::SolveConstrained, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::All(a) => (Command::All, a),
    };
    let mut scenario = match parse_scenario(&args.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit::INPUT as u8);
        }
    };
    let opts = &mut scenario.solver;
    if let Some(n) = args.samples {
        opts.samples = n;
    }
    if let Some(s) = args.seed {
        opts.seed = s;
    }
    if let Some(e) = args.epsilon {
        opts.epsilon = e;
    }
    if let Some(m) = args.max_iter {
        opts.max_iter = m;
    }
    if opts.samples < 2 || opts.max_iter == 0 || opts.epsilon.is_nan() || opts.epsilon <= 0.0 {
        eprintln!("error: --samples must be at least 2, --max-iter positive and --epsilon positive");
        return ExitCode::from(exit::INPUT as u8);
    }

    let report = match run(&scenario, command, &args.outdir) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit::INPUT as u8);
        }
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for e in &report.errors {
        eprintln!("error: {e}");
    }
    println!("{}: {:?}", report.scenario, report.status);
    let f = &report.feasibility;
    if let Some(c) = &f.mean_concavity {
        println!("  mean concavity     {} (min eig {:.4e})", c.holds, c.min_eig);
    }
    if let Some(r) = &f.rank_g {
        println!("  rank G             {} of {}", r.rank, r.required);
    }
    if let Some(r) = f.rank_condition {
        println!("  rank condition     {r}");
    }
    if let Some(c) = &f.cov_curvature {
        println!("  covariance curvature convex {} concave {}", c.convex_on_free, c.concave_on_free);
    }
    if let Some(v) = f.ccsg_feasible {
        println!("  covariance feasible {v}");
    }
    println!("  outputs in {}", args.outdir.display());
    ExitCode::from(exit_code(&report, args.strict) as u8)
}
