//! Scenario files, discretization and the solve/simulate pipeline behind the
//! `steergame` command.

pub mod discretize;
pub mod error;
pub mod output;
pub mod pipeline;
pub mod plot;
pub mod scenario;

pub use discretize::{discretize, Discretized};
pub use error::CliError;
pub use output::{content_digest, OutputFile};
pub use pipeline::{run, Command, RunReport, Status};
pub use scenario::{parse_scenario, parse_scenario_str, Mode, Scenario, SolverOptions};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const INPUT: i32 = 1;
    pub const SOLVER: i32 = 2;
    pub const INFEASIBLE: i32 = 3;
}

/// Exit code for a finished run.
pub fn exit_code(report: &RunReport, strict: bool) -> i32 {
    match report.status {
        Status::Ok => exit::SUCCESS,
        Status::Infeasible if strict => exit::INFEASIBLE,
        Status::Infeasible => exit::SUCCESS,
        Status::SolverFailure => exit::SOLVER,
    }
}
