use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}{}: expected {expected}, found {found}", stage_suffix(*.stage))]
    Dimension {
        what: String,
        stage: Option<usize>,
        expected: String,
        found: String,
    },

    #[error("{what} at stage {stage} is not {required} (smallest eigenvalue {min_eig:.3e})")]
    Definiteness {
        what: &'static str,
        stage: usize,
        required: &'static str,
        min_eig: f64,
    },

    #[error("{what} is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { what: &'static str, asymmetry: f64 },

    #[error("{what} is not {required} (smallest eigenvalue {min_eig:.3e})")]
    NotDefinite {
        what: &'static str,
        required: &'static str,
        min_eig: f64,
    },

    #[error("stopper concavity fails: S - C'QC has smallest eigenvalue {min_eig:.3e}")]
    MeanConcavity { min_eig: f64 },

    #[error("{what} is numerically singular")]
    Singular { what: &'static str },

    #[error(
        "relative controllability matrix has rank {rank} < {required} (singular values {singular_values:?})"
    )]
    RankDeficient {
        rank: usize,
        required: usize,
        singular_values: Vec<f64>,
    },

    #[error("{what}: curvature check failed (extreme eigenvalue {eig:.3e})")]
    Curvature { what: &'static str, eig: f64 },

    #[error("terminal covariance bound unattainable: smallest reachable constraint norm {min_norm:.6}")]
    InfeasibleCovariance { min_norm: f64 },

    #[error("{0}")]
    Invalid(String),
}

fn stage_suffix(stage: Option<usize>) -> String {
    match stage {
        Some(k) => format!(" (stage {k})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn dim(what: impl Into<String>, stage: Option<usize>, expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            what: what.into(),
            stage,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
