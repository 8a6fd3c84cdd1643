use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} has size {size}, above the dense limit of {limit}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("support mask has no true voxel")]
    EmptyMask,

    #[error("temporal basis is rank deficient (rank {rank} < {coeffs})")]
    RankDeficient { rank: usize, coeffs: usize },

    #[error("weight function has no readout dimension")]
    MissingReadout,

    #[error("frame {frame} has no quota left")]
    QuotaExhausted { frame: usize },

    #[error("location {k} in frame {frame} is already sampled and repeats are disabled")]
    RepeatForbidden { k: usize, frame: usize },

    #[error("location {k} in frame {frame} holds no sample")]
    AbsentSample { k: usize, frame: usize },

    #[error("cannot place {requested} samples: only {available} candidates")]
    Infeasible { requested: usize, available: usize },

    #[error("conjugate gradient diverged at iteration {iteration} (delta {delta:e})")]
    Diverged { iteration: usize, delta: f64 },

    #[error("sampled kernel Gram matrix is ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("rank correlation is undefined for constant input")]
    ConstantInput,

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn mismatch(expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
