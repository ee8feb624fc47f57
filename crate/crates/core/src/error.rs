use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("system matrix is singular or numerically rank deficient (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("degenerate fit: degrees of freedom {dof:.4} <= 0")]
    NonPositiveDof { dof: f64 },

    #[error("covariance undefined for heavy-tailed posterior (dof {dof:.4} <= 2)")]
    CovarianceUndefined { dof: f64 },

    #[error("matrix is not positive semi-definite (smallest eigenvalue {min_eig:.3e})")]
    NotPositiveSemiDefinite { min_eig: f64 },

    #[error("probability {0} outside (0, 1)")]
    Probability(f64),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("voxel rejected: {0}")]
    Rejected(String),

    #[error("RTOP undefined for a tensor that is not positive definite")]
    RtopUndefined,

    #[error("empty sample set")]
    EmptySamples,

    #[error("beta fit refused: variance {variance:.4e} >= mean*(1-mean) for mean {mean:.4}")]
    BetaFit { mean: f64, variance: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
