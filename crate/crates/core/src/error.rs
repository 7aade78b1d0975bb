use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate knots: {0}")]
    DegenerateKnots(String),

    #[error("data error: {0}")]
    Data(String),

    /// Covariate matrix does not have full column rank on the rows that
    /// carry likelihood information (uncensored rows for censored data).
    #[error("covariate matrix is rank deficient (rank {rank} < {p}); posterior propriety requires full column rank")]
    RankDeficient { rank: usize, p: usize },

    #[error("sampler initialization failed: {0}")]
    Initialization(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("extrapolation: {0}")]
    Extrapolation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
