use thiserror::Error;

/// Errors raised across simulation, estimation, federation and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid config field `{field}`: {message}")]
    InvalidField { field: String, message: String },

    #[error("simulation diverged in trajectory {trajectory} at step {step}: |x| exceeded {threshold:e}")]
    SimulationDiverged {
        trajectory: usize,
        step: usize,
        threshold: f64,
    },

    #[error("client {client} diverged at local step {step} (learning rate too large?)")]
    ClientDiverged { client: usize, step: usize },

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("rank-deficient Gram matrix (lambda_min = {lambda_min:e})")]
    RankDeficient { lambda_min: f64 },

    #[error("client {client}: {source}")]
    Client {
        client: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("estimation error undefined: true parameter has zero norm")]
    UndefinedMetric,

    #[error("degenerate excitation: {0}")]
    DegenerateExcitation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config point {point}, seed {seed}: {source}")]
    Experiment {
        point: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag used by the CLI's one-line error output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::InvalidField { .. } => "config",
            Error::SimulationDiverged { .. } => "simulation-diverged",
            Error::ClientDiverged { .. } => "client-diverged",
            Error::Round { source, .. }
            | Error::Client { source, .. }
            | Error::Experiment { source, .. } => source.code(),
            Error::Aggregation(_) => "aggregation",
            Error::RankDeficient { .. } => "rank-deficient",
            Error::UndefinedMetric => "undefined-metric",
            Error::DegenerateExcitation(_) => "degenerate-excitation",
            Error::Shape(_) => "shape",
            Error::InsufficientData(_) => "insufficient-data",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn in_round(self, round: usize) -> Self {
        Error::Round {
            round,
            source: Box::new(self),
        }
    }

    pub(crate) fn for_client(self, client: usize) -> Self {
        Error::Client {
            client,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
