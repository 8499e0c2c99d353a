use thiserror::Error;

/// Errors raised while reading or validating one of the CSV/text schemas.
#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("{path}: row {row}, column `{column}`: {message}")]
    Field {
        path: String,
        row: usize,
        column: String,
        message: String,
    },
    #[error("{path}: missing header column `{column}`")]
    MissingColumn { path: String, column: String },
    #[error("{path}: {message}")]
    File { path: String, message: String },
}

impl SchemaError {
    pub fn field(
        path: impl Into<String>,
        row: usize,
        column: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        SchemaError::Field {
            path: path.into(),
            row,
            column: column.into(),
            message: message.into(),
        }
    }

    pub fn file(path: impl Into<String>, message: impl ToString) -> Self {
        SchemaError::File {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// (row, column) of the offending cell when the error points at one.
    pub fn location(&self) -> Option<(usize, &str)> {
        match self {
            SchemaError::Field { row, column, .. } => Some((*row, column.as_str())),
            SchemaError::MissingColumn { column, .. } => Some((0, column.as_str())),
            SchemaError::File { .. } => None,
        }
    }
}

/// Numerical failures from the estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EconError {
    #[error("absorption did not converge after {iterations} iterations (max change {max_change:e}, tol {tol:e})")]
    NoConvergence {
        iterations: usize,
        max_change: f64,
        tol: f64,
    },
    #[error("{regressors} regressors but only {observations} observations")]
    TooFewObservations {
        observations: usize,
        regressors: usize,
    },
    #[error("cluster-robust covariance needs at least two clusters, got {0}")]
    TooFewClusters(usize),
    #[error("no identifying variation: {0}")]
    NoVariation(String),
    #[error("rank-deficient first stage: {0}")]
    RankDeficientFirstStage(String),
    #[error("Poisson estimation failed: {0}")]
    Poisson(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("bootstrap needs at least 2 replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("all {0} bootstrap replicates failed")]
    AllReplicatesFailed(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("empty vocabulary after min-count filter (min_count = {0})")]
    EmptyVocabulary(usize),
    #[error("embedding dimension must be at least 2, got {0}")]
    Dimension(usize),
    #[error("token `{0}` is not in the vocabulary")]
    MissingToken(String),
    #[error("cosine similarity undefined for a zero vector")]
    ZeroVector,
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid similarity bounds [{0}, {1}]")]
    Bounds(f64, f64),
    #[error("embedding file: {0}")]
    Format(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("betweenness needs at least 3 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("unknown airport `{0}`")]
    UnknownAirport(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("crowding needs at least two departures, got {0}")]
    TooFewDepartures(usize),
    #[error("departure minute {0} outside [0, 1440)")]
    DepartureRange(f64),
    #[error("total passenger weight must be positive")]
    ZeroPassengers,
    #[error("empty input: {0}")]
    Empty(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PanelError {
    #[error("non-positive population {0}")]
    Population(f64),
    #[error("airport `{0}` has no city mapping")]
    UnmappedAirport(String),
    #[error("invalid month {0}")]
    Month(u32),
}

/// Crate-wide error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Econ(#[from] EconError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 2 schema, 3 numerical, 4 config or I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) | Error::Panel(_) => 2,
            Error::Econ(_) | Error::Embed(_) | Error::Network(_) | Error::Metrics(_) => 3,
            Error::Config(_) | Error::Io(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "schema",
            3 => "numerical",
            _ => "config",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
