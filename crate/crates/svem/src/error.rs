use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum SvemError {
    #[error("config schema error for factor `{factor}`: {reason}")]
    Schema { factor: String, reason: String },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("term error: {0}")]
    Term(String),

    #[error("row {row}: factor `{factor}` value {value} outside [{low}, {high}]")]
    OutOfRange {
        row: usize,
        factor: String,
        value: f64,
        low: f64,
        high: f64,
    },

    #[error("row {row}: unknown level `{level}` for categorical factor `{factor}`")]
    UnknownLevel {
        row: usize,
        factor: String,
        level: String,
    },

    #[error("infeasible mixture bounds: {0}")]
    InfeasibleBounds(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("whole-model F test needs n > p: n = {n}, p = {p}")]
    InsufficientDof { n: usize, p: usize },

    #[error("ensemble member {member}: {source}")]
    Member {
        member: usize,
        #[source]
        source: Box<SvemError>,
    },

    #[error("refit {index}: {source}")]
    Refit {
        index: usize,
        #[source]
        source: Box<SvemError>,
    },

    #[error("response `{response}`: {source}")]
    Response {
        response: String,
        #[source]
        source: Box<SvemError>,
    },

    #[error("ingest error at data row {row}, column `{column}`: {reason}")]
    Ingest {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl SvemError {
    pub(crate) fn for_member(self, member: usize) -> Self {
        SvemError::Member {
            member,
            source: Box::new(self),
        }
    }

    pub(crate) fn for_refit(self, index: usize) -> Self {
        SvemError::Refit {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn for_response(self, response: &str) -> Self {
        SvemError::Response {
            response: response.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, SvemError>;
