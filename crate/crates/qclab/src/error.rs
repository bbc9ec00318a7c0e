use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {constraint}")]
    InvalidParameter {
        name: String,
        value: String,
        constraint: String,
    },

    #[error("invalid configuration: {}", join(.0))]
    Config(Vec<Error>),

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("resource cap exceeded: {what} needs {needed}, cap is {cap}")]
    ResourceCap {
        what: String,
        needed: usize,
        cap: usize,
    },

    #[error("point {0} lies outside the graph coverage")]
    Coverage(String),

    #[error("nodes {0} and {1} are not adjacent")]
    NotAdjacent(u32, u32),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn join(errors: &[Error]) -> String {
    errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(name: &str, value: impl std::fmt::Display, constraint: &str) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            value: value.to_string(),
            constraint: constraint.to_string(),
        }
    }
}
