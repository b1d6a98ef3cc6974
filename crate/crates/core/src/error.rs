use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("plant config: missing or invalid field `{field}` on {node}")]
    MissingField { node: String, field: String },
    #[error("plant config: {0}")]
    Config(String),
    #[error("plant topology: {0}")]
    Topology(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("unknown equipment `{0}`")]
    UnknownEquipment(String),
    #[error("invalid bale mix: {0}")]
    InvalidMix(String),
    #[error("malformed LP model: {0}")]
    Model(String),
    #[error("LP solve failed: {0}")]
    Solver(String),
    #[error("no infeasibility certificate: {0}")]
    NotInfeasible(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid experiment spec: field `{field}`: {reason}")]
    Spec { field: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
