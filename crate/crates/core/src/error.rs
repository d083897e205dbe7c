use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("segments {0} and {1} cross or overlap")]
    CrossingSegments(usize, usize),
    #[error("segments {0} and {1} are duplicates")]
    DuplicateSegments(usize, usize),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("triangulation failed: {0}")]
    Triangulation(String),
    #[error("refinement exceeded the vertex budget ({vertices} vertices)")]
    RefinementBudget { vertices: usize },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing section: {0}")]
    MissingSection(String),
    #[error("generator gave up after placing {achieved} of {requested} items")]
    RejectionBudget { achieved: usize, requested: usize },
    #[error("traversal error: {0}")]
    Traversal(String),
    #[error("hit mismatch for {method} on ray {ray}: {detail}")]
    HitMismatch { method: String, ray: usize, detail: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("svg: {0}")]
    Svg(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
