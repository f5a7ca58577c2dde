use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid graph: field `{field}`: {detail}")]
    InvalidGraph { field: &'static str, detail: String },

    #[error("eigenvector centrality did not converge for {graph} after {iters} iterations")]
    NoConvergence { graph: String, iters: usize },

    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("label error: {0}")]
    Label(String),

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGrad(String),

    #[error("training diverged at epoch {0} (loss is not finite)")]
    Diverged(usize),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("degenerate fit: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape {
        op,
        detail: detail.into(),
    }
}
