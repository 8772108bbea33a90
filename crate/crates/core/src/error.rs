use thiserror::Error;

use crate::graph::EdgeIndex;

/// Maximum number of offending edges carried by a missing-covariate error.
pub const MISSING_EDGE_REPORT_LIMIT: usize = 100;

#[derive(Debug, Error)]
pub enum PolyadsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid polyad: {0}")]
    InvalidPolyad(String),

    #[error(
        "transform r = {r} leaves the orbit range [{min}, {max}] and would create a negative count"
    )]
    NegativeCount { r: i64, min: i64, max: i64 },

    #[error("missing covariates for {total} edge(s), first {}: {}", .edges.len(), format_edges(.edges))]
    MissingCovariates { edges: Vec<EdgeIndex>, total: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("collinear features: the DiD Gram matrix is singular along {direction:?}")]
    CollinearFeatures { direction: Vec<f64> },

    #[error("resource guard tripped: {0}")]
    ResourceGuard(String),

    #[error("intercept calibration failed: {0}")]
    Calibration(String),

    #[error("subsampling failed: {0}")]
    Subsample(String),

    #[error("meta-analysis failed: {0}")]
    Meta(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("{}: {source}", .path.display())]
    File {
        path: std::path::PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PolyadsError>;

impl PolyadsError {
    /// Builds a missing-covariate error from the full (sorted) list of offending edges.
    pub fn missing_covariates(mut edges: Vec<EdgeIndex>) -> Self {
        let total = edges.len();
        edges.truncate(MISSING_EDGE_REPORT_LIMIT);
        PolyadsError::MissingCovariates { edges, total }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        PolyadsError::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

/// Attaches `path` to an I/O error.
pub(crate) fn file_error(
    path: &std::path::Path,
) -> impl FnOnce(std::io::Error) -> PolyadsError + '_ {
    move |source| PolyadsError::File {
        path: path.to_path_buf(),
        source,
    }
}

fn format_edges(edges: &[EdgeIndex]) -> String {
    edges
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}
