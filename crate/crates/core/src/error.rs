use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed {what}: {message}")]
    Parse { what: &'static str, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("graph contains a cycle through {0:?}")]
    Cycle(Vec<String>),

    #[error("unresolved undirected edges: {}", format_pairs(.0))]
    UnresolvedEdges(Vec<(String, String)>),

    #[error("background knowledge contradiction: {0}")]
    Contradiction(String),

    #[error("degenerate conditional independence test: {0}")]
    DegenerateTest(String),

    #[error("fit error for `{node}`: {message}")]
    Fit { node: String, message: String },

    #[error("intervention error: {0}")]
    Intervention(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("unsupported {format} format version {found} (this build reads up to {supported})")]
    Version {
        format: String,
        found: u32,
        supported: u32,
    },

    #[error("checksum mismatch in {0}: file was modified after it was written")]
    Checksum(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_pairs(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(a, b)| format!("{a}--{b}"))
        .collect::<Vec<_>>()
        .join(", ")
}
