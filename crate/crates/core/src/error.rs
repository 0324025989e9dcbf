use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A simulation input is malformed (agent count, sender index, channel).
    #[error("configuration error: {0}")]
    Config(String),

    /// Derived stage-I parameters do not satisfy `f > beta > s`.
    #[error("constants ordering violated: {inequality} (f={f}, beta={beta}, s={s})")]
    ConstantsOrdering {
        inequality: &'static str,
        f: u64,
        beta: u64,
        s: u64,
    },

    #[error("initial set too small: |A|={size} but at least {required} agents are needed")]
    InitialSetTooSmall { size: usize, required: usize },

    /// Broken internal bookkeeping; never expected on valid input.
    #[error("protocol invariant violated: {0}")]
    Protocol(String),

    /// An argument lies outside the domain of an oracle computation.
    #[error("argument error: {0}")]
    Argument(String),

    #[error("invalid experiment spec: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("{}: parse error at line {line}, column {column}{}: {message}", path.display(), field_context(.field))]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        field: Option<String>,
        message: String,
    },

    #[error("{}: unsupported schemaVersion {found} (expected {expected})", path.display())]
    SchemaVersion {
        path: PathBuf,
        found: String,
        expected: u32,
    },

    #[error("refusing to save an experiment report with no cells")]
    EmptyReport,

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

fn field_context(field: &Option<String>) -> String {
    match field {
        Some(f) => format!(" (field `{f}`)"),
        None => String::new(),
    }
}

impl Error {
    /// True for errors caused by bad user input rather than the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::Csv { .. } | Error::Protocol(_)
        )
    }
}
