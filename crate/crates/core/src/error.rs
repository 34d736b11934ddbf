use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("series has {} missing date(s): {}", .missing.len(), fmt_dates(.missing))]
    Gap { missing: Vec<NaiveDate> },

    #[error("duplicate document date {0}")]
    Duplicate(NaiveDate),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("vocabulary is empty after frequency filtering")]
    EmptyVocab,

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("index {index} out of range for vocabulary of size {vocab_size}")]
    Index { index: usize, vocab_size: usize },

    #[error("no sample is out-of-bag for any tree")]
    Coverage,

    #[error("batch normalization used in inference mode before any training step")]
    Stats,

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("MAPE undefined: actual value is zero at position {0}; use the guarded variant")]
    ZeroDivision(usize),

    #[error("guarded selection kept no points")]
    EmptySelection,

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("word not in vocabulary: {0}")]
    Lookup(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn fmt_dates(dates: &[NaiveDate]) -> String {
    const SHOWN: usize = 10;
    let mut s = dates
        .iter()
        .take(SHOWN)
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    if dates.len() > SHOWN {
        s.push_str(", ...");
    }
    s
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
