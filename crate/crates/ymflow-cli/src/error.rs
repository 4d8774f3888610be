use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ymflow::Error),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{0}")]
    Usage(String),

    #[error(
        "constants file {} not found; C_mode=csym needs precomputed constants, generate them with \
         `ymflow renorm-constants --eps {eps} --mollifier {mollifier} --algebra {algebra} --out {}`",
        path.display(),
        path.display()
    )]
    MissingConstants {
        path: PathBuf,
        eps: f64,
        mollifier: String,
        algebra: String,
    },

    #[error("no entry for eps = {eps} and mollifier {mollifier} in {}", path.display())]
    NoMatchingConstants { path: PathBuf, eps: f64, mollifier: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
