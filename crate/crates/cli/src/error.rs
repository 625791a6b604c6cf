use std::path::Path;

use serde_json::json;
use thiserror::Error;

use secdetect::designers::DesignError;
use secdetect::etf_construction::EtfError;
use secdetect::linalg_frames::LinalgError;
use secdetect::matrix_file::MatrixFileError;
use secdetect::secrecy_model::SecrecyError;
use secdetect::simulator::SimError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
            CliError::Io { .. } => "io",
        }
    }

    /// One-line JSON record for stderr.
    pub fn record(&self) -> String {
        let mut value = json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        if let CliError::Io { path, .. } = self {
            value["path"] = json!(path);
        }
        value.to_string()
    }
}

impl From<LinalgError> for CliError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::BadShape { .. } | LinalgError::DimensionMismatch { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<SecrecyError> for CliError {
    fn from(e: SecrecyError) -> Self {
        match e {
            SecrecyError::InvalidProfile(_)
            | SecrecyError::InvalidScenario(_)
            | SecrecyError::DimensionMismatch { .. } => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<DesignError> for CliError {
    fn from(e: DesignError) -> Self {
        match e {
            DesignError::Linalg(inner) => inner.into(),
            DesignError::Secrecy(inner) => inner.into(),
            DesignError::Etf(inner) => inner.into(),
            DesignError::InvalidDimensions(_)
            | DesignError::BasisNotOrthonormal { .. }
            | DesignError::TooLarge { .. } => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<EtfError> for CliError {
    fn from(e: EtfError) -> Self {
        match e {
            EtfError::Linalg(inner) => inner.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) => CliError::Config(e.to_string()),
            SimError::Linalg(inner) => inner.into(),
            SimError::Secrecy(inner) => inner.into(),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<MatrixFileError> for CliError {
    fn from(e: MatrixFileError) -> Self {
        match e {
            MatrixFileError::Io { path, source } => CliError::Io {
                path,
                message: source.to_string(),
            },
            parse @ MatrixFileError::Parse { .. } => CliError::Config(parse.to_string()),
        }
    }
}
