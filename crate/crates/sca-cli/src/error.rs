//! CLI error taxonomy and the exit-code contract: 1 for configuration
//! problems, 2 for file and format problems, 3 for numerical failures.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path} at byte {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error(transparent)]
    Core(#[from] sca_core::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// Maps every failure to the documented exit codes. Core errors are
    /// split by family: numerical breakdowns exit 3, data-level problems
    /// surfaced from files exit 2, and parameter validation exits 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io { .. } | CliError::Format { .. } => 2,
            CliError::Core(e) => match e {
                sca_core::Error::NonFinite { .. }
                | sca_core::Error::SingularTransform { .. }
                | sca_core::Error::SingularSystem { .. } => 3,
                sca_core::Error::EmptyCodebook { .. } => 2,
                _ => 1,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(CliError::Config("bad".into()).exit_code(), 1);
        assert_eq!(
            CliError::Io {
                path: "x".into(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "gone"),
            }
            .exit_code(),
            2
        );
        assert_eq!(
            CliError::Format {
                path: "x".into(),
                offset: 4,
                message: "bad magic".into(),
            }
            .exit_code(),
            2
        );
        assert_eq!(
            CliError::Core(sca_core::Error::SingularTransform { sigma_min: 0.0 }).exit_code(),
            3
        );
        assert_eq!(
            CliError::Core(sca_core::Error::EmptyCodebook {
                context: "index build",
            })
            .exit_code(),
            2
        );
        assert_eq!(
            CliError::Core(sca_core::Error::InvalidParameter {
                name: "s_x",
                reason: "zero".into(),
            })
            .exit_code(),
            1
        );
    }
}
