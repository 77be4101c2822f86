use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input failed validation. `field` names the offending parameter or index.
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {component}")]
    NonFinite { component: &'static str },

    #[error("center ({0}, {1}) is not inside the mask")]
    CenterOutsideMask(f64, f64),

    #[error("unsupported prior: {0}")]
    UnsupportedPrior(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("cancelled")]
    Cancelled,
}

impl Error {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input rather than runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. }
                | Error::LengthMismatch { .. }
                | Error::Parse(_)
                | Error::UnsupportedPrior(_)
                | Error::UnsupportedFormat(_)
                | Error::CenterOutsideMask(..)
        )
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { what, expected, got })
    }
}
