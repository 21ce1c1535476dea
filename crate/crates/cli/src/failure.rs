use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use skeltop_core::Error;

/// A core error together with the input file it came from, if any.
#[derive(Debug)]
pub struct Failure {
    pub file: Option<PathBuf>,
    pub error: Error,
}

/// JSON form of a failure, used for per-entry errors in batch output.
#[derive(Debug, Serialize)]
pub struct FailureReport {
    pub class: &'static str,
    pub message: String,
}

impl Failure {
    pub fn at(file: &Path) -> impl FnOnce(Error) -> Failure + '_ {
        move |error| Failure {
            file: Some(file.to_path_buf()),
            error,
        }
    }

    pub fn usage(reason: impl Into<String>) -> Failure {
        Failure {
            file: None,
            error: Error::InvalidParameter {
                name: "arguments",
                reason: reason.into(),
            },
        }
    }

    pub fn param(name: &'static str, reason: impl Into<String>) -> Failure {
        Failure {
            file: None,
            error: Error::InvalidParameter {
                name,
                reason: reason.into(),
            },
        }
    }

    /// 1 for filesystem problems, 2 for everything the user can fix in the inputs.
    pub fn exit_code(&self) -> u8 {
        if self.error.is_io() {
            1
        } else {
            2
        }
    }

    pub fn report(&self) -> FailureReport {
        FailureReport {
            class: self.error.class(),
            message: self.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure { file: None, error }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.file {
            // io errors already carry their path
            Some(p) if !self.error.is_io() => write!(f, "{}: {}", p.display(), self.error),
            _ => write!(f, "{}", self.error),
        }
    }
}
