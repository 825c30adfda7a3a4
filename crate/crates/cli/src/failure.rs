use std::fmt;

use vocabdiff::Error;

/// Exit code for input the user can fix.
pub const EXIT_USER: u8 = 1;
/// Exit code for failures inside the tool or its environment.
pub const EXIT_INTERNAL: u8 = 2;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub type CliResult<T> = Result<T, Failure>;

pub fn user(msg: impl fmt::Display) -> Failure {
    Failure {
        code: EXIT_USER,
        error: anyhow::anyhow!("{msg}"),
    }
}

pub fn internal(msg: impl fmt::Display) -> Failure {
    Failure {
        code: EXIT_INTERNAL,
        error: anyhow::anyhow!("{msg}"),
    }
}

impl Failure {
    pub fn context(self, ctx: impl fmt::Display) -> Self {
        Failure {
            code: self.code,
            error: self.error.context(ctx.to_string()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Diverged { .. }
            | Error::Fold { .. }
            | Error::Network(_)
            | Error::Protocol(_)
            | Error::Io(_) => EXIT_INTERNAL,
            _ => EXIT_USER,
        };
        Failure {
            code,
            error: e.into(),
        }
    }
}

/// Attaches a location (usually a path) to library errors.
pub trait At<T> {
    fn at(self, what: impl fmt::Display) -> CliResult<T>;
}

impl<T> At<T> for vocabdiff::Result<T> {
    fn at(self, what: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| Failure::from(e).context(what))
    }
}
