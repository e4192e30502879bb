use quantagrid::ErrorKind;

/// A failed run, mapped to the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Degenerate(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Config(_) => 2,
            Failure::Degenerate(_) => 3,
        }
    }

    pub fn io(what: impl std::fmt::Display, e: std::io::Error) -> Self {
        Failure::Input(format!("{what}: {e}"))
    }
}

impl From<quantagrid::Error> for Failure {
    fn from(e: quantagrid::Error) -> Self {
        match e.kind() {
            ErrorKind::Input => Failure::Input(e.to_string()),
            ErrorKind::Parameter => Failure::Config(e.to_string()),
            ErrorKind::Degenerate => Failure::Degenerate(e.to_string()),
        }
    }
}

pub type RunResult<T = ()> = Result<T, Failure>;
