use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate observables: {0}")]
    Degenerate(String),
    #[error("tagged fraction {e_src:e} is not below the gain {gain:e}")]
    TaggedDominated { gain: f64, e_src: f64 },
    #[error("optimizer did not converge: {0}")]
    NotConverged(String),
    #[error("resource limit exceeded: {0}")]
    Limit(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(msg()))
    }
}
