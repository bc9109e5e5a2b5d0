use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error("planning error: {0}")]
    Planning(String),

    #[error("stale plan: planned against placement version {planned}, current is {current}")]
    Conflict { planned: u64, current: u64 },

    #[error("ingestion error: {0}")]
    Ingest(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("at tick {tick}: {source}")]
    AtTick {
        tick: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn at_tick(self, tick: u64) -> Self {
        Error::AtTick {
            tick,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad configuration or input rather than by a
    /// failure while running.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidArgument(_) | Error::Schema(_) | Error::Parse { .. }
        )
    }
}
