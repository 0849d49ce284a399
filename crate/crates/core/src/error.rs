use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid contest {contest}: {reason}")]
    InvalidContest { contest: String, reason: String },

    #[error("invalid audit configuration: {0}")]
    InvalidConfig(String),

    #[error("contest {0} has no cast-vote records")]
    NoRecords(String),

    #[error("consistency check failed: {0}")]
    Fatal(String),

    #[error("CVR tabulation disagrees with reported winners for: {}", .0.join(", "))]
    WinnerMismatch(Vec<String>),

    #[error("assertions unavailable for IRV contest {0}")]
    AssertionsUnavailable(String),

    #[error("duplicate card id {0}")]
    DuplicateCard(String),

    #[error("duplicate sample number for cards {0} and {1}")]
    SampleNumberCollision(String, String),

    #[error("target {target} exceeds {cards} cards for contest {contest}")]
    TargetTooLarge {
        contest: String,
        target: u64,
        cards: u64,
    },

    #[error("observed value {value} outside [0, {bound}]")]
    ValueOutOfRange { value: f64, bound: f64 },

    #[error("population exhausted: {drawn} of {population} draws consumed")]
    PopulationExhausted { drawn: u64, population: u64 },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("unknown card ids: {}", .0.join(", "))]
    UnknownCards(Vec<String>),

    #[error("cards not selected for audit: {}", .0.join(", "))]
    UnselectedCards(Vec<String>),

    #[error("unknown contest {0}")]
    UnknownContest(String),

    #[error("contest {contest} is {status}, not active")]
    NotActive { contest: String, status: String },

    #[error("audit complete")]
    AuditComplete,

    #[error("no round has been planned")]
    NoRound,

    #[error("round {0} does not exist")]
    UnknownRound(usize),

    #[error("round {0} is still open; measure it before planning another")]
    RoundOpen(usize),

    #[error("every card of {} has been audited; escalate to a full hand count", .0.join(", "))]
    SampleExhausted(Vec<String>),

    #[error("invalid target for contest {contest}: {reason}")]
    InvalidTarget { contest: String, reason: String },

    #[error("seed is not set")]
    MissingSeed,

    #[error("seed mismatch: state was sampled with a different seed")]
    SeedMismatch,

    #[error("MVR file {0} was already imported")]
    AlreadyImported(String),

    #[error("state directory {0} is locked by another process")]
    Locked(PathBuf),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
