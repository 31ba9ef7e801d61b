use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("word reduces to the identity")]
    TrivialWord,
    #[error("images do not form a basis: {0}")]
    NotABasis(String),
    #[error("edge {0} has non-positive length")]
    NonPositiveLength(String),
    #[error("graph is disconnected")]
    DisconnectedGraph,
    #[error("malformed input: {0}")]
    Parse(String),
    #[error("marking mismatch: {0}")]
    MarkingMismatch(String),
    #[error("edge {0} has a degenerate image")]
    DegenerateEdge(usize),
    #[error("no folding: every speed is zero")]
    NoFolding,
    #[error("no illegal turns")]
    NoIllegalTurns,
    #[error("time {0} is beyond the next event {1}")]
    TimeBeyondEvent(String, String),
    #[error("path stalled: {0}")]
    StalledPath(String),
    #[error("map is not in full tension")]
    PartialTension,
    #[error("fiber excursion exceeded bound {0}")]
    ExcursionBoundExceeded(String),
    #[error("certificate failure: {0}")]
    CertificateFailure(String),
    #[error("malformed fiber tree: {0}")]
    MalformedTree(String),
    #[error("bad scene parameters: {0}")]
    BadParams(String),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Errors that mean an internal certificate did not hold.
    pub fn is_certificate(&self) -> bool {
        matches!(
            self,
            Error::CertificateFailure(_) | Error::ExcursionBoundExceeded(_) | Error::MalformedTree(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
