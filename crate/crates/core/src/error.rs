use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("invalid variable name `{0}`")]
    InvalidName(String),
    #[error("variable `{0}` must have cardinality >= 1")]
    InvalidCardinality(String),
    #[error("value {value} out of range for `{variable}` (cardinality {cardinality})")]
    ValueOutOfRange {
        variable: String,
        value: usize,
        cardinality: usize,
    },
    #[error("expected {expected} entries, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
    #[error("total mass {0} is not within tolerance of 1")]
    NotNormalized(f64),
    #[error("distribution has zero total mass")]
    ZeroMass,
    #[error("unsupported evidence: {0} has zero probability")]
    UnsupportedEvidence(String),
    #[error("variable sets overlap on `{0}`")]
    OverlappingSets(String),
    #[error("variable lists differ: {0}")]
    VariableMismatch(String),
    #[error("table too large: {required} cells required")]
    TableTooLarge { required: u128 },

    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("self-loop on `{0}`")]
    SelfLoop(String),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(String, String),
    #[error("graph has a cycle through `{0}`")]
    Cycle(String),
    #[error("node sets differ: {0}")]
    NodeMismatch(String),

    #[error("invalid agent model: {0}")]
    InvalidModel(String),
    #[error("expected exactly {expected} observables, found {found}")]
    ObservableCount { expected: usize, found: usize },
    #[error("models disagree on observables: max cell discrepancy {max_diff:e}")]
    ModelsDisagree { max_diff: f64 },
    #[error("exact search takes 2 observables, found {0}; chunk them into two blocks first")]
    NeedsChunking(usize),
    #[error("invalid label map: {0}")]
    InvalidLabelMap(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("rule inapplicable: {0}")]
    RuleInapplicable(String),
    #[error("unbound name `{0}`")]
    UnboundName(String),
    #[error("name `{0}` is already bound")]
    NameTaken(String),

    #[error("derivation does not establish the claim: {0}")]
    NotEstablished(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    AtLine { line: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

impl Error {
    pub(crate) fn at_line(self, line: usize) -> Self {
        match self {
            Error::Parse { .. } | Error::AtLine { .. } => self,
            other => Error::AtLine {
                line,
                source: Box::new(other),
            },
        }
    }

    /// The error with any line annotation stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtLine { source, .. } => source.root(),
            other => other,
        }
    }
}
