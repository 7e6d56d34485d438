use std::fmt;

use thiserror::Error;

/// A single violated constraint in a market configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub constraint: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            constraint: constraint.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.constraint)
    }
}

/// Every violation found while validating a configuration, in field order.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid market configuration: {}", join_violations(.0))]
pub struct ValidationError(pub Vec<Violation>);

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch for {what}: expected {expected}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("provider index {index} out of range (market has {len} providers)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("coalition must contain at least one provider")]
    EmptyCoalition,

    #[error("provider {0} appears more than once in the coalition")]
    DuplicateMember(usize),

    #[error("invalid bracket [{lo}, {hi}]: need finite lo < hi")]
    InvalidBracket { lo: f64, hi: f64 },

    #[error("objective returned a non-finite value at {at:?}")]
    NonFiniteObjective { at: Vec<f64> },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("no agreement: grand-coalition value {grand} is below total disagreement payoff {disagreement}")]
    Infeasible { grand: f64, disagreement: f64 },

    #[error("characteristic function is missing a value for coalition {0:?}")]
    IncompleteGame(Vec<usize>),

    #[error("optimization did not converge: {0}")]
    NotConverged(String),

    #[error(transparent)]
    Validation(#[from] ValidationError),
}

pub type Result<T, E = MarketError> = std::result::Result<T, E>;
