use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("line {line}: symbol `{symbol}` has arity {expected}, got {found} arguments")]
    ArityMismatch {
        line: usize,
        symbol: String,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: undeclared symbol `{symbol}`")]
    UndeclaredSymbol { line: usize, symbol: String },

    #[error("line {line}: {message}")]
    InvalidRule { line: usize, message: String },

    /// An MMSNP sentence violated one of the syntactic restrictions of the class.
    #[error("line {line}: {rule} violated: {message}")]
    NotMmsnp {
        line: usize,
        rule: MmsnpRule,
        message: String,
    },

    #[error("signature mismatch: {0}")]
    SignatureMismatch(String),

    #[error("cap exceeded: {0}")]
    CapExceeded(String),

    #[error("budget of {0} steps exceeded")]
    BudgetExceeded(u64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported for this template: {0}")]
    Unsupported(String),
}

/// The restriction an MMSNP sentence broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmsnpRule {
    Monadic,
    Monotone,
    NoInequality,
}

impl std::fmt::Display for MmsnpRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MmsnpRule::Monadic => write!(f, "monadicity"),
            MmsnpRule::Monotone => write!(f, "monotonicity"),
            MmsnpRule::NoInequality => write!(f, "no-inequality"),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
