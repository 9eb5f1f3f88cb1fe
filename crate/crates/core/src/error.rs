use thiserror::Error;

use crate::multiindex::MultiIndex;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("multi-index {lower} is not componentwise <= {upper}")]
    NotBelow {
        lower: MultiIndex,
        upper: MultiIndex,
    },

    #[error("parts do not sum to {0}")]
    NotAComposition(MultiIndex),

    #[error("integer overflow in combinatorial coefficient")]
    Overflow,

    #[error("semiring order mismatch: {left} vs {right}")]
    OrderMismatch { left: MultiIndex, right: MultiIndex },

    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("line {line}: unknown symbol `{symbol}`")]
    UnknownSymbol { line: usize, symbol: String },

    #[error("line {line}: duplicate rule for `{premise}`")]
    DuplicateRule { line: usize, premise: String },

    #[error("line {line}: feature vector has {found} components, expected {expected}")]
    FeatureDimension {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("grammar is not proper: probabilities of `{nonterminal}` sum to {sum}")]
    NotProper { nonterminal: String, sum: f64 },

    #[error("invalid grammar: {0}")]
    InvalidGrammar(String),

    #[error("unknown feature generator `{0}`")]
    UnknownFeature(String),

    #[error("inconsistent or marginal grammar: ρ(M) = {rho:.6} ≥ 1 − margin")]
    Inconsistent { rho: f64 },

    #[error("linear system is singular (zero pivot in column {0})")]
    SingularPivot(usize),

    #[error("(I − M) is ill-conditioned: reciprocal condition {rcond:e}")]
    IllConditioned { rcond: f64 },

    #[error("moment of order {0} is not available yet")]
    MissingMoment(MultiIndex),

    #[error("grammar is not cycle-free: {0}")]
    Cyclic(String),

    #[error("terminal `{0}` is not in the alphabet")]
    UnknownTerminal(String),

    #[error("unknown nonterminal `{0}`")]
    UnknownNonterminal(String),

    #[error("string has zero inside probability")]
    ZeroInsideProbability,

    #[error("enumeration frontier exceeded {limit} states")]
    FrontierExplosion { limit: usize },
}
