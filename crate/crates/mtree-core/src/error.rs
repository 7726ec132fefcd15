//! Error types shared across the crate.

use num::BigInt;
use thiserror::Error;

/// Errors from tokenizing, parsing, or exactly evaluating an expression.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown placeholder N{index}")]
    UnknownPlaceholder { index: usize },
    #[error("division by zero")]
    DivisionByZero,
    #[error("exponent must evaluate to an integer, got {got}")]
    NonIntegerExponent { got: String },
    #[error("exponent {exponent} out of range (|exponent| <= {limit})")]
    ExponentOutOfRange { exponent: BigInt, limit: u32 },
}

/// Errors from rewriting an expression into the canonical sum form.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CanonError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("zero denominator at an atomic factor")]
    ZeroDenominator,
    #[error("zero denominator: compound divisor sums to zero")]
    ZeroDenominatorSum,
    #[error("multilinear expansion exceeds {limit} terms")]
    ExpansionTooLarge { limit: usize },
}

/// Errors from evaluating an MTree.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MTreeError {
    #[error("reciprocal of zero")]
    ReciprocalOfZero,
}

/// A gold expression that fails anywhere in the pipeline. Gold-side failures
/// are caller errors (such samples must be excluded at ingestion), unlike
/// prediction-side failures, which are recorded in the sample score.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GoldError {
    #[error("gold expression: {0}")]
    Expr(#[from] ExprError),
    #[error("gold expression: {0}")]
    Canon(#[from] CanonError),
    #[error("gold expression: {0}")]
    MTree(#[from] MTreeError),
}

/// Errors from aggregating sample scores.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("cannot aggregate an empty score list")]
    EmptyAggregate,
}

/// File-level dataset ingestion failures. Per-record problems are not
/// errors; they land in the exclusion report.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("invalid JSON in {path}: {msg}")]
    Json { path: String, msg: String },
    #[error("schema mismatch in {path}: {msg}")]
    Schema { path: String, msg: String },
}
