use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("a Segre shape needs at least one factor")]
    EmptyShape,
    #[error("statement has {a_len} partial counts for {k} factors")]
    LengthMismatch { k: usize, a_len: usize },
    #[error("integer overflow while evaluating {0}")]
    Overflow(&'static str),
    #[error("statements have different factor counts ({0} vs {1})")]
    FactorCountMismatch(usize, usize),
    #[error("factor index {index} out of range for {k} factors")]
    FactorIndex { index: usize, k: usize },
    #[error("matrix of {rows}x{cols} = {entries} entries exceeds the cap of {cap}")]
    MemoryCap {
        rows: usize,
        cols: usize,
        entries: u128,
        cap: u64,
    },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("statement {0} has no zero-dimensional factor")]
    NoZeroFactor(String),
    #[error("reduction tree is not eligible: leaves have mixed abundance")]
    Ineligible,
    #[error("{0}")]
    Hypothesis(String),
}
