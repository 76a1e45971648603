use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("insufficient-class-samples: conditional mean for label {label} is absent")]
    InsufficientClassSamples { label: u8 },

    #[error("positives-starved: {found} positive examples, floor is {floor}")]
    PositivesStarved { found: usize, floor: usize },

    #[error("budget-overflow: required sample count {value:e} does not fit the count type")]
    BudgetOverflow { value: f64 },

    #[error("sample budget {required} exceeds the theory-mode cap {cap}")]
    BudgetExceedsCap { required: u128, cap: u128 },

    #[error("dimension-too-large: n = {n} exceeds the exact-table limit {max}")]
    DimensionTooLarge { n: usize, max: usize },

    #[error("empty-condition: conditioning event has zero mass")]
    EmptyCondition,

    #[error("search-too-large: {count} candidates exceed the cap {cap}")]
    SearchTooLarge { count: u128, cap: u128 },

    #[error("table is not a probability distribution: {0}")]
    NotADistribution(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
