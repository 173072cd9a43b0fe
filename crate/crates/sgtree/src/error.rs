use thiserror::Error;

/// Errors reported by the tree learner and its task heads.
#[derive(Debug, Error)]
pub enum SgtError {
    #[error("non-finite value: {context} = {value}")]
    NonFinite { context: &'static str, value: f64 },

    #[error("instance has {got} features, schema declares {expected}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("feature `{name}`: expected a {expected} value")]
    KindMismatch { name: String, expected: &'static str },

    #[error("feature `{name}`: nominal value {value} out of range (arity {arity})")]
    NominalOutOfRange { name: String, value: u32, arity: u32 },

    #[error("class label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("range warm-up already complete ({target} instances absorbed)")]
    WarmupComplete { target: u64 },

    #[error("bag must contain at least one instance")]
    EmptyBag,

    #[error("{0}")]
    InvalidConfig(String),
}
