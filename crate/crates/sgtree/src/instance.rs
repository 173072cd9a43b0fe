use serde::{Deserialize, Serialize};

/// One feature slot of an instance.
///
/// Nominal values are vocabulary indices; mapping from raw strings happens
/// at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FeatureValue {
    Numeric(f64),
    Nominal(u32),
}

/// A feature vector in schema order.
pub type Instance = Vec<FeatureValue>;
