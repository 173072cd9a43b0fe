//! Incremental gradient trees for streaming data.
//!
//! The core learner ([`SgTree`]) grows a single decision tree online: every
//! labeled instance contributes a gradient/Hessian pair for the current loss,
//! leaves accumulate per-feature histograms of those pairs, and at fixed
//! intervals a leaf either splits, adjusts its prediction, or waits — chosen
//! by a regularized second-order loss estimate and gated by a t-test on the
//! per-instance loss changes.
//!
//! Task heads compose the learner with a loss: [`Committee`] for multiclass
//! classification (one tree per class, the last hard-wired to zero),
//! [`Regressor`] for squared error, and [`MilTrainer`] for multi-instance
//! bags under a max-pooled binary cross-entropy.

pub mod discretize;
pub mod error;
pub mod ghstats;
pub mod instance;
pub mod losses;
pub mod model;
pub mod shuffle;
pub mod tasks;
pub mod tdist;
pub mod tree;

pub use discretize::{FeatureDecl, FeatureKind, FeatureMeta, FeatureSet, FeatureSpec, RangeEstimator};
pub use error::SgtError;
pub use ghstats::{GradHessPair, GradHessStats};
pub use instance::{FeatureValue, Instance};
pub use model::{ModelDoc, ModelTask, MODEL_FORMAT_VERSION};
pub use tasks::{predict_bag, BagExample, Committee, MilTrainer, Regressor};
pub use tree::{
    leaf_value, CandidateKind, NodeDump, NodeId, Routed, SgTree, SgtConfig, SplitCandidate,
    SplitKind, SplitOutcome,
};
