//! On-disk model document: a versioned JSON envelope holding the task kind,
//! the finalized feature set (so routing is self-contained), and one
//! structural dump per tree.

use serde::{Deserialize, Serialize};

use crate::discretize::{FeatureKind, FeatureMeta, FeatureSet};
use crate::error::SgtError;
use crate::tree::NodeDump;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelTask {
    Classify { classes: u32 },
    Regress,
    Mil,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub format_version: u32,
    pub task: ModelTask,
    pub features: Vec<FeatureMeta>,
    pub trees: Vec<NodeDump>,
}

impl ModelDoc {
    pub fn new(task: ModelTask, features: &FeatureSet, trees: Vec<NodeDump>) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            task,
            features: features.iter().cloned().collect(),
            trees,
        }
    }

    /// Rebuilds the feature set, re-running the constructors so a hand-edited
    /// document cannot smuggle in inconsistent ranges or arities.
    pub fn feature_set(&self) -> Result<FeatureSet, SgtError> {
        let metas = self
            .features
            .iter()
            .map(|m| match m.kind() {
                FeatureKind::Nominal { arity } => FeatureMeta::nominal(m.name(), *arity),
                FeatureKind::Numeric { min, max, bins } => {
                    FeatureMeta::numeric(m.name(), *min, *max, *bins)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        FeatureSet::new(metas)
    }

    pub fn check_version(&self) -> Result<(), SgtError> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(SgtError::InvalidConfig(format!(
                "unsupported model format_version {} (this build reads {})",
                self.format_version, MODEL_FORMAT_VERSION
            )));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(NodeDump::node_count).sum()
    }
}
