//! Dataset schema sidecar: a small JSON file describing the columns of a
//! training CSV — feature kinds, nominal vocabularies, optional known numeric
//! ranges, the target column, and (for bag-labeled data) the bag id column.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sgtree::FeatureDecl;

pub const SCHEMA_FORMAT_VERSION: u32 = 1;

/// Raw sidecar layout as written on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaFile {
    pub format_version: u32,
    pub features: Vec<SchemaFeature>,
    pub target: SchemaTarget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bag_id: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaFeature {
    pub name: String,
    pub kind: SchemaFeatureKind,
    /// Nominal vocabulary, in index order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
    /// Known numeric range; both ends or neither.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaFeatureKind {
    Numeric,
    Nominal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaTarget {
    pub name: String,
    pub kind: TargetKind,
    /// Class labels in index order (class targets); for bag labels, the
    /// [negative, positive] pair, defaulting to ["0", "1"].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Class,
    Numeric,
    BagLabel,
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetKind::Class => "class",
            TargetKind::Numeric => "numeric",
            TargetKind::BagLabel => "bag_label",
        })
    }
}

/// A validated schema, ready to type-check CSV cells.
#[derive(Debug, Clone)]
pub struct Schema {
    features: Vec<Feature>,
    target: Target,
    bag_id: Option<String>,
}

#[derive(Debug, Clone)]
struct Feature {
    name: String,
    kind: FeatureShape,
}

#[derive(Debug, Clone)]
enum FeatureShape {
    Numeric { range: Option<(f64, f64)> },
    Nominal { values: Vec<String> },
}

#[derive(Debug, Clone)]
pub enum Target {
    Class { name: String, values: Vec<String> },
    Numeric { name: String },
    BagLabel { name: String, values: [String; 2] },
}

impl Target {
    pub fn name(&self) -> &str {
        match self {
            Target::Class { name, .. } | Target::Numeric { name } | Target::BagLabel { name, .. } => {
                name
            }
        }
    }

    pub fn kind(&self) -> TargetKind {
        match self {
            Target::Class { .. } => TargetKind::Class,
            Target::Numeric { .. } => TargetKind::Numeric,
            Target::BagLabel { .. } => TargetKind::BagLabel,
        }
    }
}

impl Schema {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading schema {}", path.display()))?;
        let file: SchemaFile = serde_json::from_str(&text)
            .with_context(|| format!("parsing schema {}", path.display()))?;
        Self::from_file(file).with_context(|| format!("validating schema {}", path.display()))
    }

    pub fn from_file(file: SchemaFile) -> Result<Self> {
        if file.format_version != SCHEMA_FORMAT_VERSION {
            bail!(
                "unsupported schema format_version {} (this build reads {})",
                file.format_version,
                SCHEMA_FORMAT_VERSION
            );
        }
        if file.features.is_empty() {
            bail!("schema declares no features");
        }
        let mut seen = HashSet::new();
        let mut features = Vec::with_capacity(file.features.len());
        for f in &file.features {
            if !seen.insert(f.name.clone()) {
                bail!("duplicate column name `{}`", f.name);
            }
            let kind = match f.kind {
                SchemaFeatureKind::Numeric => {
                    if f.values.is_some() {
                        bail!("numeric feature `{}` must not list nominal values", f.name);
                    }
                    let range = match (f.min, f.max) {
                        (Some(min), Some(max)) => {
                            if !(min.is_finite() && max.is_finite() && min < max) {
                                bail!(
                                    "feature `{}` needs a finite range with min < max, got [{min}, {max}]",
                                    f.name
                                );
                            }
                            Some((min, max))
                        }
                        (None, None) => None,
                        _ => bail!("feature `{}` sets only one end of its range", f.name),
                    };
                    FeatureShape::Numeric { range }
                }
                SchemaFeatureKind::Nominal => {
                    if f.min.is_some() || f.max.is_some() {
                        bail!("nominal feature `{}` must not declare a numeric range", f.name);
                    }
                    let values = f
                        .values
                        .clone()
                        .filter(|v| v.len() >= 2)
                        .with_context(|| {
                            format!("nominal feature `{}` needs at least two values", f.name)
                        })?;
                    let mut uniq = HashSet::new();
                    for v in &values {
                        if !uniq.insert(v) {
                            bail!("nominal feature `{}` repeats value `{v}`", f.name);
                        }
                    }
                    FeatureShape::Nominal { values }
                }
            };
            features.push(Feature { name: f.name.clone(), kind });
        }
        if !seen.insert(file.target.name.clone()) {
            bail!("target column `{}` collides with a feature", file.target.name);
        }
        let target = match file.target.kind {
            TargetKind::Class => {
                let values = file
                    .target
                    .values
                    .clone()
                    .filter(|v| v.len() >= 2)
                    .context("class target needs at least two values")?;
                let mut uniq = HashSet::new();
                for v in &values {
                    if !uniq.insert(v) {
                        bail!("class target repeats value `{v}`");
                    }
                }
                Target::Class { name: file.target.name.clone(), values }
            }
            TargetKind::Numeric => {
                if file.target.values.is_some() {
                    bail!("numeric target must not list values");
                }
                Target::Numeric { name: file.target.name.clone() }
            }
            TargetKind::BagLabel => {
                let values = match file.target.values.clone() {
                    None => ["0".to_string(), "1".to_string()],
                    Some(v) => match <[String; 2]>::try_from(v) {
                        Ok(pair) if pair[0] != pair[1] => pair,
                        _ => bail!("bag_label target needs exactly two distinct values"),
                    },
                };
                Target::BagLabel { name: file.target.name.clone(), values }
            }
        };
        let bag_id = match (&file.bag_id, file.target.kind) {
            (Some(col), TargetKind::BagLabel) => {
                if !seen.insert(col.clone()) {
                    bail!("bag_id column `{col}` collides with another column");
                }
                Some(col.clone())
            }
            (None, TargetKind::BagLabel) => bail!("bag_label target requires a bag_id column"),
            (Some(_), _) => bail!("bag_id only applies to bag_label targets"),
            (None, _) => None,
        };
        Ok(Self { features, target, bag_id })
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn bag_id(&self) -> Option<&str> {
        self.bag_id.as_deref()
    }

    /// Number of classes for a class target.
    pub fn class_count(&self) -> Option<u32> {
        match &self.target {
            Target::Class { values, .. } => Some(values.len() as u32),
            _ => None,
        }
    }

    pub fn class_name(&self, index: u32) -> Option<&str> {
        match &self.target {
            Target::Class { values, .. } => values.get(index as usize).map(String::as_str),
            _ => None,
        }
    }

    /// Feature declarations for the learner, in schema order.
    pub fn decls(&self) -> Vec<FeatureDecl> {
        self.features
            .iter()
            .map(|f| match &f.kind {
                FeatureShape::Numeric { range: Some((min, max)) } => {
                    FeatureDecl::numeric_known(&f.name, *min, *max)
                }
                FeatureShape::Numeric { range: None } => FeatureDecl::numeric(&f.name),
                FeatureShape::Nominal { values } => {
                    FeatureDecl::nominal(&f.name, values.len() as u32)
                }
            })
            .collect()
    }

    /// Parses one feature cell.
    pub fn parse_feature(&self, index: usize, raw: &str) -> Result<sgtree::FeatureValue> {
        let feature = &self.features[index];
        match &feature.kind {
            FeatureShape::Numeric { .. } => {
                let v: f64 = raw
                    .trim()
                    .parse()
                    .with_context(|| format!("column `{}`: not a number: `{raw}`", feature.name))?;
                if !v.is_finite() {
                    bail!("column `{}`: non-finite value `{raw}`", feature.name);
                }
                Ok(sgtree::FeatureValue::Numeric(v))
            }
            FeatureShape::Nominal { values } => {
                let raw = raw.trim();
                match values.iter().position(|v| v == raw) {
                    Some(i) => Ok(sgtree::FeatureValue::Nominal(i as u32)),
                    None => bail!("column `{}`: unknown nominal value `{raw}`", feature.name),
                }
            }
        }
    }

    /// Parses a class target cell into its class index.
    pub fn parse_class(&self, raw: &str) -> Result<u32> {
        let Target::Class { name, values } = &self.target else {
            bail!("target is not a class column");
        };
        let raw = raw.trim();
        values
            .iter()
            .position(|v| v == raw)
            .map(|i| i as u32)
            .with_context(|| format!("column `{name}`: unknown class label `{raw}`"))
    }

    pub fn parse_numeric_target(&self, raw: &str) -> Result<f64> {
        let Target::Numeric { name } = &self.target else {
            bail!("target is not a numeric column");
        };
        let v: f64 = raw
            .trim()
            .parse()
            .with_context(|| format!("column `{name}`: not a number: `{raw}`"))?;
        if !v.is_finite() {
            bail!("column `{name}`: non-finite target `{raw}`");
        }
        Ok(v)
    }

    pub fn parse_bag_label(&self, raw: &str) -> Result<bool> {
        let Target::BagLabel { name, values } = &self.target else {
            bail!("target is not a bag_label column");
        };
        let raw = raw.trim();
        if raw == values[1] {
            Ok(true)
        } else if raw == values[0] {
            Ok(false)
        } else {
            bail!("column `{name}`: bag label `{raw}` is neither `{}` nor `{}`", values[0], values[1])
        }
    }
}
