//! Feature schema and equal-width discretization of numeric features.
//!
//! Numeric features are reduced to a fixed number of equal-width bins over a
//! [min, max] range. Ranges can be declared up front or estimated from a
//! warm-up sample of the stream; once a range is finalized it never moves and
//! out-of-range values are clipped into the edge bins.

use serde::{Deserialize, Serialize};

use crate::error::SgtError;
use crate::instance::{FeatureValue, Instance};

/// Finalized per-feature schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureKind {
    Nominal { arity: u32 },
    Numeric { min: f64, max: f64, bins: u32 },
}

/// A named feature with a finalized kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    name: String,
    kind: FeatureKind,
}

impl FeatureMeta {
    pub fn nominal(name: impl Into<String>, arity: u32) -> Result<Self, SgtError> {
        if arity < 2 {
            return Err(SgtError::InvalidConfig(format!(
                "nominal feature needs arity >= 2, got {arity}"
            )));
        }
        Ok(Self { name: name.into(), kind: FeatureKind::Nominal { arity } })
    }

    pub fn numeric(
        name: impl Into<String>,
        min: f64,
        max: f64,
        bins: u32,
    ) -> Result<Self, SgtError> {
        if bins < 2 {
            return Err(SgtError::InvalidConfig(format!(
                "numeric feature needs bins >= 2, got {bins}"
            )));
        }
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(SgtError::InvalidConfig(format!(
                "numeric feature needs a finite range with min < max, got [{min}, {max}]"
            )));
        }
        Ok(Self { name: name.into(), kind: FeatureKind::Numeric { min, max, bins } })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &FeatureKind {
        &self.kind
    }

    /// Number of histogram slots a leaf keeps for this feature.
    pub fn slot_count(&self) -> u32 {
        match self.kind {
            FeatureKind::Nominal { arity } => arity,
            FeatureKind::Numeric { bins, .. } => bins,
        }
    }

    /// Equal-width bin of `value`, clipping anything outside the range into
    /// the edge bins; `value == max` lands in the last bin.
    pub fn bin_index(&self, value: f64) -> Result<u32, SgtError> {
        let FeatureKind::Numeric { min, max, bins } = self.kind else {
            return Err(SgtError::KindMismatch { name: self.name.clone(), expected: "numeric" });
        };
        if value.is_nan() {
            return Err(SgtError::NonFinite { context: "numeric feature value", value });
        }
        let raw = (bins as f64 * (value - min) / (max - min)).floor();
        Ok((raw as i64).clamp(0, bins as i64 - 1) as u32)
    }

    /// Ordinal binary split boundaries: boundary `b` separates bins below `b`
    /// from bins at or above it. Empty for nominal features.
    pub fn threshold_candidates(&self) -> Vec<u32> {
        match self.kind {
            FeatureKind::Nominal { .. } => Vec::new(),
            FeatureKind::Numeric { bins, .. } => (1..bins).collect(),
        }
    }
}

/// An immutable, finalized feature schema shared by every tree of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    features: Vec<FeatureMeta>,
}

impl FeatureSet {
    pub fn new(features: Vec<FeatureMeta>) -> Result<Self, SgtError> {
        let mut names: Vec<&str> = features.iter().map(|f| f.name()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(SgtError::InvalidConfig("duplicate feature name".into()));
        }
        Ok(Self { features })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn get(&self, index: usize) -> &FeatureMeta {
        &self.features[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &FeatureMeta> {
        self.features.iter()
    }

    /// Checks length, value kinds, nominal arity, and numeric finiteness.
    pub fn validate(&self, x: &Instance) -> Result<(), SgtError> {
        if x.len() != self.features.len() {
            return Err(SgtError::ArityMismatch { expected: self.features.len(), got: x.len() });
        }
        for (meta, value) in self.features.iter().zip(x) {
            match (meta.kind(), value) {
                (FeatureKind::Nominal { arity }, FeatureValue::Nominal(v)) => {
                    if v >= arity {
                        return Err(SgtError::NominalOutOfRange {
                            name: meta.name.clone(),
                            value: *v,
                            arity: *arity,
                        });
                    }
                }
                (FeatureKind::Numeric { .. }, FeatureValue::Numeric(v)) => {
                    if !v.is_finite() {
                        return Err(SgtError::NonFinite {
                            context: "numeric feature value",
                            value: *v,
                        });
                    }
                }
                (FeatureKind::Nominal { .. }, FeatureValue::Numeric(_)) => {
                    return Err(SgtError::KindMismatch {
                        name: meta.name.clone(),
                        expected: "nominal",
                    });
                }
                (FeatureKind::Numeric { .. }, FeatureValue::Nominal(_)) => {
                    return Err(SgtError::KindMismatch {
                        name: meta.name.clone(),
                        expected: "numeric",
                    });
                }
            }
        }
        Ok(())
    }
}

/// Pre-finalization feature declaration: numeric ranges may be unknown.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSpec {
    Nominal { arity: u32 },
    Numeric { range: Option<(f64, f64)> },
}

/// A named feature as declared before warm-up.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDecl {
    pub name: String,
    pub spec: FeatureSpec,
}

impl FeatureDecl {
    pub fn nominal(name: impl Into<String>, arity: u32) -> Self {
        Self { name: name.into(), spec: FeatureSpec::Nominal { arity } }
    }

    pub fn numeric(name: impl Into<String>) -> Self {
        Self { name: name.into(), spec: FeatureSpec::Numeric { range: None } }
    }

    pub fn numeric_known(name: impl Into<String>, min: f64, max: f64) -> Self {
        Self { name: name.into(), spec: FeatureSpec::Numeric { range: Some((min, max)) } }
    }
}

/// Warm-up range estimation: tracks running min/max per numeric feature and
/// buffers the absorbed instances so callers can replay them once the bin
/// layout is frozen.
///
/// Features with declared ranges keep them as-is. When every numeric feature
/// has a known range the estimator is complete from the start and buffers
/// nothing.
#[derive(Debug, Clone)]
pub struct RangeEstimator {
    decls: Vec<FeatureDecl>,
    bins: u32,
    target: u64,
    seen: u64,
    mins: Vec<f64>,
    maxs: Vec<f64>,
    buffer: Vec<Instance>,
}

impl RangeEstimator {
    pub fn new(decls: Vec<FeatureDecl>, bins: u32, warmup_target: u64) -> Result<Self, SgtError> {
        if bins < 2 {
            return Err(SgtError::InvalidConfig(format!("bins must be >= 2, got {bins}")));
        }
        let mut needs_warmup = false;
        for decl in &decls {
            match decl.spec {
                FeatureSpec::Nominal { arity } => {
                    if arity < 2 {
                        return Err(SgtError::InvalidConfig(format!(
                            "nominal feature `{}` needs arity >= 2, got {arity}",
                            decl.name
                        )));
                    }
                }
                FeatureSpec::Numeric { range: Some((min, max)) } => {
                    if !(min.is_finite() && max.is_finite() && min <= max) {
                        return Err(SgtError::InvalidConfig(format!(
                            "feature `{}` has invalid declared range [{min}, {max}]",
                            decl.name
                        )));
                    }
                }
                FeatureSpec::Numeric { range: None } => needs_warmup = true,
            }
        }
        let n = decls.len();
        Ok(Self {
            decls,
            bins,
            target: if needs_warmup { warmup_target.max(1) } else { 0 },
            seen: 0,
            mins: vec![f64::INFINITY; n],
            maxs: vec![f64::NEG_INFINITY; n],
            buffer: Vec::new(),
        })
    }

    /// True once enough instances have been absorbed to freeze the ranges.
    pub fn is_complete(&self) -> bool {
        self.seen >= self.target
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    /// Validates an instance against the declarations without absorbing it.
    pub fn check(&self, x: &Instance) -> Result<(), SgtError> {
        if x.len() != self.decls.len() {
            return Err(SgtError::ArityMismatch { expected: self.decls.len(), got: x.len() });
        }
        for (decl, value) in self.decls.iter().zip(x) {
            match (&decl.spec, value) {
                (FeatureSpec::Nominal { arity }, FeatureValue::Nominal(v)) => {
                    if v >= arity {
                        return Err(SgtError::NominalOutOfRange {
                            name: decl.name.clone(),
                            value: *v,
                            arity: *arity,
                        });
                    }
                }
                (FeatureSpec::Numeric { .. }, FeatureValue::Numeric(v)) => {
                    if !v.is_finite() {
                        return Err(SgtError::NonFinite {
                            context: "numeric feature value",
                            value: *v,
                        });
                    }
                }
                (FeatureSpec::Nominal { .. }, FeatureValue::Numeric(_)) => {
                    return Err(SgtError::KindMismatch {
                        name: decl.name.clone(),
                        expected: "nominal",
                    });
                }
                (FeatureSpec::Numeric { .. }, FeatureValue::Nominal(_)) => {
                    return Err(SgtError::KindMismatch {
                        name: decl.name.clone(),
                        expected: "numeric",
                    });
                }
            }
        }
        Ok(())
    }

    /// Folds one instance into the running ranges and buffers it.
    pub fn absorb(&mut self, x: Instance) -> Result<(), SgtError> {
        if self.is_complete() {
            return Err(SgtError::WarmupComplete { target: self.target });
        }
        self.check(&x)?;
        for (i, (decl, value)) in self.decls.iter().zip(&x).enumerate() {
            if let (FeatureSpec::Numeric { range: None }, FeatureValue::Numeric(v)) =
                (&decl.spec, value)
            {
                self.mins[i] = self.mins[i].min(*v);
                self.maxs[i] = self.maxs[i].max(*v);
            }
        }
        self.seen += 1;
        self.buffer.push(x);
        Ok(())
    }

    /// Freezes the schema and hands back the buffered warm-up instances.
    ///
    /// May be called before the target is reached (stream ended early). A
    /// degenerate range (one distinct value, or no data at all) is widened so
    /// bins have nonzero width.
    pub fn finalize(self) -> Result<(FeatureSet, Vec<Instance>), SgtError> {
        let mut metas = Vec::with_capacity(self.decls.len());
        for (i, decl) in self.decls.iter().enumerate() {
            let meta = match decl.spec {
                FeatureSpec::Nominal { arity } => FeatureMeta::nominal(&decl.name, arity)?,
                FeatureSpec::Numeric { range: Some((min, max)) } => {
                    let (min, max) = widen_if_degenerate(min, max);
                    FeatureMeta::numeric(&decl.name, min, max, self.bins)?
                }
                FeatureSpec::Numeric { range: None } => {
                    let (min, max) = if self.mins[i] <= self.maxs[i] {
                        widen_if_degenerate(self.mins[i], self.maxs[i])
                    } else {
                        // No observations at all; any fixed range works since
                        // every future value will clip.
                        (0.0, 1.0)
                    };
                    FeatureMeta::numeric(&decl.name, min, max, self.bins)?
                }
            };
            metas.push(meta);
        }
        Ok((FeatureSet::new(metas)?, self.buffer))
    }
}

fn widen_if_degenerate(min: f64, max: f64) -> (f64, f64) {
    if min < max {
        (min, max)
    } else {
        (min, min + f64::max(1.0, min.abs() * 1e-6))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn num(v: f64) -> FeatureValue {
        FeatureValue::Numeric(v)
    }

    #[test]
    fn tracks_min_and_max() {
        let mut est =
            RangeEstimator::new(vec![FeatureDecl::numeric("x")], 4, 10).unwrap();
        est.absorb(vec![num(2.0)]).unwrap();
        est.absorb(vec![num(5.0)]).unwrap();
        let (set, buffer) = est.finalize().unwrap();
        assert_eq!(buffer.len(), 2);
        assert_eq!(set.get(0).kind(), &FeatureKind::Numeric { min: 2.0, max: 5.0, bins: 4 });
    }

    #[test]
    fn degenerate_range_is_widened() {
        let mut est =
            RangeEstimator::new(vec![FeatureDecl::numeric("x")], 4, 10).unwrap();
        est.absorb(vec![num(3.0)]).unwrap();
        let (set, _) = est.finalize().unwrap();
        assert_eq!(set.get(0).kind(), &FeatureKind::Numeric { min: 3.0, max: 4.0, bins: 4 });
    }

    #[test]
    fn absorb_after_target_errors() {
        let mut est =
            RangeEstimator::new(vec![FeatureDecl::numeric("x")], 4, 1000).unwrap();
        for i in 0..1000 {
            est.absorb(vec![num(i as f64)]).unwrap();
        }
        assert!(est.is_complete());
        assert!(matches!(
            est.absorb(vec![num(0.0)]),
            Err(SgtError::WarmupComplete { target: 1000 })
        ));
    }

    #[test]
    fn known_ranges_skip_warmup() {
        let est = RangeEstimator::new(
            vec![
                FeatureDecl::numeric_known("x", 0.0, 64.0),
                FeatureDecl::nominal("c", 3),
            ],
            64,
            1000,
        )
        .unwrap();
        assert!(est.is_complete());
        let (set, buffer) = est.finalize().unwrap();
        assert!(buffer.is_empty());
        assert_eq!(set.get(0).kind(), &FeatureKind::Numeric { min: 0.0, max: 64.0, bins: 64 });
    }

    #[test]
    fn bin_index_unit_width() {
        let meta = FeatureMeta::numeric("x", 0.0, 64.0, 64).unwrap();
        assert_eq!(meta.bin_index(3.5).unwrap(), 3);
        assert_eq!(meta.bin_index(0.0).unwrap(), 0);
        assert_eq!(meta.bin_index(63.999).unwrap(), 63);
    }

    #[test]
    fn bin_index_clips_out_of_range() {
        let meta = FeatureMeta::numeric("x", 0.0, 64.0, 64).unwrap();
        assert_eq!(meta.bin_index(-5.0).unwrap(), 0);
        assert_eq!(meta.bin_index(100.0).unwrap(), 63);
    }

    #[test]
    fn bin_index_max_maps_to_last_bin() {
        let meta = FeatureMeta::numeric("x", 0.0, 64.0, 64).unwrap();
        assert_eq!(meta.bin_index(64.0).unwrap(), 63);
    }

    #[test]
    fn bin_index_rejects_nan() {
        let meta = FeatureMeta::numeric("x", 0.0, 1.0, 8).unwrap();
        assert!(meta.bin_index(f64::NAN).is_err());
    }

    #[test]
    fn bin_index_is_monotone_and_equal_width() {
        let meta = FeatureMeta::numeric("x", -2.0, 6.0, 16).unwrap();
        let mut last = 0;
        for i in 0..=1000 {
            let v = -3.0 + i as f64 * 0.01;
            let b = meta.bin_index(v).unwrap();
            assert!(b >= last);
            last = b;
        }
        let w = 8.0 / 16.0;
        for k in 0..16u32 {
            assert_eq!(meta.bin_index(-2.0 + k as f64 * w).unwrap(), k);
        }
    }

    #[test]
    fn threshold_candidate_counts() {
        let meta = FeatureMeta::numeric("x", 0.0, 1.0, 64).unwrap();
        assert_eq!(meta.threshold_candidates(), (1..64).collect::<Vec<_>>());
        let meta = FeatureMeta::numeric("x", 0.0, 1.0, 2).unwrap();
        assert_eq!(meta.threshold_candidates(), vec![1]);
        let meta = FeatureMeta::numeric("x", 0.0, 1.0, 4).unwrap();
        assert_eq!(meta.threshold_candidates(), vec![1, 2, 3]);
    }

    #[test]
    fn validate_checks_kinds_and_ranges() {
        let set = FeatureSet::new(vec![
            FeatureMeta::numeric("x", 0.0, 1.0, 4).unwrap(),
            FeatureMeta::nominal("c", 2).unwrap(),
        ])
        .unwrap();
        assert!(set.validate(&vec![num(0.5), FeatureValue::Nominal(1)]).is_ok());
        assert!(set.validate(&vec![num(0.5)]).is_err());
        assert!(set.validate(&vec![num(0.5), FeatureValue::Nominal(2)]).is_err());
        assert!(set.validate(&vec![FeatureValue::Nominal(0), FeatureValue::Nominal(1)]).is_err());
        assert!(set.validate(&vec![num(f64::NAN), FeatureValue::Nominal(0)]).is_err());
    }

    #[test]
    fn duplicate_feature_names_rejected() {
        let metas = vec![
            FeatureMeta::numeric("x", 0.0, 1.0, 4).unwrap(),
            FeatureMeta::numeric("x", 0.0, 2.0, 4).unwrap(),
        ];
        assert!(FeatureSet::new(metas).is_err());
    }
}
