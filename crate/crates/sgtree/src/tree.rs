//! The incremental gradient tree.
//!
//! A tree starts as a single leaf predicting 0. Each instance routed to a leaf
//! updates that leaf's total gradient/Hessian statistics and one histogram
//! slot per feature. At grace-period multiples the leaf's candidate
//! modifications are scored: a multiway split per nominal feature, a binary
//! split per numeric bin boundary, and a prediction-only update. The best
//! candidate by estimated loss change plus structural penalty is applied only
//! if a one-sample t-test on the per-instance loss changes clears the
//! configured significance level.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discretize::{FeatureKind, FeatureSet};
use crate::error::SgtError;
use crate::ghstats::{GradHessPair, GradHessStats};
use crate::instance::{FeatureValue, Instance};
use crate::tdist::t_test_p;

/// Learner hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgtConfig {
    /// L2 penalty on leaf-value deltas.
    pub lambda: f64,
    /// Cost per leaf added by a split.
    pub gamma: f64,
    /// Significance level the split test must clear.
    pub delta: f64,
    /// Instances routed to a leaf between split attempts.
    pub grace: u64,
    /// Equal-width bins per numeric feature.
    pub bins: u32,
    /// Instances used to estimate numeric feature ranges.
    pub warmup: u64,
    /// Use a two-sided test instead of the one-sided default.
    pub two_sided: bool,
}

impl Default for SgtConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            gamma: 1.0,
            delta: 1e-3,
            grace: 200,
            bins: 64,
            warmup: 1000,
            two_sided: false,
        }
    }
}

impl SgtConfig {
    pub fn validate(&self) -> Result<(), SgtError> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(SgtError::InvalidConfig(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(SgtError::InvalidConfig(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(SgtError::InvalidConfig(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        if self.grace == 0 {
            return Err(SgtError::InvalidConfig("grace must be positive".into()));
        }
        if self.bins < 2 {
            return Err(SgtError::InvalidConfig(format!("bins must be >= 2, got {}", self.bins)));
        }
        if self.warmup == 0 {
            return Err(SgtError::InvalidConfig("warmup must be positive".into()));
        }
        Ok(())
    }
}

pub type NodeId = usize;

/// How an internal node partitions instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SplitKind {
    /// One branch per nominal value.
    NominalMultiway,
    /// Two branches: bins below the boundary go left, the rest right.
    NumericThreshold { boundary: u32 },
}

#[derive(Debug, Clone)]
struct LeafNode {
    prediction: f64,
    total: GradHessStats,
    /// One histogram per feature; slot = bin index or nominal value.
    per_feature: Vec<Vec<GradHessStats>>,
    count_since_reset: u64,
}

impl LeafNode {
    fn new(prediction: f64, features: &FeatureSet) -> Self {
        Self {
            prediction,
            total: GradHessStats::new(),
            per_feature: features
                .iter()
                .map(|m| vec![GradHessStats::new(); m.slot_count() as usize])
                .collect(),
            count_since_reset: 0,
        }
    }

    fn reset(&mut self) {
        self.total = GradHessStats::new();
        for hist in &mut self.per_feature {
            hist.fill(GradHessStats::new());
        }
        self.count_since_reset = 0;
    }
}

#[derive(Debug, Clone)]
struct SplitNode {
    feature: usize,
    kind: SplitKind,
    /// Prediction the node made while it was still a leaf; answers queries
    /// that reach a branch with no matching child.
    fallback: f64,
    children: Vec<NodeId>,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(LeafNode),
    Split(SplitNode),
}

/// Where routing an instance ended up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Routed {
    Leaf(NodeId),
    /// No child matched a nominal value; carries the node's fallback prediction.
    Fallback(f64),
}

/// A scored candidate modification of one leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub kind: CandidateKind,
    /// Newton-step value per prospective leaf (a single entry for updates).
    pub leaf_values: Vec<f64>,
    /// Estimated change in total loss at those leaf values.
    pub delta_loss: f64,
    /// Structural penalty: gamma per new leaf plus the L2 term.
    pub omega: f64,
    /// Pooled mean of the per-instance loss changes.
    pub pooled_mean: f64,
    /// Pooled sample variance of the per-instance loss changes.
    pub pooled_var: f64,
    /// Observations behind the pooled moments.
    pub pooled_n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateKind {
    UpdateOnly,
    NominalMultiway { feature: usize },
    NumericThreshold { feature: usize, boundary: u32 },
}

impl SplitCandidate {
    /// Selection score; the test statistic uses the pooled moments instead.
    pub fn objective(&self) -> f64 {
        self.delta_loss + self.omega
    }
}

/// Result of a split attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitOutcome {
    AppliedSplit,
    AppliedUpdate,
    NoChange,
}

/// Optimal leaf-value delta for gradient sum `sum_g` and Hessian sum `sum_h`.
///
/// Returns 0 when the regularized curvature is not positive; the quadratic
/// model has no useful minimum there.
pub fn leaf_value(sum_g: f64, sum_h: f64, lambda: f64) -> f64 {
    let denom = lambda + sum_h;
    if denom > 1e-12 {
        -sum_g / denom
    } else {
        0.0
    }
}

/// Pools per-group (mean, variance, count) loss-change moments.
#[derive(Debug, Clone, Copy, Default)]
struct PooledMoments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl PooledMoments {
    fn add_group(&mut self, n: u64, mean: f64, var: f64) {
        if n == 0 {
            return;
        }
        let m2 = if n >= 2 { var * (n - 1) as f64 } else { 0.0 };
        if self.n == 0 {
            *self = Self { n, mean, m2 };
            return;
        }
        let na = self.n as f64;
        let nb = n as f64;
        let total = na + nb;
        let d = mean - self.mean;
        self.m2 += m2 + d * d * na * nb / total;
        self.mean += d * nb / total;
        self.n += n;
    }

    fn var(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

fn score_candidate<'a>(
    kind: CandidateKind,
    groups: impl Iterator<Item = &'a GradHessStats>,
    lambda: f64,
    gamma_per_leaf: f64,
) -> SplitCandidate {
    let mut leaf_values = Vec::new();
    let mut delta_loss = 0.0;
    let mut l2 = 0.0;
    let mut pooled = PooledMoments::default();
    for stats in groups {
        let v = leaf_value(stats.sum_g(), stats.sum_h(), lambda);
        delta_loss += stats.sum_g() * v + 0.5 * stats.sum_h() * v * v;
        l2 += v * v;
        let (mean, var) = stats.delta_loss_moments(v);
        pooled.add_group(stats.n(), mean, var);
        leaf_values.push(v);
    }
    let omega = gamma_per_leaf * leaf_values.len() as f64 + 0.5 * lambda * l2;
    SplitCandidate {
        kind,
        leaf_values,
        delta_loss,
        omega,
        pooled_mean: pooled.mean,
        pooled_var: pooled.var(),
        pooled_n: pooled.n,
    }
}

/// A single incrementally grown gradient tree.
#[derive(Debug, Clone)]
pub struct SgTree {
    features: Arc<FeatureSet>,
    config: SgtConfig,
    nodes: Vec<Node>,
    root: NodeId,
}

impl SgTree {
    pub fn new(features: Arc<FeatureSet>, config: SgtConfig) -> Result<Self, SgtError> {
        config.validate()?;
        let root = LeafNode::new(0.0, &features);
        Ok(Self { features, config, nodes: vec![Node::Leaf(root)], root: 0 })
    }

    pub fn features(&self) -> &Arc<FeatureSet> {
        &self.features
    }

    pub fn config(&self) -> &SgtConfig {
        &self.config
    }

    /// Total number of nodes, internal and leaf.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Routes an instance down the split structure.
    pub fn route(&self, x: &Instance) -> Result<Routed, SgtError> {
        self.features.validate(x)?;
        let mut id = self.root;
        loop {
            match &self.nodes[id] {
                Node::Leaf(_) => return Ok(Routed::Leaf(id)),
                Node::Split(split) => {
                    id = match (&split.kind, &x[split.feature]) {
                        (SplitKind::NumericThreshold { boundary }, FeatureValue::Numeric(v)) => {
                            let bin = self.features.get(split.feature).bin_index(*v)?;
                            if bin < *boundary {
                                split.children[0]
                            } else {
                                split.children[1]
                            }
                        }
                        (SplitKind::NominalMultiway, FeatureValue::Nominal(v)) => {
                            match split.children.get(*v as usize) {
                                Some(&child) => child,
                                None => return Ok(Routed::Fallback(split.fallback)),
                            }
                        }
                        // validate() already pinned value kinds to the schema.
                        _ => unreachable!("value kind checked against schema"),
                    };
                }
            }
        }
    }

    /// Raw cumulative score for an instance.
    pub fn predict(&self, x: &Instance) -> Result<f64, SgtError> {
        match self.route(x)? {
            Routed::Leaf(id) => match &self.nodes[id] {
                Node::Leaf(leaf) => Ok(leaf.prediction),
                Node::Split(_) => unreachable!("route only returns leaf ids for leaves"),
            },
            Routed::Fallback(prediction) => Ok(prediction),
        }
    }

    /// Routes the instance to its leaf, folds the observation into the leaf
    /// statistics, and attempts a split at grace-period multiples.
    ///
    /// Returns the attempt outcome, or `None` when no attempt was due.
    pub fn apply_gradient(
        &mut self,
        x: &Instance,
        gh: GradHessPair,
    ) -> Result<Option<SplitOutcome>, SgtError> {
        // Re-validate in case the pair was built directly.
        let gh = GradHessPair::new(gh.g, gh.h)?;
        let id = match self.route(x)? {
            Routed::Leaf(id) => id,
            Routed::Fallback(_) => {
                unreachable!("declared-arity children cover every valid nominal value")
            }
        };
        let grace = self.config.grace;
        let features = Arc::clone(&self.features);
        let Node::Leaf(leaf) = &mut self.nodes[id] else {
            unreachable!("route only returns leaf ids for leaves");
        };
        for (f, (meta, value)) in features.iter().zip(x).enumerate() {
            let slot = match (meta.kind(), value) {
                (FeatureKind::Numeric { .. }, FeatureValue::Numeric(v)) => {
                    meta.bin_index(*v)? as usize
                }
                (FeatureKind::Nominal { .. }, FeatureValue::Nominal(v)) => *v as usize,
                _ => unreachable!("value kind checked against schema"),
            };
            leaf.per_feature[f][slot].observe(gh);
        }
        leaf.total.observe(gh);
        leaf.count_since_reset += 1;
        if leaf.count_since_reset % grace == 0 {
            Ok(Some(self.try_split(id)?))
        } else {
            Ok(None)
        }
    }

    /// Scores every candidate modification of a leaf: the prediction-only
    /// update first, then per-feature splits in feature order (numeric
    /// boundaries ascending). Empty for internal nodes and untouched leaves.
    pub fn candidates(&self, node: NodeId) -> Vec<SplitCandidate> {
        let Some(Node::Leaf(leaf)) = self.nodes.get(node) else {
            return Vec::new();
        };
        if leaf.total.is_empty() {
            return Vec::new();
        }
        let lambda = self.config.lambda;
        let gamma = self.config.gamma;
        let mut out = Vec::new();
        out.push(score_candidate(
            CandidateKind::UpdateOnly,
            std::iter::once(&leaf.total),
            lambda,
            0.0,
        ));
        for (f, meta) in self.features.iter().enumerate() {
            let hist = &leaf.per_feature[f];
            match meta.kind() {
                FeatureKind::Nominal { .. } => {
                    out.push(score_candidate(
                        CandidateKind::NominalMultiway { feature: f },
                        hist.iter(),
                        lambda,
                        gamma,
                    ));
                }
                FeatureKind::Numeric { bins, .. } => {
                    let bins = *bins as usize;
                    // prefix[b] = bins [0, b) merged; suffix[b] = bins [b, bins).
                    let mut prefix = vec![GradHessStats::new(); bins + 1];
                    for b in 0..bins {
                        prefix[b + 1] = prefix[b].merge(&hist[b]);
                    }
                    let mut suffix = vec![GradHessStats::new(); bins + 1];
                    for b in (0..bins).rev() {
                        suffix[b] = suffix[b + 1].merge(&hist[b]);
                    }
                    for boundary in 1..bins {
                        out.push(score_candidate(
                            CandidateKind::NumericThreshold { feature: f, boundary: boundary as u32 },
                            [&prefix[boundary], &suffix[boundary]].into_iter(),
                            lambda,
                            gamma,
                        ));
                    }
                }
            }
        }
        out
    }

    /// Scores candidates for the leaf, applies the best one if the loss-change
    /// test clears the significance level, and reports what happened.
    pub fn try_split(&mut self, node: NodeId) -> Result<SplitOutcome, SgtError> {
        let cands = self.candidates(node);
        if cands.is_empty() {
            return Ok(SplitOutcome::NoChange);
        }
        // Candidate order (update first, then feature, then boundary) makes
        // the strict comparison the tie-break rule.
        let mut best = &cands[0];
        for cand in &cands[1..] {
            if cand.objective() < best.objective() {
                best = cand;
            }
        }
        let p = t_test_p(best.pooled_mean, best.pooled_var, best.pooled_n, self.config.two_sided);
        if p >= self.config.delta {
            return Ok(SplitOutcome::NoChange);
        }
        let best = best.clone();
        match best.kind {
            CandidateKind::UpdateOnly => {
                let Node::Leaf(leaf) = &mut self.nodes[node] else { unreachable!() };
                leaf.prediction += best.leaf_values[0];
                leaf.reset();
                Ok(SplitOutcome::AppliedUpdate)
            }
            CandidateKind::NominalMultiway { feature } => {
                self.split_leaf(node, feature, SplitKind::NominalMultiway, &best.leaf_values);
                Ok(SplitOutcome::AppliedSplit)
            }
            CandidateKind::NumericThreshold { feature, boundary } => {
                self.split_leaf(
                    node,
                    feature,
                    SplitKind::NumericThreshold { boundary },
                    &best.leaf_values,
                );
                Ok(SplitOutcome::AppliedSplit)
            }
        }
    }

    fn split_leaf(&mut self, node: NodeId, feature: usize, kind: SplitKind, values: &[f64]) {
        let Node::Leaf(leaf) = &self.nodes[node] else { unreachable!() };
        let parent_prediction = leaf.prediction;
        let mut children = Vec::with_capacity(values.len());
        for &v in values {
            let id = self.nodes.len();
            self.nodes.push(Node::Leaf(LeafNode::new(parent_prediction + v, &self.features)));
            children.push(id);
        }
        self.nodes[node] =
            Node::Split(SplitNode { feature, kind, fallback: parent_prediction, children });
    }

    /// Structural dump of the tree, starting at the root.
    pub fn dump(&self) -> NodeDump {
        self.dump_node(self.root)
    }

    fn dump_node(&self, id: NodeId) -> NodeDump {
        match &self.nodes[id] {
            Node::Leaf(leaf) => NodeDump::Leaf { prediction: leaf.prediction },
            Node::Split(split) => NodeDump::Split {
                feature: self.features.get(split.feature).name().to_string(),
                split: split.kind,
                fallback: split.fallback,
                children: split.children.iter().map(|&c| self.dump_node(c)).collect(),
            },
        }
    }

    /// Rebuilds a tree from a dump. Leaf statistics start fresh; structure
    /// and predictions are restored exactly.
    pub fn from_dump(
        features: Arc<FeatureSet>,
        config: SgtConfig,
        dump: &NodeDump,
    ) -> Result<Self, SgtError> {
        let mut tree = Self::new(features, config)?;
        tree.nodes.clear();
        let root = tree.load_node(dump)?;
        tree.root = root;
        Ok(tree)
    }

    fn load_node(&mut self, dump: &NodeDump) -> Result<NodeId, SgtError> {
        match dump {
            NodeDump::Leaf { prediction } => {
                if !prediction.is_finite() {
                    return Err(SgtError::NonFinite {
                        context: "leaf prediction",
                        value: *prediction,
                    });
                }
                let id = self.nodes.len();
                self.nodes.push(Node::Leaf(LeafNode::new(*prediction, &Arc::clone(&self.features))));
                Ok(id)
            }
            NodeDump::Split { feature, split, fallback, children } => {
                let Some(feature_index) =
                    self.features.iter().position(|m| m.name() == feature)
                else {
                    return Err(SgtError::InvalidConfig(format!(
                        "dump references unknown feature `{feature}`"
                    )));
                };
                let meta = self.features.get(feature_index);
                let expected = match split {
                    SplitKind::NominalMultiway => match meta.kind() {
                        FeatureKind::Nominal { arity } => *arity as usize,
                        _ => {
                            return Err(SgtError::KindMismatch {
                                name: feature.clone(),
                                expected: "nominal",
                            })
                        }
                    },
                    SplitKind::NumericThreshold { boundary } => match meta.kind() {
                        FeatureKind::Numeric { bins, .. } if *boundary >= 1 && boundary < bins => 2,
                        FeatureKind::Numeric { .. } => {
                            return Err(SgtError::InvalidConfig(format!(
                                "boundary out of range for feature `{feature}`"
                            )))
                        }
                        _ => {
                            return Err(SgtError::KindMismatch {
                                name: feature.clone(),
                                expected: "numeric",
                            })
                        }
                    },
                };
                if children.len() != expected {
                    return Err(SgtError::InvalidConfig(format!(
                        "split on `{feature}` expects {expected} children, dump has {}",
                        children.len()
                    )));
                }
                let child_ids = children
                    .iter()
                    .map(|c| self.load_node(c))
                    .collect::<Result<Vec<_>, _>>()?;
                let id = self.nodes.len();
                self.nodes.push(Node::Split(SplitNode {
                    feature: feature_index,
                    kind: *split,
                    fallback: *fallback,
                    children: child_ids,
                }));
                Ok(id)
            }
        }
    }
}

/// Serializable tree structure: leaves carry predictions, splits carry the
/// feature, split kind, fallback prediction, and children in branch order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeDump {
    Leaf {
        prediction: f64,
    },
    Split {
        feature: String,
        split: SplitKind,
        fallback: f64,
        children: Vec<NodeDump>,
    },
}

impl NodeDump {
    pub fn node_count(&self) -> usize {
        match self {
            NodeDump::Leaf { .. } => 1,
            NodeDump::Split { children, .. } => {
                1 + children.iter().map(NodeDump::node_count).sum::<usize>()
            }
        }
    }
}
