//! Task heads: they turn labeled examples into loss derivatives and feed
//! those to one or more trees.
//!
//! Every head owns its feature-range warm-up. Until enough instances have
//! been seen to fix numeric bin ranges, examples are buffered and predictions
//! come from the untouched initial model (every score 0); once ranges are
//! fixed the buffer is replayed through the normal training path. Call
//! `finish_warmup` when a stream ends early.

use std::sync::Arc;

use crate::discretize::{FeatureDecl, FeatureSet, RangeEstimator};
use crate::error::SgtError;
use crate::instance::Instance;
use crate::losses::{cross_entropy_grad, mil_bce_grad, sigmoid, softmax_probs, squared_error_grad};
use crate::shuffle::{seeded_rng, shuffle_in_place};
use crate::tree::{NodeDump, SgTree, SgtConfig};

/// Multiclass classifier: one tree per class except the last, whose score is
/// fixed at zero.
#[derive(Debug)]
pub struct Committee {
    classes: u32,
    config: SgtConfig,
    state: CommitteeState,
}

#[derive(Debug)]
enum CommitteeState {
    Warming { estimator: RangeEstimator, labels: Vec<u32> },
    Ready { trees: Vec<SgTree> },
}

impl Committee {
    pub fn new(decls: Vec<FeatureDecl>, classes: u32, config: SgtConfig) -> Result<Self, SgtError> {
        if classes < 2 {
            return Err(SgtError::InvalidConfig(format!(
                "classification needs at least 2 classes, got {classes}"
            )));
        }
        config.validate()?;
        let estimator = RangeEstimator::new(decls, config.bins, config.warmup)?;
        let mut committee =
            Self { classes, config, state: CommitteeState::Warming { estimator, labels: Vec::new() } };
        committee.promote_if_ready()?;
        Ok(committee)
    }

    pub fn classes(&self) -> u32 {
        self.classes
    }

    /// Number of trained trees: k-1 once warm-up is done, 0 before.
    pub fn tree_count(&self) -> usize {
        match &self.state {
            CommitteeState::Warming { .. } => 0,
            CommitteeState::Ready { trees } => trees.len(),
        }
    }

    /// Total node count over all trees; during warm-up, the count the fresh
    /// trees will have.
    pub fn node_count(&self) -> usize {
        match &self.state {
            CommitteeState::Warming { .. } => self.classes as usize - 1,
            CommitteeState::Ready { trees } => trees.iter().map(SgTree::node_count).sum(),
        }
    }

    /// Raw scores of the k-1 trees (the hard-wired last class is implicit).
    pub fn scores(&self, x: &Instance) -> Result<Vec<f64>, SgtError> {
        match &self.state {
            CommitteeState::Warming { estimator, .. } => {
                estimator.check(x)?;
                Ok(vec![0.0; self.classes as usize - 1])
            }
            CommitteeState::Ready { trees } => trees.iter().map(|t| t.predict(x)).collect(),
        }
    }

    /// Class probabilities, length k.
    pub fn probabilities(&self, x: &Instance) -> Result<Vec<f64>, SgtError> {
        Ok(softmax_probs(&self.scores(x)?))
    }

    /// Most probable class; ties resolve to the lowest class index.
    pub fn predict(&self, x: &Instance) -> Result<u32, SgtError> {
        let probs = self.probabilities(x)?;
        let mut best = 0;
        for (c, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = c;
            }
        }
        Ok(best as u32)
    }

    /// Test-then-train: returns the prediction made before this example
    /// updates any tree.
    pub fn classify_update(&mut self, x: &Instance, label: u32) -> Result<u32, SgtError> {
        if label >= self.classes {
            return Err(SgtError::LabelOutOfRange {
                label: label as usize,
                classes: self.classes as usize,
            });
        }
        let predicted = self.predict(x)?;
        match &mut self.state {
            CommitteeState::Warming { estimator, labels } => {
                estimator.absorb(x.clone())?;
                labels.push(label);
                self.promote_if_ready()?;
            }
            CommitteeState::Ready { trees } => {
                Self::train(trees, x, label)?;
            }
        }
        Ok(predicted)
    }

    /// Finalizes the feature ranges now (used when a stream ends before the
    /// warm-up target) and replays buffered examples. Idempotent.
    pub fn finish_warmup(&mut self) -> Result<(), SgtError> {
        if matches!(self.state, CommitteeState::Warming { .. }) {
            self.promote()?;
        }
        Ok(())
    }

    /// Finalized feature set and one structural dump per tree.
    pub fn dump(&self) -> Result<(Arc<FeatureSet>, Vec<NodeDump>), SgtError> {
        match &self.state {
            CommitteeState::Warming { .. } => Err(SgtError::InvalidConfig(
                "model still warming up; call finish_warmup first".into(),
            )),
            CommitteeState::Ready { trees } => Ok((
                Arc::clone(trees[0].features()),
                trees.iter().map(SgTree::dump).collect(),
            )),
        }
    }

    /// Rebuilds a committee from dumped trees; leaf statistics start fresh.
    pub fn from_dump(
        features: Arc<FeatureSet>,
        config: SgtConfig,
        dumps: &[NodeDump],
    ) -> Result<Self, SgtError> {
        if dumps.is_empty() {
            return Err(SgtError::InvalidConfig("committee dump has no trees".into()));
        }
        let trees = dumps
            .iter()
            .map(|d| SgTree::from_dump(Arc::clone(&features), config.clone(), d))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            classes: dumps.len() as u32 + 1,
            config,
            state: CommitteeState::Ready { trees },
        })
    }

    fn promote_if_ready(&mut self) -> Result<(), SgtError> {
        if let CommitteeState::Warming { estimator, .. } = &self.state {
            if estimator.is_complete() {
                self.promote()?;
            }
        }
        Ok(())
    }

    fn promote(&mut self) -> Result<(), SgtError> {
        let state =
            std::mem::replace(&mut self.state, CommitteeState::Ready { trees: Vec::new() });
        let CommitteeState::Warming { estimator, labels } = state else { unreachable!() };
        let (features, buffered) = estimator.finalize()?;
        let features = Arc::new(features);
        let mut trees = (1..self.classes)
            .map(|_| SgTree::new(Arc::clone(&features), self.config.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        for (x, &label) in buffered.iter().zip(&labels) {
            Self::train(&mut trees, x, label)?;
        }
        self.state = CommitteeState::Ready { trees };
        Ok(())
    }

    fn train(trees: &mut [SgTree], x: &Instance, label: u32) -> Result<(), SgtError> {
        // All scores are read before any tree is updated, so sequential and
        // per-tree-parallel update orders agree.
        let scores: Vec<f64> = trees.iter().map(|t| t.predict(x)).collect::<Result<_, _>>()?;
        let pairs = cross_entropy_grad(&scores, label as usize);
        for (tree, gh) in trees.iter_mut().zip(pairs) {
            tree.apply_gradient(x, gh)?;
        }
        Ok(())
    }
}

/// Scalar regressor: one tree trained on squared error.
#[derive(Debug)]
pub struct Regressor {
    config: SgtConfig,
    state: RegressorState,
}

#[derive(Debug)]
enum RegressorState {
    Warming { estimator: RangeEstimator, targets: Vec<f64> },
    Ready { tree: SgTree },
}

impl Regressor {
    pub fn new(decls: Vec<FeatureDecl>, config: SgtConfig) -> Result<Self, SgtError> {
        config.validate()?;
        let estimator = RangeEstimator::new(decls, config.bins, config.warmup)?;
        let mut regressor =
            Self { config, state: RegressorState::Warming { estimator, targets: Vec::new() } };
        regressor.promote_if_ready()?;
        Ok(regressor)
    }

    pub fn node_count(&self) -> usize {
        match &self.state {
            RegressorState::Warming { .. } => 1,
            RegressorState::Ready { tree } => tree.node_count(),
        }
    }

    pub fn predict(&self, x: &Instance) -> Result<f64, SgtError> {
        match &self.state {
            RegressorState::Warming { estimator, .. } => {
                estimator.check(x)?;
                Ok(0.0)
            }
            RegressorState::Ready { tree } => tree.predict(x),
        }
    }

    /// Test-then-train: returns the prediction made before this example
    /// updates the tree.
    pub fn regress_update(&mut self, x: &Instance, target: f64) -> Result<f64, SgtError> {
        if !target.is_finite() {
            return Err(SgtError::NonFinite { context: "regression target", value: target });
        }
        let predicted = self.predict(x)?;
        match &mut self.state {
            RegressorState::Warming { estimator, targets } => {
                estimator.absorb(x.clone())?;
                targets.push(target);
                self.promote_if_ready()?;
            }
            RegressorState::Ready { tree } => {
                Self::train(tree, x, target)?;
            }
        }
        Ok(predicted)
    }

    /// See [`Committee::finish_warmup`].
    pub fn finish_warmup(&mut self) -> Result<(), SgtError> {
        if matches!(self.state, RegressorState::Warming { .. }) {
            self.promote()?;
        }
        Ok(())
    }

    pub fn dump(&self) -> Result<(Arc<FeatureSet>, Vec<NodeDump>), SgtError> {
        match &self.state {
            RegressorState::Warming { .. } => Err(SgtError::InvalidConfig(
                "model still warming up; call finish_warmup first".into(),
            )),
            RegressorState::Ready { tree } => {
                Ok((Arc::clone(tree.features()), vec![tree.dump()]))
            }
        }
    }

    pub fn from_dump(
        features: Arc<FeatureSet>,
        config: SgtConfig,
        dumps: &[NodeDump],
    ) -> Result<Self, SgtError> {
        let [dump] = dumps else {
            return Err(SgtError::InvalidConfig(format!(
                "regressor dump must hold exactly one tree, got {}",
                dumps.len()
            )));
        };
        let tree = SgTree::from_dump(features, config.clone(), dump)?;
        Ok(Self { config, state: RegressorState::Ready { tree } })
    }

    fn promote_if_ready(&mut self) -> Result<(), SgtError> {
        if let RegressorState::Warming { estimator, .. } = &self.state {
            if estimator.is_complete() {
                self.promote()?;
            }
        }
        Ok(())
    }

    fn promote(&mut self) -> Result<(), SgtError> {
        let placeholder = RegressorState::Warming {
            estimator: RangeEstimator::new(Vec::new(), self.config.bins, 1)?,
            targets: Vec::new(),
        };
        let state = std::mem::replace(&mut self.state, placeholder);
        let RegressorState::Warming { estimator, targets } = state else { unreachable!() };
        let (features, buffered) = estimator.finalize()?;
        let mut tree = SgTree::new(Arc::new(features), self.config.clone())?;
        for (x, &target) in buffered.iter().zip(&targets) {
            Self::train(&mut tree, x, target)?;
        }
        self.state = RegressorState::Ready { tree };
        Ok(())
    }

    fn train(tree: &mut SgTree, x: &Instance, target: f64) -> Result<(), SgtError> {
        let score = tree.predict(x)?;
        tree.apply_gradient(x, squared_error_grad(score, target))?;
        Ok(())
    }
}

/// One labeled bag of instances; positive iff some member is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct BagExample {
    instances: Vec<Instance>,
    label: bool,
}

impl BagExample {
    pub fn new(instances: Vec<Instance>, label: bool) -> Result<Self, SgtError> {
        if instances.is_empty() {
            return Err(SgtError::EmptyBag);
        }
        Ok(Self { instances, label })
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn label(&self) -> bool {
        self.label
    }
}

/// Batch trainer for multi-instance bags: repeated shuffled passes, each bag
/// contributing one gradient through its highest-scoring instance.
#[derive(Debug)]
pub struct MilTrainer {
    tree: SgTree,
    bags: Vec<BagExample>,
    epochs: u32,
    seed: u64,
}

impl MilTrainer {
    pub fn new(
        decls: Vec<FeatureDecl>,
        config: SgtConfig,
        bags: Vec<BagExample>,
        epochs: u32,
        seed: u64,
    ) -> Result<Self, SgtError> {
        if bags.is_empty() {
            return Err(SgtError::InvalidConfig("MIL training needs at least one bag".into()));
        }
        if epochs == 0 {
            return Err(SgtError::InvalidConfig("MIL training needs at least one epoch".into()));
        }
        config.validate()?;
        // Ranges come from a single pass over the training instances, capped
        // at the usual warm-up budget. Nothing is replayed: the bags are the
        // training set.
        let mut estimator = RangeEstimator::new(decls, config.bins, config.warmup)?;
        'warmup: for bag in &bags {
            for x in bag.instances() {
                if estimator.is_complete() {
                    break 'warmup;
                }
                estimator.absorb(x.clone())?;
            }
        }
        let (features, _) = estimator.finalize()?;
        let tree = SgTree::new(Arc::new(features), config)?;
        Ok(Self { tree, bags, epochs, seed })
    }

    /// Runs all epochs and hands back the fitted tree.
    pub fn fit(mut self) -> Result<SgTree, SgtError> {
        let mut rng = seeded_rng(self.seed);
        let mut order: Vec<usize> = (0..self.bags.len()).collect();
        for _ in 0..self.epochs {
            shuffle_in_place(&mut order, &mut rng);
            for &b in &order {
                let bag = &self.bags[b];
                let scores: Vec<f64> = bag
                    .instances()
                    .iter()
                    .map(|x| self.tree.predict(x))
                    .collect::<Result<_, _>>()?;
                let (argmax, gh) = mil_bce_grad(&scores, bag.label());
                self.tree.apply_gradient(&bag.instances()[argmax], gh)?;
            }
        }
        Ok(self.tree)
    }
}

/// Probability that the bag is positive: sigmoid of the best instance score.
pub fn predict_bag(tree: &SgTree, bag: &BagExample) -> Result<f64, SgtError> {
    let mut best = f64::NEG_INFINITY;
    for x in bag.instances() {
        best = best.max(tree.predict(x)?);
    }
    Ok(sigmoid(best))
}
