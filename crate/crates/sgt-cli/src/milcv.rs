//! Stratified k-fold cross-validation for bag-labeled data: positives and
//! negatives are dealt into folds separately so class balance carries over,
//! each fold is scored by a trainer fitted on the remaining bags, and bag
//! probability 0.5 is the decision threshold.

use anyhow::{bail, Result};
use sgtree::shuffle::{seeded_rng, shuffle_in_place};
use sgtree::{predict_bag, BagExample, FeatureDecl, MilTrainer, SgtConfig};

#[derive(Debug, Clone)]
pub struct MilCvReport {
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Folds whose test bags all share one label; their accuracy is still
    /// reported but says nothing about the other class.
    pub single_class_folds: Vec<usize>,
}

pub fn cross_validate_mil(
    decls: &[FeatureDecl],
    config: &SgtConfig,
    bags: &[BagExample],
    folds: usize,
    seed: u64,
    epochs: u32,
) -> Result<MilCvReport> {
    if folds < 2 {
        bail!("cross-validation needs at least 2 folds, got {folds}");
    }
    if bags.len() < folds {
        bail!("{} bags cannot fill {folds} folds", bags.len());
    }
    let assignment = assign_folds(bags, folds, seed);
    let mut fold_accuracies = Vec::with_capacity(folds);
    let mut single_class_folds = Vec::new();
    for fold in 0..folds {
        let train: Vec<BagExample> = bags
            .iter()
            .zip(&assignment)
            .filter(|(_, &f)| f != fold)
            .map(|(b, _)| b.clone())
            .collect();
        let test: Vec<&BagExample> = bags
            .iter()
            .zip(&assignment)
            .filter(|(_, &f)| f == fold)
            .map(|(b, _)| b)
            .collect();
        let tree = MilTrainer::new(
            decls.to_vec(),
            config.clone(),
            train,
            epochs,
            seed.wrapping_add(fold as u64),
        )?
        .fit()?;
        let mut correct = 0usize;
        for bag in &test {
            let positive = predict_bag(&tree, bag)? > 0.5;
            if positive == bag.label() {
                correct += 1;
            }
        }
        if test.iter().all(|b| b.label()) || test.iter().all(|b| !b.label()) {
            single_class_folds.push(fold);
        }
        fold_accuracies.push(correct as f64 / test.len() as f64);
    }
    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / folds as f64;
    Ok(MilCvReport { fold_accuracies, mean_accuracy, single_class_folds })
}

/// Seeded stratified assignment: shuffle positives and negatives separately,
/// then deal each round-robin across folds.
fn assign_folds(bags: &[BagExample], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = seeded_rng(seed);
    let mut positives: Vec<usize> = Vec::new();
    let mut negatives: Vec<usize> = Vec::new();
    for (i, bag) in bags.iter().enumerate() {
        if bag.label() {
            positives.push(i);
        } else {
            negatives.push(i);
        }
    }
    shuffle_in_place(&mut positives, &mut rng);
    shuffle_in_place(&mut negatives, &mut rng);
    let mut assignment = vec![0usize; bags.len()];
    // Offset the negative deal so small classes don't pile into fold 0.
    for (round, &bag) in positives.iter().enumerate() {
        assignment[bag] = round % folds;
    }
    for (round, &bag) in negatives.iter().enumerate() {
        assignment[bag] = (round + positives.len()) % folds;
    }
    assignment
}
