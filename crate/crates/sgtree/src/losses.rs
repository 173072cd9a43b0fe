//! Loss heads: map raw tree scores and labels to per-tree gradient/Hessian
//! pairs, one head per task.
//!
//! Multiclass classification uses a softmax over k-1 trained scores with the
//! final class pinned to a raw score of zero, so a k-class problem trains
//! k-1 trees. Regression uses plain squared error. The multi-instance head
//! max-pools instance scores into a bag probability, which makes the
//! derivatives zero everywhere except the argmax instance.

use crate::ghstats::GradHessPair;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Class probabilities from k-1 raw scores; the k-th score is implicitly 0.
///
/// Computed with max-subtraction so large scores cannot overflow.
pub fn softmax_probs(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(0.0f64, f64::max);
    let mut probs: Vec<f64> = scores
        .iter()
        .copied()
        .chain(std::iter::once(0.0))
        .map(|s| (s - max).exp())
        .collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    probs
}

/// Cross-entropy derivatives for each of the k-1 trained trees.
///
/// For tree c: g = p_c - y_c and h = p_c (1 - p_c), with y one-hot at `label`.
pub fn cross_entropy_grad(scores: &[f64], label: usize) -> Vec<GradHessPair> {
    let probs = softmax_probs(scores);
    debug_assert!(label < probs.len(), "label must be validated by the caller");
    scores
        .iter()
        .enumerate()
        .map(|(c, _)| {
            let p = probs[c];
            let y = if c == label { 1.0 } else { 0.0 };
            GradHessPair::new(p - y, p * (1.0 - p))
                .expect("softmax probabilities are finite")
        })
        .collect()
}

/// Squared-error derivatives: g = prediction - target, h = 1.
pub fn squared_error_grad(score: f64, target: f64) -> GradHessPair {
    GradHessPair::new(score - target, 1.0).expect("finite inputs yield finite derivatives")
}

/// Binary cross-entropy through a max-pooled bag score.
///
/// Returns the argmax instance index (lowest index on ties) and its
/// gradient/Hessian; the derivative at every other instance is exactly zero.
pub fn mil_bce_grad(bag_scores: &[f64], label: bool) -> (usize, GradHessPair) {
    assert!(!bag_scores.is_empty(), "bag must contain at least one instance");
    let mut best = 0;
    for (i, &s) in bag_scores.iter().enumerate().skip(1) {
        if s > bag_scores[best] {
            best = i;
        }
    }
    let p = sigmoid(bag_scores[best]);
    let y = if label { 1.0 } else { 0.0 };
    let pair =
        GradHessPair::new(p - y, p * (1.0 - p)).expect("sigmoid output is finite");
    (best, pair)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_two_way_symmetry() {
        let p = softmax_probs(&[0.0]);
        assert_eq!(p.len(), 2);
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert!((p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn softmax_three_way_symmetry() {
        let p = softmax_probs(&[0.0, 0.0]);
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_ln3_example() {
        let p = softmax_probs(&[3.0f64.ln()]);
        assert!((p[0] - 0.75).abs() < 1e-12);
        assert!((p[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn softmax_sums_to_one_and_stays_positive() {
        // At moderate scores every probability is strictly inside (0, 1); at
        // extreme gaps the dominant one may round to exactly 1.0 in f64, but
        // none may ever reach 0 or go negative.
        for scores in [vec![15.0, -3.0], vec![2.0, -2.0, 0.5]] {
            let p = softmax_probs(&scores);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        }
        for scores in [vec![700.0, 690.0], vec![-40.0; 5]] {
            let p = softmax_probs(&scores);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| v > 0.0 && v <= 1.0));
        }
    }

    #[test]
    fn softmax_stabilization_is_invisible_at_moderate_scores() {
        // Same probabilities as the textbook formula without max-subtraction.
        let scores = [1.25, -0.5, 2.0];
        let raw: Vec<f64> = scores.iter().copied().chain([0.0]).map(f64::exp).collect();
        let total: f64 = raw.iter().sum();
        let p = softmax_probs(&scores);
        for (got, want) in p.iter().zip(raw.iter().map(|e| e / total)) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_binary_at_zero() {
        let g = cross_entropy_grad(&[0.0], 0);
        assert_eq!(g.len(), 1);
        assert!((g[0].g - -0.5).abs() < 1e-12);
        assert!((g[0].h - 0.25).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_hardwired_class_example() {
        // Uniform probabilities, true class is the implicit k-th tree.
        let g = cross_entropy_grad(&[0.0, 0.0], 2);
        for pair in &g {
            assert!((pair.g - 1.0 / 3.0).abs() < 1e-12);
            assert!((pair.h - 2.0 / 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_ln3_example() {
        let g = cross_entropy_grad(&[3.0f64.ln()], 1);
        assert!((g[0].g - 0.75).abs() < 1e-12);
        assert!((g[0].h - 0.1875).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_hessian_bounds() {
        for scores in [vec![0.4, -2.0, 1.3], vec![9.0], vec![-6.0, -6.0]] {
            for label in 0..=scores.len() {
                for pair in cross_entropy_grad(&scores, label) {
                    assert!(pair.h > 0.0 && pair.h <= 0.25, "h = {}", pair.h);
                }
            }
        }
    }

    #[test]
    fn squared_error_cases() {
        assert_eq!(squared_error_grad(0.0, 0.0), GradHessPair { g: 0.0, h: 1.0 });
        assert_eq!(squared_error_grad(5.0, 2.0), GradHessPair { g: 3.0, h: 1.0 });
        assert_eq!(squared_error_grad(-1.5, 2.5), GradHessPair { g: -4.0, h: 1.0 });
    }

    #[test]
    fn mil_single_instance_bag() {
        let (idx, pair) = mil_bce_grad(&[0.0], true);
        assert_eq!(idx, 0);
        assert!((pair.g - -0.5).abs() < 1e-12);
        assert!((pair.h - 0.25).abs() < 1e-12);
    }

    #[test]
    fn mil_argmax_selection() {
        // sigmoid(2) = 0.880797..., derivative values frozen from evaluation.
        let (idx, pair) = mil_bce_grad(&[-1.0, 2.0, 0.0], true);
        assert_eq!(idx, 1);
        assert!((pair.g - -0.11920292202211757).abs() < 1e-12);
        assert!((pair.h - 0.10499358540350662).abs() < 1e-12);
    }

    #[test]
    fn mil_tie_breaks_to_lowest_index() {
        let (idx, pair) = mil_bce_grad(&[3.0, 3.0], false);
        assert_eq!(idx, 0);
        let p = sigmoid(3.0);
        assert!((p - 0.9525741268224334).abs() < 1e-12);
        assert!((pair.g - p).abs() < 1e-12);
        assert!((pair.h - p * (1.0 - p)).abs() < 1e-12);
    }

    // Central finite differences of the stated losses; the acceptance suite
    // runs the full randomized sweep, these pin the protocol per head.

    fn ce_loss(scores: &[f64], label: usize) -> f64 {
        -softmax_probs(scores)[label].ln()
    }

    #[test]
    fn cross_entropy_matches_finite_differences() {
        let scores = [0.7, -1.2, 0.3];
        let eps = 1e-5;
        for label in 0..4 {
            let pairs = cross_entropy_grad(&scores, label);
            for c in 0..scores.len() {
                let mut up = scores;
                let mut dn = scores;
                up[c] += eps;
                dn[c] -= eps;
                let fd_g = (ce_loss(&up, label) - ce_loss(&dn, label)) / (2.0 * eps);
                assert!((pairs[c].g - fd_g).abs() < 1e-6, "g mismatch at c={c}");
                let fd_h = (cross_entropy_grad(&up, label)[c].g
                    - cross_entropy_grad(&dn, label)[c].g)
                    / (2.0 * eps);
                assert!((pairs[c].h - fd_h).abs() < 1e-6, "h mismatch at c={c}");
            }
        }
    }

    #[test]
    fn mil_matches_finite_differences_away_from_ties() {
        let scores = [0.4, 1.9, -0.3];
        let eps = 1e-5;
        let bce = |scores: &[f64], y: f64| {
            let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let p = sigmoid(m);
            -y * p.ln() - (1.0 - y) * (1.0 - p).ln()
        };
        for label in [false, true] {
            let y = if label { 1.0 } else { 0.0 };
            let (idx, pair) = mil_bce_grad(&scores, label);
            let mut up = scores;
            let mut dn = scores;
            up[idx] += eps;
            dn[idx] -= eps;
            let fd_g = (bce(&up, y) - bce(&dn, y)) / (2.0 * eps);
            assert!((pair.g - fd_g).abs() < 1e-6);
            let fd_h = (mil_bce_grad(&up, label).1.g - mil_bce_grad(&dn, label).1.g)
                / (2.0 * eps);
            assert!((pair.h - fd_h).abs() < 1e-6);
        }
    }
}
