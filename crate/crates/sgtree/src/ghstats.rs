//! Running first and second moments of (gradient, Hessian) observations.
//!
//! Each accumulator stores deviation sums (Welford form) rather than raw
//! sums of squares, so variances stay accurate on long streams. Accumulators
//! from disjoint observation sets can be merged with the pairwise update
//! formulas, which is how per-bin statistics are pooled into prospective
//! leaves when splits are scored.

use serde::{Deserialize, Serialize};

use crate::error::SgtError;

/// First and second derivative of the loss with respect to one raw tree score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradHessPair {
    pub g: f64,
    pub h: f64,
}

impl GradHessPair {
    /// Builds a pair, rejecting NaN and infinite components.
    pub fn new(g: f64, h: f64) -> Result<Self, SgtError> {
        if !g.is_finite() {
            return Err(SgtError::NonFinite { context: "gradient", value: g });
        }
        if !h.is_finite() {
            return Err(SgtError::NonFinite { context: "hessian", value: h });
        }
        Ok(Self { g, h })
    }
}

/// Count, means, squared-deviation sums, and the cross-deviation sum of a
/// stream of [`GradHessPair`] observations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GradHessStats {
    n: u64,
    mean_g: f64,
    mean_h: f64,
    m2_g: f64,
    m2_h: f64,
    c_gh: f64,
}

impl GradHessStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn mean_g(&self) -> f64 {
        self.mean_g
    }

    pub fn mean_h(&self) -> f64 {
        self.mean_h
    }

    /// Sum of observed gradients.
    pub fn sum_g(&self) -> f64 {
        self.mean_g * self.n as f64
    }

    /// Sum of observed Hessians.
    pub fn sum_h(&self) -> f64 {
        self.mean_h * self.n as f64
    }

    /// Sample variance of the gradients; 0 for fewer than two observations.
    pub fn var_g(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2_g / (self.n - 1) as f64
        }
    }

    /// Sample variance of the Hessians; 0 for fewer than two observations.
    pub fn var_h(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2_h / (self.n - 1) as f64
        }
    }

    /// Sample covariance of gradient and Hessian; 0 for fewer than two observations.
    pub fn cov_gh(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.c_gh / (self.n - 1) as f64
        }
    }

    /// Folds one observation into the accumulator (Welford update).
    pub fn observe(&mut self, obs: GradHessPair) {
        self.n += 1;
        let n = self.n as f64;
        let dg = obs.g - self.mean_g;
        self.mean_g += dg / n;
        let dh = obs.h - self.mean_h;
        self.mean_h += dh / n;
        // dg is the deviation from the old mean, the second factor from the new.
        self.m2_g += dg * (obs.g - self.mean_g);
        self.m2_h += dh * (obs.h - self.mean_h);
        self.c_gh += dg * (obs.h - self.mean_h);
    }

    /// Combines two accumulators as if their observation streams were concatenated.
    pub fn merge(&self, other: &Self) -> Self {
        if self.n == 0 {
            return other.clone();
        }
        if other.n == 0 {
            return self.clone();
        }
        let na = self.n as f64;
        let nb = other.n as f64;
        let n = na + nb;
        let dg = other.mean_g - self.mean_g;
        let dh = other.mean_h - self.mean_h;
        let w = na * nb / n;
        GradHessStats {
            n: self.n + other.n,
            mean_g: self.mean_g + dg * nb / n,
            mean_h: self.mean_h + dh * nb / n,
            m2_g: self.m2_g + other.m2_g + dg * dg * w,
            m2_h: self.m2_h + other.m2_h + dh * dh * w,
            c_gh: self.c_gh + other.c_gh + dg * dh * w,
        }
    }

    /// Mean and sample variance of the per-observation loss change
    /// `L_i = g_i v + h_i v^2 / 2` for a fixed leaf-value delta `v`.
    ///
    /// The variance expands to `v^2 Var(G) + v^4 Var(H) / 4 + v^3 Cov(G, H)`,
    /// which can dip slightly below zero in floating point; it is clamped.
    /// With fewer than two observations the variance is reported as 0 and the
    /// mean as 0 when the accumulator is empty.
    pub fn delta_loss_moments(&self, v: f64) -> (f64, f64) {
        if self.n == 0 {
            return (0.0, 0.0);
        }
        let mean = self.mean_g * v + 0.5 * self.mean_h * v * v;
        let v2 = v * v;
        let var = v2 * self.var_g() + 0.25 * v2 * v2 * self.var_h() + v2 * v * self.cov_gh();
        (mean, var.max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Two-pass reference: exact means, deviation sums, and cross sum.
    fn two_pass(obs: &[(f64, f64)]) -> GradHessStats {
        if obs.is_empty() {
            return GradHessStats::new();
        }
        let n = obs.len() as f64;
        let mean_g = obs.iter().map(|o| o.0).sum::<f64>() / n;
        let mean_h = obs.iter().map(|o| o.1).sum::<f64>() / n;
        GradHessStats {
            n: obs.len() as u64,
            mean_g,
            mean_h,
            m2_g: obs.iter().map(|o| (o.0 - mean_g).powi(2)).sum(),
            m2_h: obs.iter().map(|o| (o.1 - mean_h).powi(2)).sum(),
            c_gh: obs.iter().map(|o| (o.0 - mean_g) * (o.1 - mean_h)).sum(),
        }
    }

    fn fold(obs: &[(f64, f64)]) -> GradHessStats {
        let mut s = GradHessStats::new();
        for &(g, h) in obs {
            s.observe(GradHessPair::new(g, h).unwrap());
        }
        s
    }

    fn assert_close(a: &GradHessStats, b: &GradHessStats, tol: f64) {
        assert_eq!(a.n, b.n);
        for (x, y, what) in [
            (a.mean_g, b.mean_g, "mean_g"),
            (a.mean_h, b.mean_h, "mean_h"),
            (a.m2_g, b.m2_g, "m2_g"),
            (a.m2_h, b.m2_h, "m2_h"),
            (a.c_gh, b.c_gh, "c_gh"),
        ] {
            let scale = x.abs().max(y.abs()).max(1.0);
            assert!((x - y).abs() <= tol * scale, "{what}: {x} vs {y}");
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(GradHessPair::new(f64::NAN, 1.0).is_err());
        assert!(GradHessPair::new(1.0, f64::INFINITY).is_err());
        assert!(GradHessPair::new(0.0, 0.0).is_ok());
    }

    #[test]
    fn single_observation_has_zero_spread() {
        let s = fold(&[(1.0, 1.0)]);
        assert_eq!(s.n(), 1);
        assert_eq!(s.mean_g(), 1.0);
        assert_eq!(s.mean_h(), 1.0);
        assert_eq!(s.m2_g, 0.0);
        assert_eq!(s.m2_h, 0.0);
        assert_eq!(s.c_gh, 0.0);
    }

    #[test]
    fn two_point_textbook_moments() {
        let s = fold(&[(1.0, 1.0), (2.0, 3.0)]);
        assert!((s.mean_g() - 1.5).abs() < 1e-15);
        assert!((s.mean_h() - 2.0).abs() < 1e-15);
        assert!((s.var_g() - 0.5).abs() < 1e-12);
        assert!((s.var_h() - 2.0).abs() < 1e-12);
        assert!((s.cov_gh() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_sequence_has_zero_variance() {
        let c = 2.75;
        let s = fold(&vec![(c, c); 17]);
        assert_eq!(s.n(), 17);
        assert_eq!(s.var_g(), 0.0);
        assert_eq!(s.var_h(), 0.0);
        assert_eq!(s.cov_gh(), 0.0);
        assert!((s.mean_g() - c).abs() < 1e-12);
    }

    #[test]
    fn merge_of_singletons_matches_two_pass() {
        let a = fold(&[(1.0, 1.0)]);
        let b = fold(&[(2.0, 3.0)]);
        assert_close(&a.merge(&b), &two_pass(&[(1.0, 1.0), (2.0, 3.0)]), 1e-12);
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let s = fold(&[(0.4, 1.2), (-0.3, 0.8), (1.1, 1.0)]);
        let empty = GradHessStats::new();
        assert_eq!(s.merge(&empty), s);
        assert_eq!(empty.merge(&s), s);
        assert_eq!(empty.merge(&GradHessStats::new()), GradHessStats::new());
    }

    #[test]
    fn delta_loss_moments_zero_v() {
        let s = fold(&[(1.0, 1.0), (2.0, 3.0)]);
        assert_eq!(s.delta_loss_moments(0.0), (0.0, 0.0));
    }

    #[test]
    fn delta_loss_moments_unit_v() {
        let s = fold(&[(1.0, 1.0), (2.0, 3.0), (0.5, 0.1)]);
        let (_, var) = s.delta_loss_moments(1.0);
        let expect = s.var_g() + 0.25 * s.var_h() + s.cov_gh();
        assert!((var - expect).abs() < 1e-12);
    }

    #[test]
    fn delta_loss_moments_frozen_example() {
        // Cross-checked by evaluating L_i per observation:
        // L_1 = -0.375, L_2 = -0.625 -> mean -0.5, sample var 0.03125.
        let s = fold(&[(1.0, 1.0), (2.0, 3.0)]);
        let (mean, var) = s.delta_loss_moments(-0.5);
        assert!((mean - -0.5).abs() < 1e-12);
        assert!((var - 0.03125).abs() < 1e-12);
    }

    #[test]
    fn delta_loss_variance_undefined_below_two() {
        let s = fold(&[(3.0, 1.0)]);
        let (mean, var) = s.delta_loss_moments(2.0);
        assert!((mean - (3.0 * 2.0 + 0.5 * 1.0 * 4.0)).abs() < 1e-12);
        assert_eq!(var, 0.0);
    }

    fn obs_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
        proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 0..120)
    }

    proptest! {
        #[test]
        fn fold_matches_two_pass(obs in obs_strategy()) {
            assert_close(&fold(&obs), &two_pass(&obs), 1e-9);
        }

        #[test]
        fn split_and_merge_matches_fold(obs in obs_strategy(), cut in 0usize..120) {
            let cut = cut.min(obs.len());
            let merged = fold(&obs[..cut]).merge(&fold(&obs[cut..]));
            assert_close(&merged, &fold(&obs), 1e-9);
        }

        #[test]
        fn merge_is_associative_and_commutative(
            a in obs_strategy(), b in obs_strategy(), c in obs_strategy()
        ) {
            let (sa, sb, sc) = (fold(&a), fold(&b), fold(&c));
            assert_close(&sa.merge(&sb), &sb.merge(&sa), 1e-9);
            assert_close(&sa.merge(&sb).merge(&sc), &sa.merge(&sb.merge(&sc)), 1e-9);
        }

        #[test]
        fn cauchy_schwarz_holds(obs in obs_strategy(), cut in 0usize..120) {
            let cut = cut.min(obs.len());
            for s in [fold(&obs), fold(&obs[..cut]).merge(&fold(&obs[cut..]))] {
                let bound = (s.m2_g * s.m2_h).sqrt();
                prop_assert!(s.c_gh.abs() <= bound + 1e-9 * bound.max(1.0));
            }
        }

        #[test]
        fn delta_loss_variance_matches_explicit_terms(
            obs in proptest::collection::vec((-10.0f64..10.0, 0.0f64..5.0), 2..80),
            v in -2.0f64..2.0,
        ) {
            // Sample moments of the explicit L_i = g_i v + h_i v^2 / 2 values.
            let l: Vec<f64> = obs.iter().map(|&(g, h)| g * v + 0.5 * h * v * v).collect();
            let mean = l.iter().sum::<f64>() / l.len() as f64;
            let var = l.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (l.len() - 1) as f64;
            let (got_mean, got_var) = fold(&obs).delta_loss_moments(v);
            let scale = mean.abs().max(1.0);
            prop_assert!((got_mean - mean).abs() <= 1e-9 * scale);
            let vscale = var.abs().max(1.0);
            prop_assert!((got_var - var).abs() <= 1e-9 * vscale);
        }
    }
}
