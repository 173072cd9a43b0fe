//! Seeded shuffling with a fixed generator and a fixed index-sampling rule,
//! so one seed gives one permutation on every platform and under every
//! dependency version.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

pub fn seeded_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Fisher–Yates with explicit rejection sampling for the bounded draws.
pub fn shuffle_in_place<T>(items: &mut [T], rng: &mut impl RngCore) {
    for i in (1..items.len()).rev() {
        let j = bounded_u64(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

/// Uniform draw from [0, 1) using the top 53 bits of one generator word.
/// Handy for synthetic data generators that must behave the same everywhere.
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Uniform draw from [0, bound) by rejecting the tail of the 2^64 range that
/// does not divide evenly.
fn bounded_u64(rng: &mut impl RngCore, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    // 2^64 mod bound, computed without overflow.
    let overhang = (u64::MAX % bound + 1) % bound;
    let limit = u64::MAX - overhang;
    loop {
        let v = rng.next_u64();
        if v <= limit {
            return v % bound;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = seeded_rng(7);
        let mut items: Vec<u32> = (0..100).collect();
        shuffle_in_place(&mut items, &mut rng);
        let mut sorted = items.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        assert_ne!(items, sorted, "100 elements staying in order is astronomically unlikely");
    }

    #[test]
    fn same_seed_same_permutation() {
        let shuffle = |seed: u64| {
            let mut rng = seeded_rng(seed);
            let mut items: Vec<u32> = (0..50).collect();
            shuffle_in_place(&mut items, &mut rng);
            items
        };
        assert_eq!(shuffle(42), shuffle(42));
        assert_ne!(shuffle(42), shuffle(43));
    }

    #[test]
    fn pinned_permutation_for_seed_42() {
        // Guards the generator and the index-sampling rule against silent
        // changes; recorded from this implementation.
        let mut rng = seeded_rng(42);
        let mut items: Vec<u32> = (0..10).collect();
        shuffle_in_place(&mut items, &mut rng);
        assert_eq!(items, pinned_seed_42());
    }

    fn pinned_seed_42() -> Vec<u32> {
        // See test above; the value is checked in by running the generator
        // once and freezing the output.
        vec![4, 2, 0, 1, 9, 7, 3, 5, 8, 6]
    }

    #[test]
    fn unit_draws_stay_in_range_with_sane_mean() {
        let mut rng = seeded_rng(5);
        let mut sum = 0.0;
        for _ in 0..20_000 {
            let v = unit_f64(&mut rng);
            assert!((0.0..1.0).contains(&v));
            sum += v;
        }
        let mean = sum / 20_000.0;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn bounded_draws_cover_range_roughly_uniformly() {
        let mut rng = seeded_rng(1);
        let mut counts = [0u32; 3];
        for _ in 0..30_000 {
            counts[bounded_u64(&mut rng, 3) as usize] += 1;
        }
        for &c in &counts {
            assert!((9_000..11_000).contains(&c), "counts {counts:?} far from uniform");
        }
    }
}
