//! Seeded train/dev split stratified by span count.
//!
//! Shuffling is portable across implementations and platforms:
//!
//! - PRNG: SplitMix64. State `s` starts at the seed; each draw does
//!   `s += 0x9E3779B97F4A7C15`, then `z = s`,
//!   `z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9`,
//!   `z = (z ^ (z >> 27)) * 0x94D049BB133111EB`, returns `z ^ (z >> 31)`
//!   (wrapping 64-bit arithmetic).
//! - Shuffle: Fisher–Yates from the last index down; for index `i` the swap
//!   partner is `draw() % (i + 1)`.
//! - Each stratum gets its own generator seeded with `seed ^ (stratum * 0xD1B54A32D192ED03)`,
//!   strata are visited in ascending span count, and input order is the
//!   order before shuffling.
//! - Allocation: stratum `k` with `n_k` documents first takes `floor(n_k * ratio)`
//!   training documents; the leftover up to `round(N * ratio)` goes one each
//!   to the strata with the largest fractional parts (ties to the smaller
//!   span count). The first `train_k` shuffled documents go to train.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            items.swap(i, j);
        }
    }
}

fn stratum_seed(seed: u64, stratum: usize) -> u64 {
    seed ^ (stratum as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Splits `docs` into (train, dev) with `ratio` of every stratum in train,
/// give or take one document. `stratum` maps a document to its span count.
pub fn stratified_split<T>(
    docs: Vec<T>,
    stratum: impl Fn(&T) -> usize,
    ratio: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio {ratio} outside (0, 1)")));
    }
    let total = docs.len();
    let mut strata: BTreeMap<usize, Vec<T>> = BTreeMap::new();
    for d in docs {
        strata.entry(stratum(&d)).or_default().push(d);
    }

    // Exact fractional shares are compared with a small tolerance so that
    // e.g. 10 * 0.8 counts as 8, not 7.999...
    const EPS: f64 = 1e-9;
    let mut alloc: Vec<(usize, usize, f64)> = strata
        .iter()
        .map(|(&k, v)| {
            let share = v.len() as f64 * ratio;
            let floor = (share + EPS).floor();
            (k, floor as usize, (share - floor).max(0.0))
        })
        .collect();
    let target = (total as f64 * ratio + EPS).round() as usize;
    let assigned: usize = alloc.iter().map(|a| a.1).sum();
    let mut order: Vec<usize> = (0..alloc.len()).collect();
    order.sort_by(|&a, &b| alloc[b].2.total_cmp(&alloc[a].2).then(alloc[a].0.cmp(&alloc[b].0)));
    for &i in order.iter().take(target.saturating_sub(assigned)) {
        if alloc[i].2 > EPS {
            alloc[i].1 += 1;
        }
    }

    let mut train = Vec::new();
    let mut dev = Vec::new();
    for ((k, mut group), (_, n_train, _)) in strata.into_iter().zip(alloc) {
        SplitMix64::new(stratum_seed(seed, k)).shuffle(&mut group);
        let rest = group.split_off(n_train);
        train.extend(group);
        dev.extend(rest);
    }
    Ok((train, dev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn splitmix_reference_values() {
        // First outputs for seed 1234567, as published with the reference implementation.
        let mut g = SplitMix64::new(1234567);
        assert_eq!(g.next_u64(), 6457827717110365317);
        assert_eq!(g.next_u64(), 3203168211198807973);
        assert_eq!(g.next_u64(), 9817491932198370423);
    }

    #[test]
    fn split_examples() {
        let docs: Vec<usize> = (0..100).collect();
        let (tr, dv) = stratified_split(docs, |_| 1, 0.8, 7).unwrap();
        assert_eq!((tr.len(), dv.len()), (80, 20));

        let docs: Vec<(usize, usize)> = (0..20).map(|i| (i, i % 2)).collect();
        let (tr, dv) = stratified_split(docs, |d| d.1, 0.8, 7).unwrap();
        for k in 0..2 {
            assert_eq!(tr.iter().filter(|d| d.1 == k).count(), 8);
            assert_eq!(dv.iter().filter(|d| d.1 == k).count(), 2);
        }

        let docs: Vec<usize> = (0..57).collect();
        let a = stratified_split(docs.clone(), |d| d % 4, 0.8, 99).unwrap();
        let b = stratified_split(docs.clone(), |d| d % 4, 0.8, 99).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(docs, |d| d % 4, 0.8, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_edge_cases() {
        let (tr, dv) = stratified_split(Vec::<u8>::new(), |_| 0, 0.8, 1).unwrap();
        assert!(tr.is_empty() && dv.is_empty());
        assert!(stratified_split(vec![1], |_| 0, 0.0, 1).is_err());
        assert!(stratified_split(vec![1], |_| 0, 1.0, 1).is_err());
        assert!(stratified_split(vec![1], |_| 0, f64::NAN, 1).is_err());
    }

    proptest! {
        #[test]
        fn split_is_a_stratified_partition(
            strata in prop::collection::vec(0usize..5, 0..200),
            ratio in 0.05f64..0.95,
            seed in any::<u64>(),
        ) {
            let docs: Vec<(usize, usize)> = strata.iter().copied().enumerate().collect();
            let (tr, dv) = stratified_split(docs.clone(), |d| d.1, ratio, seed).unwrap();
            let mut all: Vec<_> = tr.iter().chain(&dv).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, docs);
            for k in 0..5 {
                let n = strata.iter().filter(|&&s| s == k).count() as f64;
                let got = tr.iter().filter(|d| d.1 == k).count() as f64;
                prop_assert!((got - n * ratio).abs() <= 1.0, "stratum {} has {} of {}", k, got, n);
            }
        }
    }
}
