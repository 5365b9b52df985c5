//! The `J x J` contrast matrix of a `2^K` factorial design and the
//! factorial-effect transforms built on it.
//!
//! Column 0 is the all-ones vector (grand mean). The main-effect column
//! for factor `k` carries `-1` in row `j` when factor `k` sits at level 0
//! in treatment `j`, and `+1` otherwise. Interaction columns are
//! element-wise products of their factors' main-effect columns. Columns
//! are ordered by the factor-subset bitmask (factor 1 = most significant
//! bit, the same convention as the treatment numbering), so column `c`
//! describes the subset whose mask is `c`.
//!
//! The columns are orthogonal: `L^T L = L L^T = 2^K I`.

use alloc::format;
use alloc::vec::Vec;

use crate::design::{treatment_count, MAX_FACTORS};
use crate::error::{Error, Result};
use crate::variance::PotentialOutcomeMatrix;

/// Contrast matrix `L` with entries in `{-1, +1}`, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContrastMatrix {
    k: u32,
    j: usize,
    entries: Vec<i8>,
}

impl ContrastMatrix {
    /// Build the contrast matrix for `K` factors, `1 <= K <= 16`.
    pub fn build(k: u32) -> Result<Self> {
        if k == 0 || k > MAX_FACTORS {
            return Err(Error::InvalidSpec(format!(
                "K must be between 1 and {MAX_FACTORS}, got {k}"
            )));
        }
        let j = treatment_count(k);
        let mut entries = Vec::new();
        entries
            .try_reserve_exact(j * j)
            .map_err(|_| Error::InvalidSpec(format!("contrast matrix for K = {k} does not fit in memory")))?;
        for t in 0..j {
            for c in 0..j {
                entries.push(entry_sign(t, c));
            }
        }
        Ok(Self { k, j, entries })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Dimension `J = 2^K`.
    pub fn dim(&self) -> usize {
        self.j
    }

    /// Entry in row `t` (0-based treatment `j - 1`) and column `c`.
    #[inline]
    pub fn entry(&self, t: usize, c: usize) -> i8 {
        self.entries[t * self.j + c]
    }

    /// Row `t` as the contrast pattern of treatment `t + 1`.
    pub fn row(&self, t: usize) -> &[i8] {
        &self.entries[t * self.j..(t + 1) * self.j]
    }

    /// Factorial effects from a vector of per-treatment mean outcomes:
    /// `tau = 2^-(K-1) L^T ybar`. Element 0 is twice the grand mean.
    pub fn effects_from_means(&self, means: &[f64]) -> EffectVector {
        debug_assert_eq!(means.len(), self.j);
        let scale = libm::exp2(-((self.k as i32 - 1) as f64));
        let mut values = alloc::vec![0.0; self.j];
        for (c, out) in values.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (t, &m) in means.iter().enumerate() {
                acc += f64::from(self.entry(t, c)) * m;
            }
            *out = scale * acc;
        }
        EffectVector { values }
    }

    /// Mean outcomes back from an effect vector: `ybar = (1/2) L tau`.
    pub fn means_from_effects(&self, effects: &EffectVector) -> Vec<f64> {
        debug_assert_eq!(effects.values.len(), self.j);
        let mut means = alloc::vec![0.0; self.j];
        for (t, out) in means.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, &v) in effects.values.iter().enumerate() {
                acc += f64::from(self.entry(t, c)) * v;
            }
            *out = 0.5 * acc;
        }
        means
    }
}

/// Sign of `L[t][c]`: the product over factors in subset mask `c` of that
/// factor's level sign in treatment `t`, i.e. `-1` raised to the number of
/// subset factors sitting at level 0.
#[inline]
fn entry_sign(t: usize, c: usize) -> i8 {
    if (c & !t).count_ones() % 2 == 1 {
        -1
    } else {
        1
    }
}

/// Factorial effects `tau`. Element 0 is `2 tau_0` (twice the grand mean);
/// elements `1..J-1` are the main effects and interactions in contrast
/// column order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EffectVector {
    pub values: Vec<f64>,
}

impl EffectVector {
    pub fn grand_mean(&self) -> f64 {
        self.values[0] / 2.0
    }
}

/// Population-level factorial effects `tau = 2^-(K-1) L^T Ybar` from a full
/// potential-outcome matrix.
pub fn population_effects(po: &PotentialOutcomeMatrix) -> Result<EffectVector> {
    let l = ContrastMatrix::build(po.k())?;
    Ok(l.effects_from_means(&po.column_means()))
}

/// Unbiased effect estimates `tauhat = 2^-(K-1) L^T ybar` from observed
/// `(treatment j, outcome)` pairs with 1-based treatments.
///
/// Every treatment group must have at least one observation.
pub fn estimate_effects(observed: &[(usize, f64)], k: u32) -> Result<EffectVector> {
    let j = treatment_count(k);
    let means = group_means(observed, j)?;
    let l = ContrastMatrix::build(k)?;
    Ok(l.effects_from_means(&means))
}

pub(crate) fn group_means(observed: &[(usize, f64)], j: usize) -> Result<Vec<f64>> {
    let mut sums = alloc::vec![0.0; j];
    let mut counts = alloc::vec![0usize; j];
    for &(t, y) in observed {
        if t == 0 || t > j {
            return Err(Error::InvalidSpec(format!(
                "treatment index {t} outside 1..={j}"
            )));
        }
        sums[t - 1] += y;
        counts[t - 1] += 1;
    }
    for (t, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::EmptyGroup { treatment: t + 1 });
        }
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| s / c as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::treatment_levels;
    use approx::assert_abs_diff_eq;

    #[test]
    fn k1_matrix_is_the_two_by_two_pattern() {
        let l = ContrastMatrix::build(1).unwrap();
        assert_eq!(l.row(0), &[1, -1]);
        assert_eq!(l.row(1), &[1, 1]);
    }

    #[test]
    fn k_out_of_range_rejected() {
        assert!(ContrastMatrix::build(0).is_err());
        assert!(ContrastMatrix::build(17).is_err());
    }

    #[test]
    fn interaction_column_is_product_of_main_effects() {
        let l = ContrastMatrix::build(2).unwrap();
        // Factor 1 mask = 0b10, factor 2 mask = 0b01, interaction = 0b11.
        for t in 0..4 {
            assert_eq!(l.entry(t, 3), l.entry(t, 2) * l.entry(t, 1));
        }
    }

    #[test]
    fn main_effect_sign_follows_factor_level() {
        for k in 1..=4u32 {
            let l = ContrastMatrix::build(k).unwrap();
            for t in 0..l.dim() {
                let levels = treatment_levels(t + 1, k);
                for factor in 1..=k {
                    let mask = 1usize << (k - factor);
                    let want = if levels[(factor - 1) as usize] == 0 {
                        -1
                    } else {
                        1
                    };
                    assert_eq!(l.entry(t, mask), want);
                }
            }
        }
    }

    #[test]
    fn k3_gram_matrix_is_eight_identity() {
        // Direct multiplication oracle in integer arithmetic.
        let l = ContrastMatrix::build(3).unwrap();
        let j = l.dim();
        for a in 0..j {
            for b in 0..j {
                let dot: i32 = (0..j)
                    .map(|t| i32::from(l.entry(t, a)) * i32::from(l.entry(t, b)))
                    .sum();
                assert_eq!(dot, if a == b { 8 } else { 0 });
            }
        }
    }

    #[test]
    fn contrast_columns_sum_to_zero() {
        for k in 1..=5u32 {
            let l = ContrastMatrix::build(k).unwrap();
            for c in 1..l.dim() {
                let s: i32 = (0..l.dim()).map(|t| i32::from(l.entry(t, c))).sum();
                assert_eq!(s, 0, "column {c} of K={k}");
            }
        }
    }

    #[test]
    fn population_effects_single_factor_shift() {
        // Every unit has outcomes (0, c): grand mean c/2, effect c.
        let po = PotentialOutcomeMatrix::new(
            alloc::vec![alloc::vec![0.0, 3.0], alloc::vec![0.0, 3.0]],
            None,
        )
        .unwrap();
        let tau = population_effects(&po).unwrap();
        assert_abs_diff_eq!(tau.values[0], 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(tau.values[1], 3.0, epsilon = 1e-15);
    }

    #[test]
    fn population_effects_constant_matrix_has_no_effects() {
        let po = PotentialOutcomeMatrix::new(alloc::vec![alloc::vec![5.0; 8]; 3], None).unwrap();
        let tau = population_effects(&po).unwrap();
        assert_abs_diff_eq!(tau.values[0], 10.0, epsilon = 1e-12);
        for v in &tau.values[1..] {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }

    /// Independent oracle: effect for column `c` is the mean of treatment
    /// means whose subset-parity sign is +1 minus the mean of those with -1,
    /// with signs recomputed from factor levels rather than via the matrix.
    fn brute_force_effects(po: &PotentialOutcomeMatrix) -> Vec<f64> {
        let k = po.k();
        let j = po.j();
        let means = po.column_means();
        (0..j)
            .map(|c| {
                if c == 0 {
                    return 2.0 * means.iter().sum::<f64>() / j as f64;
                }
                let mut plus = alloc::vec![];
                let mut minus = alloc::vec![];
                for (t, &m) in means.iter().enumerate() {
                    let levels = treatment_levels(t + 1, k);
                    let zeros_in_subset = (0..k)
                        .filter(|b| (c >> (k - 1 - b)) & 1 == 1 && levels[*b as usize] == 0)
                        .count();
                    if zeros_in_subset % 2 == 0 {
                        plus.push(m);
                    } else {
                        minus.push(m);
                    }
                }
                plus.iter().sum::<f64>() / plus.len() as f64
                    - minus.iter().sum::<f64>() / minus.len() as f64
            })
            .collect()
    }

    #[test]
    fn population_effects_match_contrast_average_oracle() {
        let rows = alloc::vec![
            alloc::vec![0.7, -1.2, 3.4, 0.1],
            alloc::vec![1.1, 0.3, -0.5, 2.2],
            alloc::vec![-0.4, 1.9, 0.8, -1.0],
            alloc::vec![2.5, -0.6, 1.3, 0.9],
            alloc::vec![0.0, 0.4, -2.1, 1.7],
            alloc::vec![1.8, 2.2, 0.6, -0.3],
        ];
        let po = PotentialOutcomeMatrix::new(rows, None).unwrap();
        let got = population_effects(&po).unwrap().values;
        let want = brute_force_effects(&po);
        for (g, w) in got.iter().zip(&want) {
            assert_abs_diff_eq!(g, w, epsilon = 1e-12);
        }
    }

    #[test]
    fn estimate_effects_sum_and_difference() {
        // K = 1 with group means 1.0 and 3.0: tauhat = (4, 2).
        let obs = [(1usize, 0.5), (1, 1.5), (2, 3.0)];
        let tau = estimate_effects(&obs, 1).unwrap();
        assert_abs_diff_eq!(tau.values[0], 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(tau.values[1], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn estimate_effects_direct_formula() {
        // One observation per group with value j: tauhat = 2^-(K-1) L^T (1..J).
        let k = 3u32;
        let obs: Vec<(usize, f64)> = (1..=8).map(|j| (j, j as f64)).collect();
        let tau = estimate_effects(&obs, k).unwrap();
        let l = ContrastMatrix::build(k).unwrap();
        for c in 0..8 {
            let want = 0.25
                * (0..8)
                    .map(|t| f64::from(l.entry(t, c)) * (t + 1) as f64)
                    .sum::<f64>();
            assert_abs_diff_eq!(tau.values[c], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn estimate_effects_requires_every_group() {
        let obs = [(1usize, 1.0), (2, 2.0), (3, 3.0)];
        let err = estimate_effects(&obs, 2).unwrap_err();
        assert_eq!(err, Error::EmptyGroup { treatment: 4 });
    }

    #[test]
    fn means_roundtrip_through_effects() {
        let means = alloc::vec![0.3, 1.7, -2.2, 0.9, 4.1, -0.8, 1.1, 2.6];
        let l = ContrastMatrix::build(3).unwrap();
        let tau = l.effects_from_means(&means);
        let back = l.means_from_effects(&tau);
        for (a, b) in means.iter().zip(&back) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }
}
