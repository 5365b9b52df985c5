//! Finite-population and sample variance machinery: per-treatment variance
//! specifications (flat and per-block), the potential-outcome matrix, and
//! the estimators that produce variances from pilot data.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Mat;

/// Per-treatment finite-population variances `S^2_j` for a completely
/// randomized design. The length must be `J = 2^K`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceSpec {
    s2: Vec<f64>,
}

impl VarianceSpec {
    pub fn new(s2: Vec<f64>) -> Result<Self> {
        validate_treatment_len(s2.len())?;
        validate_nonneg(&s2)?;
        Ok(Self { s2 })
    }

    pub fn values(&self) -> &[f64] {
        &self.s2
    }

    /// Number of treatment combinations.
    pub fn j(&self) -> usize {
        self.s2.len()
    }

    pub fn k(&self) -> u32 {
        self.s2.len().trailing_zeros()
    }
}

/// Per-block, per-treatment variances `S^2_{h,j}` plus the block sizes
/// `M_h`, for randomized block designs.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVarianceSpec {
    s2: Vec<Vec<f64>>,
    sizes: Vec<usize>,
}

impl BlockVarianceSpec {
    pub fn new(s2: Vec<Vec<f64>>, sizes: Vec<usize>) -> Result<Self> {
        if s2.is_empty() {
            return Err(Error::InvalidSpec(String::from(
                "block variance matrix needs at least one block",
            )));
        }
        if s2.len() != sizes.len() {
            return Err(Error::InvalidSpec(format!(
                "{} variance rows but {} block sizes",
                s2.len(),
                sizes.len()
            )));
        }
        let j = s2[0].len();
        validate_treatment_len(j)?;
        for (h, row) in s2.iter().enumerate() {
            if row.len() != j {
                return Err(Error::InvalidSpec(format!(
                    "variance row for block {} has length {}, expected {j}",
                    h + 1,
                    row.len()
                )));
            }
            validate_nonneg(row)?;
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidSpec(String::from("block sizes must be positive")));
        }
        Ok(Self { s2, sizes })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.s2
    }

    pub fn row(&self, h: usize) -> &[f64] {
        &self.s2[h]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Number of blocks `H`.
    pub fn h(&self) -> usize {
        self.sizes.len()
    }

    pub fn j(&self) -> usize {
        self.s2[0].len()
    }

    pub fn k(&self) -> u32 {
        self.j().trailing_zeros()
    }

    /// Total units `N = sum of M_h`.
    pub fn n(&self) -> usize {
        self.sizes.iter().sum()
    }
}

fn validate_treatment_len(j: usize) -> Result<()> {
    if j < 2 || !j.is_power_of_two() {
        return Err(Error::InvalidSpec(format!(
            "variance vector length must be a power of two (J = 2^K, K >= 1), got {j}"
        )));
    }
    Ok(())
}

#[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN as well
fn validate_nonneg(values: &[f64]) -> Result<()> {
    for (i, &v) in values.iter().enumerate() {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "variance for treatment {} must be finite and nonnegative, got {v}",
                i + 1
            )));
        }
    }
    Ok(())
}

/// The full `N x J` matrix of potential outcomes, optionally with 0-based
/// block labels per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomeMatrix {
    outcomes: Mat,
    blocks: Option<Vec<usize>>,
    n_blocks: usize,
}

impl PotentialOutcomeMatrix {
    /// `rows[i]` holds the `J` potential outcomes of unit `i`; `blocks`,
    /// when present, assigns each unit to exactly one block `0..H`, and
    /// every block must be non-empty.
    pub fn new(rows: Vec<Vec<f64>>, blocks: Option<Vec<usize>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidSpec(String::from(
                "potential-outcome matrix needs at least one unit",
            )));
        }
        let j = rows[0].len();
        validate_treatment_len(j)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != j {
                return Err(Error::InvalidSpec(format!(
                    "unit {i} has {} outcomes, expected {j}",
                    row.len()
                )));
            }
        }
        let n_blocks = match &blocks {
            None => 0,
            Some(labels) => {
                if labels.len() != rows.len() {
                    return Err(Error::InvalidSpec(format!(
                        "{} block labels for {} units",
                        labels.len(),
                        rows.len()
                    )));
                }
                let h = labels.iter().max().map_or(0, |m| m + 1);
                let mut seen = alloc::vec![false; h];
                for &b in labels {
                    seen[b] = true;
                }
                if let Some(missing) = seen.iter().position(|s| !s) {
                    return Err(Error::InvalidSpec(format!("block {missing} is empty")));
                }
                h
            }
        };
        Ok(Self {
            outcomes: Mat::from_rows(&rows),
            blocks,
            n_blocks,
        })
    }

    pub fn n(&self) -> usize {
        self.outcomes.rows()
    }

    pub fn j(&self) -> usize {
        self.outcomes.cols()
    }

    pub fn k(&self) -> u32 {
        self.j().trailing_zeros()
    }

    /// Potential outcome of unit `i` under 0-based treatment column `t`.
    #[inline]
    pub fn outcome(&self, i: usize, t: usize) -> f64 {
        self.outcomes.get(i, t)
    }

    pub fn block_labels(&self) -> Option<&[usize]> {
        self.blocks.as_deref()
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    /// Block sizes `M_h` in label order; empty when unblocked.
    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = alloc::vec![0usize; self.n_blocks];
        if let Some(labels) = &self.blocks {
            for &b in labels {
                sizes[b] += 1;
            }
        }
        sizes
    }

    pub fn column_means(&self) -> Vec<f64> {
        let n = self.n() as f64;
        (0..self.j())
            .map(|t| (0..self.n()).map(|i| self.outcomes.get(i, t)).sum::<f64>() / n)
            .collect()
    }

    /// Finite-population variances `S^2_j` with divisor `N - 1`.
    pub fn column_variances(&self) -> Result<VarianceSpec> {
        if self.n() < 2 {
            return Err(Error::InvalidSpec(String::from(
                "finite-population variance needs N >= 2",
            )));
        }
        let means = self.column_means();
        let denom = (self.n() - 1) as f64;
        let s2 = (0..self.j())
            .map(|t| {
                (0..self.n())
                    .map(|i| {
                        let d = self.outcomes.get(i, t) - means[t];
                        d * d
                    })
                    .sum::<f64>()
                    / denom
            })
            .collect();
        VarianceSpec::new(s2)
    }

    /// Per-block finite-population variances `S^2_{h,j}` with divisor
    /// `M_h - 1`. Requires block labels and every block of size >= 2.
    pub fn block_variances(&self) -> Result<BlockVarianceSpec> {
        let labels = self.blocks.as_ref().ok_or_else(|| {
            Error::InvalidSpec(String::from("potential-outcome matrix has no block labels"))
        })?;
        let sizes = self.block_sizes();
        if let Some(h) = sizes.iter().position(|&m| m < 2) {
            return Err(Error::InvalidSpec(format!(
                "block {} has fewer than 2 units; its variances are undefined",
                h + 1
            )));
        }
        let j = self.j();
        let mut sums = alloc::vec![alloc::vec![0.0; j]; self.n_blocks];
        for (i, &b) in labels.iter().enumerate() {
            for t in 0..j {
                sums[b][t] += self.outcomes.get(i, t);
            }
        }
        let means: Vec<Vec<f64>> = sums
            .iter()
            .zip(&sizes)
            .map(|(row, &m)| row.iter().map(|s| s / m as f64).collect())
            .collect();
        let mut devs = alloc::vec![alloc::vec![0.0; j]; self.n_blocks];
        for (i, &b) in labels.iter().enumerate() {
            for t in 0..j {
                let d = self.outcomes.get(i, t) - means[b][t];
                devs[b][t] += d * d;
            }
        }
        let s2 = devs
            .iter()
            .zip(&sizes)
            .map(|(row, &m)| row.iter().map(|d| d / (m - 1) as f64).collect())
            .collect();
        BlockVarianceSpec::new(s2, sizes)
    }

    /// Unit rows restricted to block `h`, as indices into the matrix.
    pub fn block_members(&self, h: usize) -> Vec<usize> {
        match &self.blocks {
            None => Vec::new(),
            Some(labels) => labels
                .iter()
                .enumerate()
                .filter_map(|(i, &b)| (b == h).then_some(i))
                .collect(),
        }
    }
}

/// Per-treatment sample summary of observed `(treatment, outcome)` pairs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroupSummary {
    pub counts: Vec<usize>,
    pub means: Vec<f64>,
    /// Sample variances with divisor `n_j - 1`.
    pub variances: Vec<f64>,
}

/// Group counts, means and sample variances (divisor `n_j - 1`) of observed
/// outcomes. Every group needs at least 2 observations.
pub fn sample_group_summary(observed: &[(usize, f64)], j: usize) -> Result<GroupSummary> {
    validate_treatment_len(j)?;
    let mut counts = alloc::vec![0usize; j];
    let mut sums = alloc::vec![0.0; j];
    for &(t, y) in observed {
        if t == 0 || t > j {
            return Err(Error::InvalidSpec(format!(
                "treatment index {t} outside 1..={j}"
            )));
        }
        counts[t - 1] += 1;
        sums[t - 1] += y;
    }
    for (t, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::EmptyGroup { treatment: t + 1 });
        }
        if c < 2 {
            return Err(Error::GroupTooSmall {
                treatment: t + 1,
                len: c,
            });
        }
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| s / c as f64)
        .collect();
    let mut devs = alloc::vec![0.0; j];
    for &(t, y) in observed {
        let d = y - means[t - 1];
        devs[t - 1] += d * d;
    }
    let variances = devs
        .iter()
        .zip(&counts)
        .map(|(&d, &c)| d / (c - 1) as f64)
        .collect();
    Ok(GroupSummary {
        counts,
        means,
        variances,
    })
}

/// Degrees-of-freedom-weighted pooling of per-replicate sample variances:
/// `pooled_j = sum_r (n_rj - 1) s2_rj / sum_r (n_rj - 1)`. Reduces to the
/// plain average when replicate group sizes are equal.
pub fn pool_variances(replicates: &[GroupSummary]) -> Result<Vec<f64>> {
    if replicates.is_empty() {
        return Err(Error::InvalidSpec(String::from("nothing to pool")));
    }
    let j = replicates[0].variances.len();
    if replicates.iter().any(|r| r.variances.len() != j) {
        return Err(Error::InvalidSpec(String::from(
            "replicates disagree on the number of treatment groups",
        )));
    }
    let mut pooled = alloc::vec![0.0; j];
    for (t, out) in pooled.iter_mut().enumerate() {
        let mut num = 0.0;
        let mut den = 0.0;
        for r in replicates {
            let df = (r.counts[t] - 1) as f64;
            num += df * r.variances[t];
            den += df;
        }
        if den == 0.0 {
            return Err(Error::GroupTooSmall {
                treatment: t + 1,
                len: 1,
            });
        }
        *out = num / den;
    }
    Ok(pooled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_column_has_zero_variance() {
        let po = PotentialOutcomeMatrix::new(
            alloc::vec![alloc::vec![0.0, 1.0], alloc::vec![0.0, 2.0], alloc::vec![0.0, 3.0]],
            None,
        )
        .unwrap();
        let s2 = po.column_variances().unwrap();
        assert_eq!(s2.values()[0], 0.0);
        assert_abs_diff_eq!(s2.values()[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn two_point_column_uses_n_minus_one() {
        // Column (0, 2) with N = 2: S^2 = (1 + 1) / 1 = 2.
        let po = PotentialOutcomeMatrix::new(
            alloc::vec![alloc::vec![0.0, 0.0], alloc::vec![2.0, 0.0]],
            None,
        )
        .unwrap();
        assert_abs_diff_eq!(po.column_variances().unwrap().values()[0], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn binary_group_variance_matches_table_value() {
        // 12 binary outcomes with two ones: s^2 = 2*10/(12*11) = 0.1515,
        // i.e. 0.15 at two decimals for the audit 000 group.
        let mut obs: Vec<(usize, f64)> = alloc::vec![(1, 1.0); 2];
        obs.extend(core::iter::repeat_n((1, 0.0), 10));
        obs.extend([(2, 0.0), (2, 1.0)]);
        let s = sample_group_summary(&obs, 2).unwrap();
        assert_abs_diff_eq!(s.variances[0], 0.15, epsilon = 0.005);
        assert_abs_diff_eq!(s.variances[0], 2.0 * 10.0 / (12.0 * 11.0), epsilon = 1e-15);
    }

    #[test]
    fn sample_variance_requires_two_per_group() {
        let obs = [(1usize, 1.0), (1, 2.0), (2, 1.0)];
        let err = sample_group_summary(&obs, 2).unwrap_err();
        assert_eq!(
            err,
            Error::GroupTooSmall {
                treatment: 2,
                len: 1
            }
        );
    }

    #[test]
    fn block_variances_use_block_divisor() {
        // Block 0: units 0,1 with column-0 values (0, 2) -> S^2 = 2.
        let po = PotentialOutcomeMatrix::new(
            alloc::vec![
                alloc::vec![0.0, 1.0],
                alloc::vec![2.0, 1.0],
                alloc::vec![5.0, 0.0],
                alloc::vec![5.0, 4.0],
                alloc::vec![5.0, 2.0],
            ],
            Some(alloc::vec![0, 0, 1, 1, 1]),
        )
        .unwrap();
        let bv = po.block_variances().unwrap();
        assert_eq!(bv.sizes(), &[2, 3]);
        assert_abs_diff_eq!(bv.row(0)[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(bv.row(0)[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(bv.row(1)[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(bv.row(1)[1], 4.0, epsilon = 1e-15);
    }

    #[test]
    fn pooling_equal_sizes_is_plain_average() {
        let rep = |s2: Vec<f64>| GroupSummary {
            counts: alloc::vec![12; s2.len()],
            means: alloc::vec![0.0; s2.len()],
            variances: s2,
        };
        let pooled = pool_variances(&[
            rep(alloc::vec![0.15, 0.27]),
            rep(alloc::vec![0.27, 0.15]),
        ])
        .unwrap();
        assert_abs_diff_eq!(pooled[0], 0.21, epsilon = 1e-15);
        assert_abs_diff_eq!(pooled[1], 0.21, epsilon = 1e-15);
    }

    #[test]
    fn pooling_weights_by_degrees_of_freedom() {
        let a = GroupSummary {
            counts: alloc::vec![5],
            means: alloc::vec![0.0],
            variances: alloc::vec![1.0],
        };
        let b = GroupSummary {
            counts: alloc::vec![2],
            means: alloc::vec![0.0],
            variances: alloc::vec![8.0],
        };
        let pooled = pool_variances(&[a, b]).unwrap();
        // (4*1 + 1*8) / 5 = 2.4
        assert_abs_diff_eq!(pooled[0], 2.4, epsilon = 1e-15);
    }

    #[test]
    fn po_matrix_rejects_bad_blocks() {
        let rows = alloc::vec![alloc::vec![0.0, 1.0]; 3];
        assert!(PotentialOutcomeMatrix::new(rows.clone(), Some(alloc::vec![0, 2, 2])).is_err());
        assert!(PotentialOutcomeMatrix::new(rows, Some(alloc::vec![0, 0])).is_err());
    }

    #[test]
    fn variance_spec_validates() {
        assert!(VarianceSpec::new(alloc::vec![1.0, 2.0, 3.0]).is_err());
        assert!(VarianceSpec::new(alloc::vec![1.0, -2.0]).is_err());
        assert!(VarianceSpec::new(alloc::vec![1.0, 2.0]).is_ok());
        assert!(BlockVarianceSpec::new(alloc::vec![alloc::vec![1.0, 2.0]], alloc::vec![0]).is_err());
    }
}
