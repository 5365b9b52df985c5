//! Deterministic greedy integer allocation under sum and bound
//! constraints.
//!
//! All four solvers start every arm at its lower bound and add one unit at
//! a time:
//!
//! * CRD, A/D: add to the arm with the smallest marginal increment
//!   `delta_j = f_j(N_j + 1) - f_j(N_j)` of the separable objective
//!   (`f_j = S^2_j / N_j` for A, `log(S^2_j / N_j)` for D). Under the
//!   bound-polytope structure this greedy attains the global integer
//!   optimum.
//! * CRD, E: add to the arm with the largest current ratio `S^2_j / N_j`.
//! * Block, A: the block objective separates, so each block runs the CRD
//!   A-greedy on its own row.
//! * Block, D: one global greedy over `(block, treatment)` cells, smallest
//!   increment of `sum_j log S^2_blk,j` first, honoring block capacities.
//! * Block, E: pick the treatment with the largest aggregate `S^2_blk,j`,
//!   then the block whose extra unit shrinks that aggregate the most.
//!
//! Every tie breaks toward the smallest index, so identical inputs always
//! produce identical outputs. Scores are computed with a single rounding
//! division so that ties that are exact in real arithmetic stay exact in
//! floating point.

use alloc::format;
use alloc::vec::Vec;

use crate::criterion::value_from_ratios;
use crate::design::{Criterion, DesignSpec};
use crate::error::{Error, Result};
use crate::exact::Warning;
use crate::variance::{BlockVarianceSpec, VarianceSpec};

/// Integer allocation for a completely randomized design.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntegerAllocation {
    pub counts: Vec<usize>,
    pub criterion: Criterion,
    pub criterion_value: f64,
    /// Number of unit additions performed (`N - sum lower`).
    pub iterations: usize,
    /// Arms whose upper bound stopped further allocation (1-based).
    pub saturated: Vec<usize>,
    pub warnings: Vec<Warning>,
}

/// Integer allocation for a randomized block design.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockIntegerAllocation {
    /// `counts[h][j]`; row `h` sums to the block size `M_h`.
    pub counts: Vec<Vec<usize>>,
    pub criterion: Criterion,
    pub criterion_value: f64,
    pub iterations: usize,
    /// `(block, treatment)` cells that hit their upper bound (both 1-based).
    pub saturated: Vec<(usize, usize)>,
    pub warnings: Vec<Warning>,
}

/// Per-cell bounds `lower[h][j] <= M_{h,j} <= upper[h][j]` for a block
/// design.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockBounds {
    pub lower: Vec<Vec<usize>>,
    pub upper: Vec<Vec<usize>>,
}

impl BlockBounds {
    /// Default bounds: at least 2 units per cell, at most the block size.
    pub fn defaults(sizes: &[usize], j: usize) -> Self {
        Self {
            lower: sizes.iter().map(|_| alloc::vec![2usize; j]).collect(),
            upper: sizes.iter().map(|&m| alloc::vec![m; j]).collect(),
        }
    }

    pub(crate) fn validate(&self, vs: &BlockVarianceSpec) -> Result<()> {
        let (h, j) = (vs.h(), vs.j());
        if self.lower.len() != h || self.upper.len() != h {
            return Err(Error::InvalidSpec(format!(
                "bounds must have {h} rows, got lower {} and upper {}",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for bh in 0..h {
            if self.lower[bh].len() != j || self.upper[bh].len() != j {
                return Err(Error::InvalidSpec(format!(
                    "bounds row {} must have length {j}",
                    bh + 1
                )));
            }
            let m = vs.sizes()[bh];
            for t in 0..j {
                if self.lower[bh][t] > self.upper[bh][t] || self.upper[bh][t] > m {
                    return Err(Error::InvalidSpec(format!(
                        "cell ({}, {}): need lower <= upper <= block size, got [{}, {}] with M = {m}",
                        bh + 1,
                        t + 1,
                        self.lower[bh][t],
                        self.upper[bh][t]
                    )));
                }
            }
            let lo: usize = self.lower[bh].iter().sum();
            let hi: usize = self.upper[bh].iter().sum();
            if lo > m || m > hi {
                return Err(Error::Infeasible(format!(
                    "block {}: need sum(lower) <= M_h <= sum(upper), got {lo} <= {m} <= {hi}",
                    bh + 1
                )));
            }
        }
        Ok(())
    }
}

/// Marginal increment of `f_j(n) = s2 / n` when adding one unit, written
/// as a single division so equal real values stay bit-equal.
#[inline]
fn delta_a(s2: f64, n: usize) -> f64 {
    if s2 == 0.0 {
        return -0.0;
    }
    let d = (n as u64 * (n as u64 + 1)) as f64;
    -s2 / d
}

/// Marginal increment of `f_j(n) = log(s2 / n)`; free of the variance.
#[inline]
fn delta_d(n: usize) -> f64 {
    libm::log(n as f64 / (n + 1) as f64)
}

/// Current ratio `s2 / n` for the E rule.
#[inline]
fn ratio(s2: f64, n: usize) -> f64 {
    if s2 == 0.0 {
        0.0
    } else if n == 0 {
        f64::INFINITY
    } else {
        s2 / n as f64
    }
}

fn lenient_ratios(s2: &[f64], counts: &[usize]) -> Vec<f64> {
    s2.iter()
        .zip(counts)
        .map(|(&v, &n)| ratio(v, n))
        .collect()
}

/// One run of the separable greedy (both the A and D increments) over a
/// single row of arms; also used per block for the block A rule.
fn run_separable(
    s2: &[f64],
    n: usize,
    lower: &[usize],
    upper: &[usize],
    criterion: Criterion,
) -> Result<(Vec<usize>, usize, Vec<usize>)> {
    let j = s2.len();
    let mut counts = lower.to_vec();
    let mut total: usize = counts.iter().sum();
    let mut active = alloc::vec![true; j];
    let mut saturated = Vec::new();
    let mut iterations = 0usize;

    while total < n {
        let mut best = f64::INFINITY;
        let mut pick: Option<usize> = None;
        for t in 0..j {
            if !active[t] {
                continue;
            }
            let delta = match criterion {
                Criterion::A => delta_a(s2[t], counts[t]),
                Criterion::D => delta_d(counts[t]),
                Criterion::E => unreachable!("E is not separable"),
            };
            if delta < best {
                best = delta;
                pick = Some(t);
            }
        }
        let t = pick.expect("feasible bounds guarantee an active arm");
        if counts[t] < upper[t] {
            counts[t] += 1;
            total += 1;
            iterations += 1;
        } else {
            active[t] = false;
            saturated.push(t);
        }
    }
    Ok((counts, iterations, saturated))
}

/// Greedy integer allocation for the separable criteria A and D under
/// complete randomization.
pub fn greedy_crd_separable(vs: &VarianceSpec, spec: &DesignSpec) -> Result<IntegerAllocation> {
    check_crd_inputs(vs, spec)?;
    let criterion = spec.criterion();
    let mut warnings = Vec::new();
    match criterion {
        Criterion::A => {
            for (t, &v) in vs.values().iter().enumerate() {
                if v == 0.0 {
                    warnings.push(Warning::ZeroVarianceArm { treatment: t + 1 });
                }
            }
        }
        Criterion::D => {
            if let Some(t) = vs.values().iter().position(|&v| v == 0.0) {
                return Err(Error::ZeroVarianceForD { treatment: t + 1 });
            }
        }
        Criterion::E => {
            return Err(Error::InvalidSpec(alloc::string::String::from(
                "criterion E is not separable; use greedy_crd_e",
            )))
        }
    }

    let (counts, iterations, saturated) =
        run_separable(vs.values(), spec.n(), spec.lower(), spec.upper(), criterion)?;
    let expected: usize = spec.n() - spec.lower().iter().sum::<usize>();
    assert_eq!(iterations, expected, "greedy overran its iteration budget");
    let criterion_value = value_from_ratios(&lenient_ratios(vs.values(), &counts), criterion)?;
    Ok(IntegerAllocation {
        counts,
        criterion,
        criterion_value,
        iterations,
        saturated: saturated.iter().map(|t| t + 1).collect(),
        warnings,
    })
}

/// Greedy integer allocation for the E criterion under complete
/// randomization: always feed the arm with the worst current ratio.
pub fn greedy_crd_e(vs: &VarianceSpec, spec: &DesignSpec) -> Result<IntegerAllocation> {
    check_crd_inputs(vs, spec)?;
    let j = vs.j();
    let mut warnings = Vec::new();
    for (t, &v) in vs.values().iter().enumerate() {
        if v == 0.0 {
            warnings.push(Warning::ZeroVarianceArm { treatment: t + 1 });
        }
    }

    let mut counts = spec.lower().to_vec();
    let mut total: usize = counts.iter().sum();
    let mut active = alloc::vec![true; j];
    let mut saturated = Vec::new();
    let mut iterations = 0usize;

    while total < spec.n() {
        let mut best = f64::NEG_INFINITY;
        let mut pick: Option<usize> = None;
        for t in 0..j {
            if !active[t] {
                continue;
            }
            let score = ratio(vs.values()[t], counts[t]);
            if score > best {
                best = score;
                pick = Some(t);
            }
        }
        let t = match pick {
            Some(t) => t,
            // All-zero variances leave every score at 0 only when arms are
            // inactive; feasibility rules this out.
            None => unreachable!("feasible bounds guarantee an active arm"),
        };
        if counts[t] < spec.upper()[t] {
            counts[t] += 1;
            total += 1;
            iterations += 1;
        } else {
            active[t] = false;
            saturated.push(t);
        }
    }
    let expected: usize = spec.n() - spec.lower().iter().sum::<usize>();
    assert_eq!(iterations, expected, "greedy overran its iteration budget");
    let criterion_value =
        value_from_ratios(&lenient_ratios(vs.values(), &counts), Criterion::E)?;
    Ok(IntegerAllocation {
        counts,
        criterion: Criterion::E,
        criterion_value,
        iterations,
        saturated: saturated.iter().map(|t| t + 1).collect(),
        warnings,
    })
}

/// Greedy CRD allocation dispatching on the design's criterion.
pub fn greedy_crd(vs: &VarianceSpec, spec: &DesignSpec) -> Result<IntegerAllocation> {
    match spec.criterion() {
        Criterion::A | Criterion::D => greedy_crd_separable(vs, spec),
        Criterion::E => greedy_crd_e(vs, spec),
    }
}

fn check_crd_inputs(vs: &VarianceSpec, spec: &DesignSpec) -> Result<()> {
    if vs.j() != spec.j() {
        return Err(Error::InvalidSpec(format!(
            "variance vector has J = {}, design has J = {}",
            vs.j(),
            spec.j()
        )));
    }
    Ok(())
}

/// Greedy integer allocation for a randomized block design.
///
/// A separates per block; D runs one global greedy over cells; E picks the
/// worst-aggregate treatment first and then the block where one more unit
/// helps that aggregate most.
pub fn greedy_block(
    vs: &BlockVarianceSpec,
    bounds: &BlockBounds,
    criterion: Criterion,
) -> Result<BlockIntegerAllocation> {
    bounds.validate(vs)?;
    let h = vs.h();
    let mut warnings = Vec::new();
    match criterion {
        Criterion::D => {
            for row in vs.rows() {
                if let Some(t) = row.iter().position(|&v| v == 0.0) {
                    return Err(Error::ZeroVarianceForD { treatment: t + 1 });
                }
            }
        }
        Criterion::A | Criterion::E => {
            // One warning per treatment with a zero-variance cell anywhere;
            // such cells keep their floor.
            let mut zero = alloc::collections::BTreeSet::new();
            for row in vs.rows() {
                for (t, &v) in row.iter().enumerate() {
                    if v == 0.0 {
                        zero.insert(t + 1);
                    }
                }
            }
            warnings.extend(zero.into_iter().map(|treatment| Warning::ZeroVarianceArm { treatment }));
        }
    }

    let result = match criterion {
        Criterion::A => {
            let mut counts = Vec::with_capacity(h);
            let mut iterations = 0;
            let mut saturated = Vec::new();
            for bh in 0..h {
                let (row, iters, sat) = run_separable(
                    vs.row(bh),
                    vs.sizes()[bh],
                    &bounds.lower[bh],
                    &bounds.upper[bh],
                    Criterion::A,
                )?;
                counts.push(row);
                iterations += iters;
                saturated.extend(sat.into_iter().map(|t| (bh + 1, t + 1)));
            }
            (counts, iterations, saturated)
        }
        Criterion::D => run_block_coupled(vs, bounds, Criterion::D)?,
        Criterion::E => run_block_coupled(vs, bounds, Criterion::E)?,
    };
    let (counts, iterations, saturated) = result;

    let expected: usize =
        vs.n() - bounds.lower.iter().map(|r| r.iter().sum::<usize>()).sum::<usize>();
    assert_eq!(iterations, expected, "greedy overran its iteration budget");

    let criterion_value = value_from_ratios(&lenient_block_aggregate(vs, &counts), criterion)?;
    Ok(BlockIntegerAllocation {
        counts,
        criterion,
        criterion_value,
        iterations,
        saturated,
        warnings,
    })
}

/// Variance estimation from per-block pilot observations followed by the
/// block greedy: `(block, treatment, outcome)` triples with 1-based labels
/// feed per-block sample variances, which stand in for `S^2_{h,j}` at the
/// target block sizes.
pub fn greedy_block_from_pilot(
    observations: &[(usize, usize, f64)],
    k: u32,
    target_sizes: &[usize],
    criterion: Criterion,
) -> Result<BlockIntegerAllocation> {
    let j = crate::design::treatment_count(k);
    let h = target_sizes.len();
    if h == 0 {
        return Err(Error::InvalidSpec(alloc::string::String::from(
            "at least one block is required",
        )));
    }
    let mut per_block: Vec<Vec<(usize, f64)>> = alloc::vec![Vec::new(); h];
    for &(bh, t, y) in observations {
        if bh == 0 || bh > h {
            return Err(Error::InvalidSpec(format!(
                "block label {bh} outside 1..={h}"
            )));
        }
        per_block[bh - 1].push((t, y));
    }
    let mut s2 = Vec::with_capacity(h);
    for obs in &per_block {
        s2.push(crate::variance::sample_group_summary(obs, j)?.variances);
    }
    let vs = BlockVarianceSpec::new(s2, target_sizes.to_vec())?;
    let bounds = BlockBounds::defaults(target_sizes, j);
    greedy_block(&vs, &bounds, criterion)
}

type BlockRun = (Vec<Vec<usize>>, usize, Vec<(usize, usize)>);

/// The coupled block greedy used by D and E. Cell scores depend on the
/// column aggregates `g_j = S^2_blk,j`, kept up to date as units land.
fn run_block_coupled(
    vs: &BlockVarianceSpec,
    bounds: &BlockBounds,
    criterion: Criterion,
) -> Result<BlockRun> {
    let (h, j) = (vs.h(), vs.j());
    let n = vs.n();
    let n_f = n as f64;

    // Per-cell numerators (M_h / N)^2 * S^2_{h,j}, fixed for the run.
    let ws2: Vec<Vec<f64>> = (0..h)
        .map(|bh| {
            let m = vs.sizes()[bh] as f64;
            vs.row(bh)
                .iter()
                .map(|&s2| (m / n_f) * (m / n_f) * s2)
                .collect()
        })
        .collect();

    let mut counts: Vec<Vec<usize>> = bounds.lower.clone();
    let mut total: usize = counts.iter().map(|r| r.iter().sum::<usize>()).sum();
    let mut row_total: Vec<usize> = counts.iter().map(|r| r.iter().sum()).collect();
    let mut active = alloc::vec![alloc::vec![true; j]; h];
    let mut saturated = Vec::new();
    let mut iterations = 0usize;

    // Column aggregates g_j = sum_h ws2[h][j] / counts[h][j].
    let column_aggregate = |counts: &[Vec<usize>], t: usize| -> f64 {
        (0..h).map(|bh| ratio(ws2[bh][t], counts[bh][t])).sum()
    };
    let mut g: Vec<f64> = (0..j).map(|t| column_aggregate(&counts, t)).collect();

    // Decrease of g_j from one more unit in cell (h, j); -inf when the
    // cell is still empty.
    let cell_delta = |bh: usize, t: usize, m: usize| -> f64 {
        if ws2[bh][t] == 0.0 {
            -0.0
        } else if m == 0 {
            f64::NEG_INFINITY
        } else {
            -ws2[bh][t] / ((m as u64 * (m as u64 + 1)) as f64)
        }
    };

    while total < n {
        // A cell can take a unit if it is active and its row has capacity.
        let selectable = |bh: usize, t: usize| -> bool {
            active[bh][t] && row_total[bh] < vs.sizes()[bh]
        };

        let picked: Option<(usize, usize)> = match criterion {
            Criterion::D => {
                let mut best = f64::INFINITY;
                let mut pick = None;
                for bh in 0..h {
                    for t in 0..j {
                        if !selectable(bh, t) {
                            continue;
                        }
                        let d = cell_delta(bh, t, counts[bh][t]);
                        // delta of log g_j; -inf stands for an empty cell.
                        let delta = if d == f64::NEG_INFINITY {
                            f64::NEG_INFINITY
                        } else {
                            libm::log(g[t] + d) - libm::log(g[t])
                        };
                        if delta < best {
                            best = delta;
                            pick = Some((bh, t));
                        }
                    }
                }
                pick
            }
            Criterion::E => {
                let mut best_g = f64::NEG_INFINITY;
                let mut col = None;
                for (t, &gt) in g.iter().enumerate() {
                    if (0..h).any(|bh| selectable(bh, t)) && gt > best_g {
                        best_g = gt;
                        col = Some(t);
                    }
                }
                col.map(|t| {
                    let mut best_d = f64::INFINITY;
                    let mut pick = 0usize;
                    let mut found = false;
                    for bh in 0..h {
                        if !selectable(bh, t) {
                            continue;
                        }
                        let d = cell_delta(bh, t, counts[bh][t]);
                        if !found || d < best_d {
                            best_d = d;
                            pick = bh;
                            found = true;
                        }
                    }
                    (pick, t)
                })
            }
            Criterion::A => unreachable!("A separates per block"),
        };

        let (bh, t) = picked.expect("feasible bounds guarantee a selectable cell");
        if counts[bh][t] < bounds.upper[bh][t] {
            counts[bh][t] += 1;
            row_total[bh] += 1;
            total += 1;
            iterations += 1;
            g[t] = column_aggregate(&counts, t);
            if counts[bh][t] == bounds.upper[bh][t] {
                active[bh][t] = false;
                saturated.push((bh + 1, t + 1));
            }
        } else {
            // Cell already at its bound before any unit was added here.
            active[bh][t] = false;
            saturated.push((bh + 1, t + 1));
        }
    }

    Ok((counts, iterations, saturated))
}

fn lenient_block_aggregate(vs: &BlockVarianceSpec, counts: &[Vec<usize>]) -> Vec<f64> {
    let n = vs.n() as f64;
    let mut agg = alloc::vec![0.0; vs.j()];
    for (bh, row) in vs.rows().iter().enumerate() {
        let m = vs.sizes()[bh] as f64;
        let w = (m / n) * (m / n);
        for (t, &s2) in row.iter().enumerate() {
            agg[t] += ratio(w * s2, counts[bh][t]);
        }
    }
    agg
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn vs(v: &[f64]) -> VarianceSpec {
        VarianceSpec::new(v.to_vec()).unwrap()
    }

    const AUDIT_POOLED: [f64; 8] = [0.21, 0.20, 0.18, 0.20, 0.23, 0.21, 0.27, 0.21];

    #[test]
    fn audit_crd_a_row() {
        let spec = DesignSpec::new(3, 192, Criterion::A).unwrap();
        let got = greedy_crd_separable(&vs(&AUDIT_POOLED), &spec).unwrap();
        assert_eq!(got.counts, vec![24, 23, 22, 23, 25, 24, 27, 24]);
        assert_eq!(got.iterations, 192 - 16);
        assert!(got.saturated.is_empty());
    }

    #[test]
    fn audit_crd_d_row_is_balanced() {
        let spec = DesignSpec::new(3, 192, Criterion::D).unwrap();
        let got = greedy_crd_separable(&vs(&AUDIT_POOLED), &spec).unwrap();
        assert_eq!(got.counts, vec![24; 8]);
    }

    #[test]
    fn audit_crd_e_row() {
        let spec = DesignSpec::new(3, 192, Criterion::E).unwrap();
        let got = greedy_crd_e(&vs(&AUDIT_POOLED), &spec).unwrap();
        assert_eq!(got.counts, vec![24, 22, 20, 22, 26, 24, 30, 24]);
    }

    #[test]
    fn education_crd_balances() {
        let equal = vs(&[1.0; 4]);
        for criterion in [Criterion::A, Criterion::D, Criterion::E] {
            let spec = DesignSpec::new(2, 1656, criterion).unwrap();
            let got = greedy_crd(&equal, &spec).unwrap();
            assert_eq!(got.counts, vec![414; 4], "{criterion}");
        }
    }

    #[test]
    fn symmetric_e_balances_with_min_index_ties() {
        let spec = DesignSpec::new(2, 40, Criterion::E).unwrap();
        let got = greedy_crd_e(&vs(&[1.0; 4]), &spec).unwrap();
        assert_eq!(got.counts, vec![10, 10, 10, 10]);
    }

    #[test]
    fn e_greedy_minimizes_worst_ratio_on_graded_variances() {
        // Variances (1,2,3,4), N = 20: the oracle certifies the result.
        let v = vs(&[1.0, 2.0, 3.0, 4.0]);
        let spec = DesignSpec::new(2, 20, Criterion::E).unwrap();
        let got = greedy_crd_e(&v, &spec).unwrap();
        assert_eq!(got.counts, vec![2, 4, 6, 8]);
        let set = crate::oracle::enumerate_crd(&v, &spec, 1 << 30).unwrap();
        assert!(set.optima.contains(&got.counts));
        assert_eq!(got.criterion_value, set.value);
    }

    #[test]
    fn d_greedy_ignores_variances() {
        // Same bounds, wildly different variances: identical D output.
        let spec = DesignSpec::new(2, 23, Criterion::D).unwrap();
        let a = greedy_crd_separable(&vs(&[0.1, 5.0, 2.0, 9.0]), &spec).unwrap();
        let b = greedy_crd_separable(&vs(&[7.0, 0.2, 0.2, 1.0]), &spec).unwrap();
        assert_eq!(a.counts, b.counts);
        // 23 = 4 * 5 + 3: the three extras go to the lowest indices.
        assert_eq!(a.counts, vec![6, 6, 6, 5]);
    }

    #[test]
    fn upper_bounds_saturate() {
        let spec = DesignSpec::with_bounds(
            1,
            10,
            Criterion::A,
            vec![2, 2],
            vec![3, 10],
        )
        .unwrap();
        let got = greedy_crd_separable(&vs(&[1.0, 1.0]), &spec).unwrap();
        assert_eq!(got.counts, vec![3, 7]);
        assert_eq!(got.saturated, vec![1]);
    }

    #[test]
    fn infeasible_bounds_error_out() {
        assert!(matches!(
            DesignSpec::with_bounds(1, 10, Criterion::A, vec![2, 2], vec![3, 3]),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn d_zero_variance_rejected() {
        let spec = DesignSpec::new(1, 10, Criterion::D).unwrap();
        assert_eq!(
            greedy_crd_separable(&vs(&[1.0, 0.0]), &spec).unwrap_err(),
            Error::ZeroVarianceForD { treatment: 2 }
        );
    }

    #[test]
    fn zero_variance_arm_stays_at_floor_under_e() {
        let spec = DesignSpec::new(1, 10, Criterion::E).unwrap();
        let got = greedy_crd_e(&vs(&[0.0, 1.0]), &spec).unwrap();
        assert_eq!(got.counts, vec![2, 8]);
        assert!(got
            .warnings
            .contains(&Warning::ZeroVarianceArm { treatment: 1 }));
    }

    fn bvs(rows: &[&[f64]], sizes: &[usize]) -> BlockVarianceSpec {
        BlockVarianceSpec::new(
            rows.iter().map(|r| r.to_vec()).collect(),
            sizes.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn block_e_proportional_setting() {
        // Unequal blocks, BBH variances (1,2,3,4): unique E optimum.
        let vs = bvs(&[&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]], &[40, 20]);
        let bounds = BlockBounds::defaults(vs.sizes(), vs.j());
        let got = greedy_block(&vs, &bounds, Criterion::E).unwrap();
        assert_eq!(got.counts, vec![vec![4, 8, 12, 16], vec![2, 4, 6, 8]]);
    }

    #[test]
    fn block_e_mirrored_variances_setting() {
        let vs = bvs(&[&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]], &[40, 40]);
        let bounds = BlockBounds::defaults(vs.sizes(), vs.j());
        let got = greedy_block(&vs, &bounds, Criterion::E).unwrap();
        assert_eq!(got.counts, vec![vec![6, 9, 12, 13], vec![13, 12, 9, 6]]);
    }

    #[test]
    fn block_d_mirrored_variances_setting() {
        let vs = bvs(&[&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]], &[40, 20]);
        let bounds = BlockBounds::defaults(vs.sizes(), vs.j());
        let got = greedy_block(&vs, &bounds, Criterion::D).unwrap();
        assert_eq!(got.counts, vec![vec![7, 10, 11, 12], vec![7, 6, 4, 3]]);
    }

    #[test]
    fn block_a_is_per_block_separable() {
        let vs = bvs(&[&[1.0, 4.0, 9.0, 16.0], &[1.0, 1.0, 1.0, 1.0]], &[40, 20]);
        let bounds = BlockBounds::defaults(vs.sizes(), vs.j());
        let got = greedy_block(&vs, &bounds, Criterion::A).unwrap();
        // Block 1 follows the standard deviations 1:2:3:4 over 40 units.
        assert_eq!(got.counts[0], vec![4, 8, 12, 16]);
        assert_eq!(got.counts[1], vec![5, 5, 5, 5]);
    }

    #[test]
    fn block_capacity_is_respected() {
        let vs = bvs(&[&[10.0, 1.0], &[10.0, 1.0]], &[6, 20]);
        let bounds = BlockBounds::defaults(vs.sizes(), vs.j());
        for criterion in [Criterion::A, Criterion::D, Criterion::E] {
            let got = greedy_block(&vs, &bounds, criterion).unwrap();
            for (bh, row) in got.counts.iter().enumerate() {
                assert_eq!(row.iter().sum::<usize>(), vs.sizes()[bh], "{criterion}");
            }
        }
    }

    #[test]
    fn audit_pilot_reproduces_block_reference_rows() {
        // Pilot outcomes {+a, -a, 0 x 10} per (block, group) give sample
        // variance 2a^2/11 = s^2 up to an ulp, so the pilot pathway lands
        // on the same rows as feeding the variances directly.
        let rep1 = [0.15, 0.15, 0.15, 0.20, 0.27, 0.15, 0.27, 0.27];
        let rep2 = [0.27, 0.24, 0.20, 0.20, 0.20, 0.27, 0.27, 0.15];
        let mut obs: Vec<(usize, usize, f64)> = Vec::new();
        for (bh, row) in [(1usize, rep1), (2, rep2)] {
            for (t0, &s2) in row.iter().enumerate() {
                let a = libm::sqrt(11.0 * s2 / 2.0);
                obs.push((bh, t0 + 1, a));
                obs.push((bh, t0 + 1, -a));
                obs.extend(core::iter::repeat_n((bh, t0 + 1, 0.0), 10));
            }
        }
        let expect = [
            (
                Criterion::A,
                [11, 11, 10, 12, 14, 10, 14, 14],
                [13, 13, 12, 11, 11, 13, 13, 10],
            ),
            (
                Criterion::D,
                [11, 11, 12, 13, 13, 10, 12, 14],
                [13, 13, 13, 12, 11, 13, 11, 10],
            ),
            (
                Criterion::E,
                [10, 10, 10, 12, 15, 10, 16, 13],
                [13, 12, 10, 11, 12, 13, 15, 10],
            ),
        ];
        for (criterion, block1, block2) in expect {
            let got = greedy_block_from_pilot(&obs, 3, &[96, 96], criterion).unwrap();
            assert_eq!(got.counts[0], block1.to_vec(), "{criterion} block 1");
            assert_eq!(got.counts[1], block2.to_vec(), "{criterion} block 2");
        }
    }

    #[test]
    fn audit_pilot_composition_matches_direct_block_greedy() {
        // Sample variances computed from synthetic pilot outcomes feed the
        // same greedy as hand-entered variances.
        let sizes = [20usize, 20];
        let mut obs: Vec<(usize, usize, f64)> = Vec::new();
        for (bh, scale) in [(1usize, 1.0f64), (2, 2.0)] {
            for t in 1..=4usize {
                // Three observations with sample variance scale^2 * t^2.
                let s = scale * t as f64;
                obs.push((bh, t, 0.0));
                obs.push((bh, t, s));
                obs.push((bh, t, 2.0 * s));
            }
        }
        let from_pilot =
            greedy_block_from_pilot(&obs, 2, &sizes, Criterion::E).unwrap();
        let direct = {
            let s2: Vec<Vec<f64>> = [1.0f64, 2.0]
                .iter()
                .map(|sc| (1..=4).map(|t| sc * sc * (t * t) as f64).collect())
                .collect();
            let vs = BlockVarianceSpec::new(s2, sizes.to_vec()).unwrap();
            greedy_block(&vs, &BlockBounds::defaults(&sizes, 4), Criterion::E).unwrap()
        };
        assert_eq!(from_pilot.counts, direct.counts);
    }
}
