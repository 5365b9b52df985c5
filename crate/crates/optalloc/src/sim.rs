//! Randomization simulation against a full potential-outcome matrix:
//! seeded assignment draws, the exact finite-population covariance of the
//! effect estimator (both its identifiable first term and the
//! heterogeneity term), a Monte-Carlo validator, and a small-instance
//! exhaustive enumerator over all assignments.
//!
//! Reproducibility contract: all randomness comes from ChaCha12
//! (`rand_chacha` 0.3) keyed by SplitMix64 expansion of the caller's
//! 64-bit master seed; replicate `r` reads stream `r` of that key, so
//! results do not depend on execution order.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::contrast::ContrastMatrix;
use crate::criterion::{block_criterion_matrix, criterion_matrix};
use crate::error::{Error, Result};
use crate::matrix::{CompensatedSum, Mat};
use crate::variance::PotentialOutcomeMatrix;

/// Generator identification echoed in every report.
pub const RNG_DESCRIPTION: &str =
    "ChaCha12 (rand_chacha 0.3), key = SplitMix64(master seed), stream = replicate index";

/// Cap on the number of distinct assignments the exhaustive enumerator
/// will visit.
pub const DEFAULT_ASSIGNMENT_CAP: u128 = 1_000_000;

/// One realized treatment assignment; `treatments[i]` is the 1-based
/// treatment of unit `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Assignment {
    pub treatments: Vec<usize>,
}

/// Exact and (optionally) empirical moments of the effect estimator under
/// the randomization distribution.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CovarianceReport {
    /// Identifiable term `2^-2(K-1) * L^T diag(S^2_j / N_j) L` (block
    /// designs aggregate with weights `M_h^2 / N^2`).
    pub exact_first_term: Mat,
    /// Heterogeneity of unit-level effects; positive semi-definite and
    /// subtracted from the first term.
    pub heterogeneity_term: Mat,
    /// `exact_first_term - heterogeneity_term`.
    pub exact_cov: Mat,
    /// Population effects `tau`, the estimator's mean.
    pub population_effects: Vec<f64>,
    pub empirical_mean: Option<Vec<f64>>,
    /// Sample covariance (divisor `R - 1`) of the replicate estimates.
    pub empirical_cov: Option<Mat>,
    pub replicates: u64,
    pub seed: Option<u64>,
    pub rng: String,
}

impl CovarianceReport {
    /// Smallest eigenvalue of the heterogeneity term; `>= -1e-9` is the
    /// positive-semidefiniteness verdict used by the tests and the CLI.
    pub fn heterogeneity_min_eigenvalue(&self) -> f64 {
        self.heterogeneity_term.sym_eigenvalues()[0]
    }
}

fn master_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fisher-Yates shuffle driven by the given generator.
fn shuffle<T>(items: &mut [T], rng: &mut ChaCha12Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

fn crd_base(counts: &[usize]) -> Vec<usize> {
    let mut base = Vec::with_capacity(counts.iter().sum());
    for (t, &c) in counts.iter().enumerate() {
        base.extend(core::iter::repeat_n(t + 1, c));
    }
    base
}

fn check_crd_alloc(po: &PotentialOutcomeMatrix, counts: &[usize]) -> Result<()> {
    if counts.len() != po.j() {
        return Err(Error::InvalidSpec(format!(
            "allocation has {} arms, outcomes have {}",
            counts.len(),
            po.j()
        )));
    }
    let total: usize = counts.iter().sum();
    if total != po.n() {
        return Err(Error::InvalidSpec(format!(
            "allocation assigns {total} units, population has {}",
            po.n()
        )));
    }
    Ok(())
}

fn check_block_alloc(po: &PotentialOutcomeMatrix, counts: &[Vec<usize>]) -> Result<()> {
    let sizes = po.block_sizes();
    if po.block_labels().is_none() {
        return Err(Error::InvalidSpec(String::from(
            "block allocation requires block labels on the outcome matrix",
        )));
    }
    if counts.len() != sizes.len() {
        return Err(Error::InvalidSpec(format!(
            "allocation has {} blocks, outcomes have {}",
            counts.len(),
            sizes.len()
        )));
    }
    for (h, row) in counts.iter().enumerate() {
        if row.len() != po.j() {
            return Err(Error::InvalidSpec(format!(
                "block {} allocation has {} arms, outcomes have {}",
                h + 1,
                row.len(),
                po.j()
            )));
        }
        let total: usize = row.iter().sum();
        if total != sizes[h] {
            return Err(Error::InvalidSpec(format!(
                "block {} allocation assigns {total} units, block has {}",
                h + 1,
                sizes[h]
            )));
        }
    }
    Ok(())
}

/// Uniform draw from the CRD randomization distribution (all unit
/// orderings with the prescribed group sizes equally likely).
pub fn draw_crd(po: &PotentialOutcomeMatrix, counts: &[usize], seed: u64) -> Result<Assignment> {
    check_crd_alloc(po, counts)?;
    let mut rng = master_rng(seed, 0);
    Ok(draw_crd_with(counts, &mut rng))
}

fn draw_crd_with(counts: &[usize], rng: &mut ChaCha12Rng) -> Assignment {
    let mut base = crd_base(counts);
    shuffle(&mut base, rng);
    Assignment { treatments: base }
}

/// Uniform block-randomized draw: an independent CRD inside every block.
pub fn draw_rbd(
    po: &PotentialOutcomeMatrix,
    counts: &[Vec<usize>],
    seed: u64,
) -> Result<Assignment> {
    check_block_alloc(po, counts)?;
    let mut rng = master_rng(seed, 0);
    Ok(draw_rbd_with(po, counts, &mut rng))
}

fn draw_rbd_with(
    po: &PotentialOutcomeMatrix,
    counts: &[Vec<usize>],
    rng: &mut ChaCha12Rng,
) -> Assignment {
    let mut treatments = alloc::vec![0usize; po.n()];
    for (h, row) in counts.iter().enumerate() {
        let members = po.block_members(h);
        let mut base = crd_base(row);
        shuffle(&mut base, rng);
        for (unit, t) in members.into_iter().zip(base) {
            treatments[unit] = t;
        }
    }
    Assignment { treatments }
}

/// Per-unit factorial effects `tau_i = 2^-(K-1) L^T Y_i`.
fn unit_effects(po: &PotentialOutcomeMatrix, l: &ContrastMatrix) -> Vec<Vec<f64>> {
    (0..po.n())
        .map(|i| {
            let row: Vec<f64> = (0..po.j()).map(|t| po.outcome(i, t)).collect();
            l.effects_from_means(&row).values
        })
        .collect()
}

fn mean_of(rows: &[Vec<f64>], indices: Option<&[usize]>, j: usize) -> Vec<f64> {
    let mut mean = alloc::vec![0.0; j];
    let count = indices.map_or(rows.len(), <[usize]>::len) as f64;
    match indices {
        None => {
            for row in rows {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
        }
        Some(idx) => {
            for &i in idx {
                for (m, v) in mean.iter_mut().zip(&rows[i]) {
                    *m += v;
                }
            }
        }
    }
    for m in &mut mean {
        *m /= count;
    }
    mean
}

/// Accumulates `sum_i (x_i - center)(x_i - center)^T` into `out`.
fn add_centered_outer(out: &mut Mat, x: &[f64], center: &[f64], weight: f64) {
    let j = x.len();
    for a in 0..j {
        let da = x[a] - center[a];
        for b in 0..j {
            let db = x[b] - center[b];
            out.set(a, b, out.get(a, b) + weight * da * db);
        }
    }
}

/// Exact covariance of the effect estimator under complete randomization:
/// identifiable first term minus the heterogeneity term.
pub fn exact_covariance(po: &PotentialOutcomeMatrix, counts: &[usize]) -> Result<CovarianceReport> {
    check_crd_alloc(po, counts)?;
    if po.n() < 2 {
        return Err(Error::InvalidSpec(String::from(
            "exact covariance needs N >= 2",
        )));
    }
    let l = ContrastMatrix::build(po.k())?;
    let scale = libm::exp2(-2.0 * (po.k() as f64 - 1.0));

    let vs = po.column_variances()?;
    let first = criterion_matrix(&vs, counts)?.scaled(scale);

    let taus = unit_effects(po, &l);
    let tau_bar = mean_of(&taus, None, po.j());
    let mut het = Mat::zeros(po.j(), po.j());
    let weight = 1.0 / (po.n() as f64 * (po.n() as f64 - 1.0));
    for tau_i in &taus {
        add_centered_outer(&mut het, tau_i, &tau_bar, weight);
    }

    Ok(CovarianceReport {
        exact_cov: first.sub(&het),
        exact_first_term: first,
        heterogeneity_term: het,
        population_effects: tau_bar,
        empirical_mean: None,
        empirical_cov: None,
        replicates: 0,
        seed: None,
        rng: String::from(RNG_DESCRIPTION),
    })
}

/// Exact covariance under block randomization: the weighted sum
/// `sum_h (M_h/N)^2 V_h` of independent per-block CRD covariances.
pub fn exact_block_covariance(
    po: &PotentialOutcomeMatrix,
    counts: &[Vec<usize>],
) -> Result<CovarianceReport> {
    check_block_alloc(po, counts)?;
    let l = ContrastMatrix::build(po.k())?;
    let scale = libm::exp2(-2.0 * (po.k() as f64 - 1.0));

    let bvs = po.block_variances()?;
    let first = block_criterion_matrix(&bvs, counts)?.scaled(scale);

    let taus = unit_effects(po, &l);
    let n = po.n() as f64;
    let mut het = Mat::zeros(po.j(), po.j());
    let mut tau_bar = alloc::vec![0.0; po.j()];
    for h in 0..po.n_blocks() {
        let members = po.block_members(h);
        let m_h = members.len() as f64;
        let tau_h = mean_of(&taus, Some(&members), po.j());
        for (acc, v) in tau_bar.iter_mut().zip(&tau_h) {
            *acc += (m_h / n) * v;
        }
        let weight = (m_h / n) * (m_h / n) / (m_h * (m_h - 1.0));
        for &i in &members {
            add_centered_outer(&mut het, &taus[i], &tau_h, weight);
        }
    }

    Ok(CovarianceReport {
        exact_cov: first.sub(&het),
        exact_first_term: first,
        heterogeneity_term: het,
        population_effects: tau_bar,
        empirical_mean: None,
        empirical_cov: None,
        replicates: 0,
        seed: None,
        rng: String::from(RNG_DESCRIPTION),
    })
}

/// Effect estimate from one realized assignment. Uses the block-weighted
/// estimator when the matrix carries block labels, the plain group-mean
/// estimator otherwise.
pub fn estimate_from_assignment(
    po: &PotentialOutcomeMatrix,
    assignment: &Assignment,
) -> Result<Vec<f64>> {
    let l = ContrastMatrix::build(po.k())?;
    estimate_with(po, &l, &assignment.treatments, po.block_labels().is_some())
}

/// The estimator form follows the randomization: the plain group-mean
/// estimator for CRD draws, the block-weighted `sum_h (M_h/N) tauhat_h`
/// for block draws.
fn estimate_with(
    po: &PotentialOutcomeMatrix,
    l: &ContrastMatrix,
    treatments: &[usize],
    blocked: bool,
) -> Result<Vec<f64>> {
    let j = po.j();
    if !blocked {
        let means = observed_group_means(po, treatments, None)?;
        return Ok(l.effects_from_means(&means).values);
    }
    let n = po.n() as f64;
    let mut tau = alloc::vec![0.0; j];
    for h in 0..po.n_blocks() {
        let members = po.block_members(h);
        let w = members.len() as f64 / n;
        let means = observed_group_means(po, treatments, Some(&members))?;
        for (acc, v) in tau.iter_mut().zip(l.effects_from_means(&means).values) {
            *acc += w * v;
        }
    }
    Ok(tau)
}

fn observed_group_means(
    po: &PotentialOutcomeMatrix,
    treatments: &[usize],
    members: Option<&[usize]>,
) -> Result<Vec<f64>> {
    let j = po.j();
    let mut sums = alloc::vec![0.0; j];
    let mut counts = alloc::vec![0usize; j];
    let mut tally = |i: usize| {
        let t = treatments[i] - 1;
        sums[t] += po.outcome(i, t);
        counts[t] += 1;
    };
    match members {
        None => (0..po.n()).for_each(&mut tally),
        Some(idx) => idx.iter().copied().for_each(&mut tally),
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

enum AllocRef<'a> {
    Crd(&'a [usize]),
    Block(&'a [Vec<usize>]),
}

/// Monte-Carlo moments of the estimator under complete randomization.
/// Replicate `r` draws from stream `r`, so any execution order yields the
/// same report.
pub fn monte_carlo(
    po: &PotentialOutcomeMatrix,
    counts: &[usize],
    replicates: u64,
    seed: u64,
) -> Result<CovarianceReport> {
    check_crd_alloc(po, counts)?;
    monte_carlo_impl(po, AllocRef::Crd(counts), replicates, seed)
}

/// Monte-Carlo moments under block randomization.
pub fn monte_carlo_block(
    po: &PotentialOutcomeMatrix,
    counts: &[Vec<usize>],
    replicates: u64,
    seed: u64,
) -> Result<CovarianceReport> {
    check_block_alloc(po, counts)?;
    monte_carlo_impl(po, AllocRef::Block(counts), replicates, seed)
}

fn monte_carlo_impl(
    po: &PotentialOutcomeMatrix,
    alloc_ref: AllocRef<'_>,
    replicates: u64,
    seed: u64,
) -> Result<CovarianceReport> {
    if replicates == 0 {
        return Err(Error::InvalidSpec(String::from(
            "at least one replicate is required",
        )));
    }
    let mut report = match &alloc_ref {
        AllocRef::Crd(counts) => exact_covariance(po, counts)?,
        AllocRef::Block(counts) => exact_block_covariance(po, counts)?,
    };
    let l = ContrastMatrix::build(po.k())?;
    let j = po.j();

    let blocked = matches!(alloc_ref, AllocRef::Block(_));
    let mut estimates: Vec<f64> = Vec::with_capacity(replicates as usize * j);
    for r in 0..replicates {
        let mut rng = master_rng(seed, r);
        let assignment = match &alloc_ref {
            AllocRef::Crd(counts) => draw_crd_with(counts, &mut rng),
            AllocRef::Block(counts) => draw_rbd_with(po, counts, &mut rng),
        };
        let tau = estimate_with(po, &l, &assignment.treatments, blocked)?;
        estimates.extend(tau);
    }

    // Two passes with compensated sums: mean, then centered covariance.
    let r_f = replicates as f64;
    let mut mean = alloc::vec![0.0; j];
    for (a, m) in mean.iter_mut().enumerate() {
        let mut acc = CompensatedSum::default();
        for r in 0..replicates as usize {
            acc.add(estimates[r * j + a]);
        }
        *m = acc.value() / r_f;
    }
    let empirical_cov = if replicates >= 2 {
        let mut cov = Mat::zeros(j, j);
        for a in 0..j {
            for b in a..j {
                let mut acc = CompensatedSum::default();
                for r in 0..replicates as usize {
                    acc.add((estimates[r * j + a] - mean[a]) * (estimates[r * j + b] - mean[b]));
                }
                let v = acc.value() / (r_f - 1.0);
                cov.set(a, b, v);
                cov.set(b, a, v);
            }
        }
        Some(cov)
    } else {
        None
    };

    report.empirical_mean = Some(mean);
    report.empirical_cov = empirical_cov;
    report.replicates = replicates;
    report.seed = Some(seed);
    Ok(report)
}

/// Number of distinct assignments: the multinomial coefficient (product of
/// per-block multinomials for block designs). Saturates at `u128::MAX`.
pub fn assignment_space_size(counts_per_block: &[Vec<usize>]) -> u128 {
    let mut total: u128 = 1;
    for row in counts_per_block {
        let mut remaining: u128 = row.iter().map(|&c| c as u128).sum();
        for &c in row {
            for i in 1..=c as u128 {
                let numer = remaining - (c as u128 - i);
                total = match total.checked_mul(numer) {
                    Some(v) => v / i,
                    None => return u128::MAX,
                };
            }
            remaining -= c as u128;
        }
    }
    total
}

/// Exact mean and covariance of the estimator by visiting every distinct
/// assignment; the independent oracle for [`exact_covariance`].
pub fn enumerate_assignment_moments(
    po: &PotentialOutcomeMatrix,
    counts_per_block: &[Vec<usize>],
    cap: u128,
) -> Result<(Vec<f64>, Mat)> {
    let blocked = po.block_labels().is_some();
    if blocked {
        check_block_alloc(po, counts_per_block)?;
    } else {
        if counts_per_block.len() != 1 {
            return Err(Error::InvalidSpec(String::from(
                "unblocked enumeration expects a single allocation row",
            )));
        }
        check_crd_alloc(po, &counts_per_block[0])?;
    }
    let size = assignment_space_size(counts_per_block);
    if size > cap {
        return Err(Error::EnumerationTooLarge { size, cap });
    }

    let l = ContrastMatrix::build(po.k())?;
    let j = po.j();
    let member_sets: Vec<Vec<usize>> = if blocked {
        (0..po.n_blocks()).map(|h| po.block_members(h)).collect()
    } else {
        alloc::vec![(0..po.n()).collect()]
    };

    // First pass: mean; second pass: centered second moment.
    let mut mean_acc: Vec<CompensatedSum> = alloc::vec![CompensatedSum::default(); j];
    let mut count: u128 = 0;
    for_each_assignment(po, counts_per_block, &member_sets, &mut |treatments| {
        let tau = estimate_with(po, &l, treatments, blocked).expect("all groups populated");
        for (acc, v) in mean_acc.iter_mut().zip(&tau) {
            acc.add(*v);
        }
        count += 1;
    });
    debug_assert_eq!(count, size);
    let mean: Vec<f64> = mean_acc.iter().map(|a| a.value() / count as f64).collect();

    let mut cov_acc = alloc::vec![CompensatedSum::default(); j * j];
    for_each_assignment(po, counts_per_block, &member_sets, &mut |treatments| {
        let tau = estimate_with(po, &l, treatments, blocked).expect("all groups populated");
        for a in 0..j {
            for b in 0..j {
                cov_acc[a * j + b].add((tau[a] - mean[a]) * (tau[b] - mean[b]));
            }
        }
    });
    let mut cov = Mat::zeros(j, j);
    for a in 0..j {
        for b in 0..j {
            cov.set(a, b, cov_acc[a * j + b].value() / count as f64);
        }
    }
    Ok((mean, cov))
}

/// Visits every distinct assignment (multiset permutations per block,
/// blocks combined as a cross product) in lexicographic order.
fn for_each_assignment(
    po: &PotentialOutcomeMatrix,
    counts_per_block: &[Vec<usize>],
    member_sets: &[Vec<usize>],
    visit: &mut dyn FnMut(&[usize]),
) {
    let j = po.j();
    let mut treatments = alloc::vec![0usize; po.n()];
    let mut remaining: Vec<Vec<usize>> = counts_per_block.to_vec();

    fn recurse(
        block: usize,
        pos: usize,
        j: usize,
        member_sets: &[Vec<usize>],
        remaining: &mut Vec<Vec<usize>>,
        treatments: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if block == member_sets.len() {
            visit(treatments);
            return;
        }
        let members = &member_sets[block];
        if pos == members.len() {
            recurse(block + 1, 0, j, member_sets, remaining, treatments, visit);
            return;
        }
        let unit = members[pos];
        for t in 0..j {
            if remaining[block][t] == 0 {
                continue;
            }
            remaining[block][t] -= 1;
            treatments[unit] = t + 1;
            recurse(block, pos + 1, j, member_sets, remaining, treatments, visit);
            remaining[block][t] += 1;
        }
    }

    recurse(0, 0, j, member_sets, &mut remaining, &mut treatments, visit);
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    fn po_from(rows: Vec<Vec<f64>>) -> PotentialOutcomeMatrix {
        PotentialOutcomeMatrix::new(rows, None).unwrap()
    }

    #[test]
    fn one_unit_per_arm_is_a_permutation() {
        let po = po_from(vec![vec![0.0; 4]; 4]);
        let a = draw_crd(&po, &[1, 1, 1, 1], 5).unwrap();
        let mut sorted = a.treatments.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![1, 2, 3, 4]);
    }

    #[test]
    fn draws_are_seed_deterministic() {
        let po = po_from(vec![vec![0.0, 1.0]; 12]);
        let a = draw_crd(&po, &[5, 7], 42).unwrap();
        let b = draw_crd(&po, &[5, 7], 42).unwrap();
        assert_eq!(a, b);
        let c = draw_crd(&po, &[5, 7], 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn draw_respects_group_sizes() {
        let po = po_from(vec![vec![0.0, 1.0, 2.0, 3.0]; 20]);
        let counts = [3usize, 5, 4, 8];
        let a = draw_crd(&po, &counts, 9).unwrap();
        let mut histogram = [0usize; 4];
        for &t in &a.treatments {
            histogram[t - 1] += 1;
        }
        assert_eq!(histogram.to_vec(), counts.to_vec());
    }

    #[test]
    fn first_unit_marginal_matches_group_shares() {
        // P(T_1 = 2) = 7/10 within 3 binomial standard errors.
        let counts = [3usize, 7];
        let reps = 100_000u64;
        let mut hits = 0u64;
        for r in 0..reps {
            let mut rng = master_rng(31, r);
            let a = draw_crd_with(&counts, &mut rng);
            if a.treatments[0] == 2 {
                hits += 1;
            }
        }
        let p = hits as f64 / reps as f64;
        let se = libm::sqrt(0.7 * 0.3 / reps as f64);
        assert!((p - 0.7).abs() <= 3.0 * se, "p = {p}, se = {se}");
    }

    #[test]
    fn rbd_draw_respects_per_block_counts() {
        let rows = vec![vec![0.0, 1.0]; 10];
        let po = PotentialOutcomeMatrix::new(
            rows,
            Some(vec![0, 0, 0, 0, 1, 1, 1, 1, 1, 1]),
        )
        .unwrap();
        let counts = vec![vec![2usize, 2], vec![4, 2]];
        let a = draw_rbd(&po, &counts, 17).unwrap();
        for h in 0..2 {
            let mut histogram = [0usize; 2];
            for &i in &po.block_members(h) {
                histogram[a.treatments[i] - 1] += 1;
            }
            assert_eq!(histogram.to_vec(), counts[h]);
        }
    }

    #[test]
    fn hand_computed_two_unit_case() {
        // Units (0,1) and (2,3): strictly additive. The estimator variance
        // is 0 for the grand-mean component and 4 for the effect.
        let po = po_from(vec![vec![0.0, 1.0], vec![2.0, 3.0]]);
        let rep = exact_covariance(&po, &[1, 1]).unwrap();
        let want_first = [[4.0, 0.0], [0.0, 4.0]];
        let want_het = [[4.0, 0.0], [0.0, 0.0]];
        let want_cov = [[0.0, 0.0], [0.0, 4.0]];
        for a in 0..2 {
            for b in 0..2 {
                assert_abs_diff_eq!(rep.exact_first_term.get(a, b), want_first[a][b], epsilon = 1e-12);
                assert_abs_diff_eq!(rep.heterogeneity_term.get(a, b), want_het[a][b], epsilon = 1e-12);
                assert_abs_diff_eq!(rep.exact_cov.get(a, b), want_cov[a][b], epsilon = 1e-12);
            }
        }
        assert_eq!(rep.population_effects, vec![3.0, 1.0]);
    }

    #[test]
    fn constant_outcomes_have_zero_covariance() {
        let po = po_from(vec![vec![2.0; 4]; 8]);
        let rep = exact_covariance(&po, &[2, 2, 2, 2]).unwrap();
        assert!(rep.exact_cov.max_abs() <= 1e-12);
        assert!(rep.heterogeneity_term.max_abs() <= 1e-12);
    }

    #[test]
    fn additive_outcomes_confine_heterogeneity_to_grand_mean() {
        // Strictly additive but with varying unit levels: every effect
        // component of the heterogeneity term vanishes, the grand-mean
        // component does not.
        let rows: Vec<Vec<f64>> = [0.5, 1.7, -0.4, 2.2, 0.9, 1.1]
            .iter()
            .map(|a| vec![*a, a + 1.0, a + 2.5, a - 0.5])
            .collect();
        let po = po_from(rows);
        let rep = exact_covariance(&po, &[2, 2, 1, 1]).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                if a == 0 && b == 0 {
                    assert!(rep.heterogeneity_term.get(0, 0) > 1e-6);
                } else {
                    assert_abs_diff_eq!(rep.heterogeneity_term.get(a, b), 0.0, epsilon = 1e-12);
                }
            }
        }
        // Effect components of the covariance equal the scaled surrogate.
        for a in 1..4 {
            for b in 1..4 {
                assert_abs_diff_eq!(
                    rep.exact_cov.get(a, b),
                    rep.exact_first_term.get(a, b),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn exact_covariance_matches_full_enumeration() {
        let po = po_from(vec![
            vec![0.7, -1.2, 3.4, 0.1],
            vec![1.1, 0.3, -0.5, 2.2],
            vec![-0.4, 1.9, 0.8, -1.0],
            vec![2.5, -0.6, 1.3, 0.9],
            vec![0.0, 0.4, -2.1, 1.7],
            vec![1.8, 2.2, 0.6, -0.3],
            vec![0.2, -0.9, 1.4, 0.8],
            vec![-1.1, 0.6, 2.0, 1.2],
        ]);
        let counts = [2usize, 2, 2, 2];
        let rep = exact_covariance(&po, &counts).unwrap();
        let (mean, cov) =
            enumerate_assignment_moments(&po, &[counts.to_vec()], DEFAULT_ASSIGNMENT_CAP)
                .unwrap();
        for (m, t) in mean.iter().zip(&rep.population_effects) {
            assert_abs_diff_eq!(m, t, epsilon = 1e-10);
        }
        for a in 0..4 {
            for b in 0..4 {
                assert_abs_diff_eq!(
                    cov.get(a, b),
                    rep.exact_cov.get(a, b),
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn block_covariance_matches_weighted_block_sum() {
        let rows = vec![
            vec![0.7, -1.2],
            vec![1.1, 0.3],
            vec![-0.4, 1.9],
            vec![2.5, -0.6],
            vec![0.0, 0.4],
            vec![1.8, 2.2],
            vec![0.2, -0.9],
        ];
        let po = PotentialOutcomeMatrix::new(rows.clone(), Some(vec![0, 0, 0, 1, 1, 1, 1]))
            .unwrap();
        let counts = vec![vec![1usize, 2], vec![2, 2]];
        let rep = exact_block_covariance(&po, &counts).unwrap();

        // Independent per-block CRD covariances, weighted by (M_h/N)^2.
        let n = 7.0f64;
        let mut expected = Mat::zeros(2, 2);
        for (h, (lo, hi)) in [(0usize, (0usize, 3usize)), (1, (3, 7))].into_iter() {
            let block_po = po_from(rows[lo..hi].to_vec());
            let block_rep = exact_covariance(&block_po, &counts[h]).unwrap();
            let m_h = (hi - lo) as f64;
            let w = (m_h / n) * (m_h / n);
            expected = expected.sub(&block_rep.exact_cov.scaled(-w));
        }
        for a in 0..2 {
            for b in 0..2 {
                assert_abs_diff_eq!(
                    rep.exact_cov.get(a, b),
                    expected.get(a, b),
                    epsilon = 1e-10
                );
            }
        }

        // And the enumeration oracle agrees.
        let (_, cov) =
            enumerate_assignment_moments(&po, &counts, DEFAULT_ASSIGNMENT_CAP).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert_abs_diff_eq!(cov.get(a, b), rep.exact_cov.get(a, b), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn monte_carlo_is_reproducible_and_roughly_unbiased() {
        let po = po_from(vec![
            vec![0.7, -1.2],
            vec![1.1, 0.3],
            vec![-0.4, 1.9],
            vec![2.5, -0.6],
            vec![0.0, 0.4],
            vec![1.8, 2.2],
        ]);
        let counts = [3usize, 3];
        let a = monte_carlo(&po, &counts, 4000, 7).unwrap();
        let b = monte_carlo(&po, &counts, 4000, 7).unwrap();
        assert_eq!(a, b);

        let mean = a.empirical_mean.as_ref().unwrap();
        let cov = a.empirical_cov.as_ref().unwrap();
        for t in 0..2 {
            let se = libm::sqrt(cov.get(t, t) / 4000.0);
            assert!(
                (mean[t] - a.population_effects[t]).abs() <= 4.0 * se,
                "component {t}"
            );
        }
    }

    #[test]
    fn monte_carlo_covariance_tracks_exact_covariance() {
        use rand::Rng;
        let mut prng = super::master_rng(2024, 0);
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..4).map(|_| prng.gen_range(-2.0..2.0)).collect())
            .collect();
        let po = po_from(rows);
        let counts = [3usize, 3, 3, 3];
        let reps = 40_000u64;
        let rep = monte_carlo(&po, &counts, reps, 99).unwrap();
        let emp = rep.empirical_cov.as_ref().unwrap();
        let exact = &rep.exact_cov;
        // Sample covariance entries scatter with standard error roughly
        // sqrt((c_aa c_bb + c_ab^2) / R); allow six of those.
        for a in 0..4 {
            for b in 0..4 {
                let se = libm::sqrt(
                    (exact.get(a, a) * exact.get(b, b) + exact.get(a, b) * exact.get(a, b))
                        / reps as f64,
                );
                let diff = (emp.get(a, b) - exact.get(a, b)).abs();
                assert!(
                    diff <= 6.0 * se + 1e-12,
                    "({a},{b}): |{} - {}| > 6 x {se}",
                    emp.get(a, b),
                    exact.get(a, b)
                );
            }
        }
    }

    #[test]
    fn assignment_space_sizes() {
        assert_eq!(assignment_space_size(&[vec![2, 2]]), 6);
        assert_eq!(assignment_space_size(&[vec![1, 1, 1, 1]]), 24);
        assert_eq!(assignment_space_size(&[vec![2, 2], vec![1, 1]]), 12);
        let err = enumerate_assignment_moments(
            &po_from(vec![vec![0.0, 1.0]; 30]),
            &[vec![15, 15]],
            1000,
        )
        .unwrap_err();
        assert!(matches!(err, Error::EnumerationTooLarge { .. }));
    }
}
