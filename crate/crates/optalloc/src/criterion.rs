//! The surrogate covariance matrix and the A/D/E criterion values.
//!
//! For a completely randomized design the surrogate is
//! `V = L^T diag(S^2_j / N_j) L`; for a block design the diagonal holds the
//! block aggregates `S^2_blk,j = sum_h (M_h^2 / N^2) (S^2_{h,j} / M_{h,j})`.
//! Because `L / sqrt(J)` is orthonormal, the eigenvalues of `V` are exactly
//! `J` times the diagonal ratios, which gives every criterion a closed
//! form:
//!
//! * A: `trace(V) = J * sum_j r_j`
//! * D: `log det(V) = J log J + sum_j log r_j` (returned in log scale so
//!   large `J` cannot overflow; the monotone transform preserves argmins)
//! * E: `max eigenvalue = J * max_j r_j`

use alloc::format;
use alloc::vec::Vec;

use crate::contrast::ContrastMatrix;
use crate::design::Criterion;
use crate::error::{Error, Result};
use crate::matrix::Mat;
use crate::variance::{BlockVarianceSpec, VarianceSpec};

/// Per-treatment ratios `r_j = S^2_j / N_j`. Counts must be positive.
pub fn variance_ratios(vs: &VarianceSpec, counts: &[usize]) -> Result<Vec<f64>> {
    check_counts(vs.j(), counts)?;
    Ok(vs
        .values()
        .iter()
        .zip(counts)
        .map(|(&s2, &n)| s2 / n as f64)
        .collect())
}

/// Block-aggregated diagonal `S^2_blk,j = sum_h (M_h^2/N^2)(S^2_{h,j}/M_{h,j})`.
pub fn block_aggregate(vs: &BlockVarianceSpec, counts: &[Vec<usize>]) -> Result<Vec<f64>> {
    if counts.len() != vs.h() {
        return Err(Error::InvalidSpec(format!(
            "{} count rows for {} blocks",
            counts.len(),
            vs.h()
        )));
    }
    for (h, row) in counts.iter().enumerate() {
        check_counts(vs.j(), row).map_err(|_| {
            Error::InvalidSpec(format!(
                "block {}: counts must be positive and of length {}",
                h + 1,
                vs.j()
            ))
        })?;
    }
    let n = vs.n() as f64;
    let mut agg = alloc::vec![0.0; vs.j()];
    for (h, row) in vs.rows().iter().enumerate() {
        let m_h = vs.sizes()[h] as f64;
        let w = (m_h / n) * (m_h / n);
        for (t, &s2) in row.iter().enumerate() {
            agg[t] += w * s2 / counts[h][t] as f64;
        }
    }
    Ok(agg)
}

/// Criterion value from the diagonal ratios; shared by the exact, greedy
/// and oracle paths so equal allocations produce bit-identical values.
pub fn value_from_ratios(ratios: &[f64], criterion: Criterion) -> Result<f64> {
    let j = ratios.len() as f64;
    match criterion {
        Criterion::A => Ok(j * ratios.iter().sum::<f64>()),
        Criterion::E => Ok(j * ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        Criterion::D => {
            if let Some(t) = ratios.iter().position(|&r| r <= 0.0) {
                return Err(Error::ZeroVarianceForD { treatment: t + 1 });
            }
            let logs: f64 = ratios.iter().map(|&r| libm::log(r)).sum();
            Ok(j * libm::log(j) + logs)
        }
    }
}

/// Criterion value of an integer allocation under complete randomization.
pub fn criterion_value(vs: &VarianceSpec, counts: &[usize], criterion: Criterion) -> Result<f64> {
    value_from_ratios(&variance_ratios(vs, counts)?, criterion)
}

/// Criterion value of a per-block integer allocation.
pub fn block_criterion_value(
    vs: &BlockVarianceSpec,
    counts: &[Vec<usize>],
    criterion: Criterion,
) -> Result<f64> {
    value_from_ratios(&block_aggregate(vs, counts)?, criterion)
}

/// The surrogate matrix `V = L^T diag(r) L` itself.
pub fn criterion_matrix(vs: &VarianceSpec, counts: &[usize]) -> Result<Mat> {
    matrix_from_diagonal(&variance_ratios(vs, counts)?)
}

/// Block surrogate `V_blk = L^T diag(S^2_blk) L`.
pub fn block_criterion_matrix(vs: &BlockVarianceSpec, counts: &[Vec<usize>]) -> Result<Mat> {
    matrix_from_diagonal(&block_aggregate(vs, counts)?)
}

/// Eigenvalues of the CRD surrogate matrix, ascending: the multiset
/// `{J * S^2_j / N_j}`.
pub fn criterion_eigenvalues(vs: &VarianceSpec, counts: &[usize]) -> Result<Vec<f64>> {
    let mut eig: Vec<f64> = variance_ratios(vs, counts)?
        .iter()
        .map(|r| vs.j() as f64 * r)
        .collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Eigenvalues of the block surrogate matrix, ascending: `{J * S^2_blk,j}`.
pub fn block_criterion_eigenvalues(
    vs: &BlockVarianceSpec,
    counts: &[Vec<usize>],
) -> Result<Vec<f64>> {
    let mut eig: Vec<f64> = block_aggregate(vs, counts)?
        .iter()
        .map(|a| vs.j() as f64 * a)
        .collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

fn matrix_from_diagonal(ratios: &[f64]) -> Result<Mat> {
    let j = ratios.len();
    let k = j.trailing_zeros();
    let l = ContrastMatrix::build(k)?;
    let mut v = Mat::zeros(j, j);
    for a in 0..j {
        for b in a..j {
            let mut acc = 0.0;
            for (t, &r) in ratios.iter().enumerate() {
                acc += r * f64::from(l.entry(t, a)) * f64::from(l.entry(t, b));
            }
            v.set(a, b, acc);
            v.set(b, a, acc);
        }
    }
    Ok(v)
}

fn check_counts(j: usize, counts: &[usize]) -> Result<()> {
    if counts.len() != j {
        return Err(Error::InvalidSpec(format!(
            "allocation has {} arms, variances have {j}",
            counts.len()
        )));
    }
    if let Some(t) = counts.iter().position(|&n| n == 0) {
        return Err(Error::InvalidSpec(format!(
            "treatment {} has a zero count; criterion values need N_j >= 1",
            t + 1
        )));
    }
    Ok(())
}
