//! Treatment indexing and the completely-randomized design specification.
//!
//! A `2^K` experiment has `J = 2^K` treatment combinations. Combination
//! `(z_1, ..., z_K)` with levels `z_k ∈ {0, 1}` gets the 1-based index
//! `j = 2^(K-1) z_1 + 2^(K-2) z_2 + ... + z_K + 1`, i.e. the level string
//! read as a binary number plus one. In a `2^2` experiment the
//! combinations 00, 01, 10, 11 are numbered 1, 2, 3, 4.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Largest supported number of factors.
pub const MAX_FACTORS: u32 = 16;

/// Optimality criterion: a functional of the surrogate covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Criterion {
    /// Minimize the trace (average variance of the effect estimates).
    A,
    /// Minimize the determinant (volume of the confidence ellipsoid).
    D,
    /// Minimize the largest eigenvalue (worst normalized contrast variance).
    E,
}

impl core::fmt::Display for Criterion {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Criterion::A => f.write_str("A"),
            Criterion::D => f.write_str("D"),
            Criterion::E => f.write_str("E"),
        }
    }
}

impl core::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Criterion::A),
            "D" | "d" => Ok(Criterion::D),
            "E" | "e" => Ok(Criterion::E),
            other => Err(Error::InvalidSpec(format!(
                "unknown criterion {other:?}; expected A, D or E"
            ))),
        }
    }
}

/// Number of treatment combinations `J = 2^K`.
pub fn treatment_count(k: u32) -> usize {
    1usize << k
}

/// 1-based index of a treatment combination from its factor levels.
///
/// `levels[0]` is factor 1, the most significant digit. Levels must be
/// 0 or 1; the function is total on valid input.
pub fn treatment_index(levels: &[u8]) -> usize {
    debug_assert!(levels.iter().all(|&z| z <= 1), "levels must be 0 or 1");
    let mut j = 0usize;
    for &z in levels {
        j = (j << 1) | usize::from(z);
    }
    j + 1
}

/// Factor levels of the 1-based treatment index `j` in a `2^K` design.
///
/// Inverse of [`treatment_index`].
pub fn treatment_levels(j: usize, k: u32) -> Vec<u8> {
    debug_assert!(j >= 1 && j <= treatment_count(k));
    let t = j - 1;
    (0..k).map(|b| ((t >> (k - 1 - b)) & 1) as u8).collect()
}

/// Problem statement for integer allocation under complete randomization:
/// `K` factors, `N` units and per-arm bounds `lower[j] <= N_j <= upper[j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignSpec {
    k: u32,
    n: usize,
    lower: Vec<usize>,
    upper: Vec<usize>,
    criterion: Criterion,
}

impl DesignSpec {
    /// Design with the default bounds: at least 2 units per arm (so each
    /// group variance stays estimable) and no upper bound below `N`.
    pub fn new(k: u32, n: usize, criterion: Criterion) -> Result<Self> {
        let j = validate_k(k)?;
        let lower = alloc::vec![2usize; j];
        let upper = alloc::vec![n; j];
        Self::with_bounds(k, n, criterion, lower, upper)
    }

    /// Design with explicit per-arm bounds.
    pub fn with_bounds(
        k: u32,
        n: usize,
        criterion: Criterion,
        lower: Vec<usize>,
        upper: Vec<usize>,
    ) -> Result<Self> {
        let j = validate_k(k)?;
        if n == 0 {
            return Err(Error::InvalidSpec(String::from("N must be positive")));
        }
        if lower.len() != j || upper.len() != j {
            return Err(Error::InvalidSpec(format!(
                "bounds must have length J = {j}; got lower {}, upper {}",
                lower.len(),
                upper.len()
            )));
        }
        for jx in 0..j {
            if lower[jx] > upper[jx] || upper[jx] > n {
                return Err(Error::InvalidSpec(format!(
                    "arm {}: need 0 <= lower <= upper <= N, got [{}, {}] with N = {n}",
                    jx + 1,
                    lower[jx],
                    upper[jx]
                )));
            }
        }
        let lo: usize = lower.iter().sum();
        let hi: usize = upper.iter().sum();
        if lo > n || n > hi {
            return Err(Error::Infeasible(format!(
                "need sum(lower) <= N <= sum(upper); got {lo} <= {n} <= {hi}"
            )));
        }
        Ok(Self {
            k,
            n,
            lower,
            upper,
            criterion,
        })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Number of treatment combinations `J = 2^K`.
    pub fn j(&self) -> usize {
        treatment_count(self.k)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> &[usize] {
        &self.lower
    }

    pub fn upper(&self) -> &[usize] {
        &self.upper
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
    }
}

fn validate_k(k: u32) -> Result<usize> {
    if k == 0 || k > MAX_FACTORS {
        return Err(Error::InvalidSpec(format!(
            "K must be between 1 and {MAX_FACTORS}, got {k}"
        )));
    }
    Ok(treatment_count(k))
}
