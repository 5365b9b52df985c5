//! Error type shared across the crate.

use alloc::string::String;
use alloc::vec::Vec;

use crate::conditions::Condition;
use crate::design::Criterion;

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    /// A specification is structurally invalid (shapes, signs, ranges).
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// Treatment group `treatment` (1-based) has no observations.
    #[error("treatment group {treatment} has no observations")]
    EmptyGroup { treatment: usize },

    /// Too few observations to estimate a variance for a group.
    #[error("treatment group {treatment} has {len} observation(s); variance estimation needs at least 2")]
    GroupTooSmall { treatment: usize, len: usize },

    /// All variances are zero, so the A/E allocation direction is undefined.
    #[error("all treatment variances are zero; the optimal direction is undefined for criterion {criterion}")]
    AllZeroVariances { criterion: Criterion },

    /// The D criterion takes the log of each variance ratio and a zero makes
    /// the objective unbounded below.
    #[error("treatment {treatment} has zero variance; criterion D is undefined (log of zero)")]
    ZeroVarianceForD { treatment: usize },

    /// Sum/bound constraints admit no integer solution.
    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    /// Closed-form block allocation requested without its validity condition.
    #[error("no exact {criterion}-optimal block allocation without {}; use the greedy solver instead", fmt_conditions(.required))]
    ConditionNotMet {
        criterion: Criterion,
        required: Vec<Condition>,
    },

    /// The exhaustive search space exceeds the configured cap.
    #[error("enumeration would visit {size} feasible points, above the cap of {cap}")]
    EnumerationTooLarge { size: u128, cap: u128 },
}

fn fmt_conditions(required: &[Condition]) -> String {
    use core::fmt::Write;
    let mut out = String::new();
    for (i, c) in required.iter().enumerate() {
        if i > 0 {
            out.push_str(" or ");
        }
        let _ = write!(out, "{c}");
    }
    out
}
