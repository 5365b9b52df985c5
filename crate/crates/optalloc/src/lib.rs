//! Optimal allocation of experimental units to the `2^K` treatment
//! combinations of a two-level factorial experiment.
//!
//! The library answers one question in several settings: given guesses of
//! the finite-population outcome variances per treatment group, how many
//! units should each group receive so that the randomization-based
//! covariance of the estimated factorial effects is smallest under the
//! A- (trace), D- (determinant) or E- (largest eigenvalue) criterion?
//!
//! * [`exact`] — closed-form optimal proportions for completely randomized
//!   designs, randomized block designs and budget-constrained designs.
//! * [`greedy`] — integer allocations under sum and per-arm bound
//!   constraints via deterministic greedy descent.
//! * [`oracle`] — exhaustive enumeration of all feasible integer
//!   allocations, used to certify the greedy solutions.
//! * [`sim`] — randomization draws, exact estimator covariances and a
//!   Monte-Carlo validator, all computed from a full potential-outcome
//!   matrix.
//! * [`contrast`], [`variance`], [`criterion`], [`conditions`] — the
//!   factorial contrast machinery these are built on.
//!
//! The crate is `no_std` (with `alloc`) so the numerical core can be
//! embedded anywhere; file formats and the command-line front end live in
//! the companion `optalloc-cli` crate.
//!
//! ```
//! use optalloc::{Criterion, DesignSpec, VarianceSpec};
//!
//! // Pilot variance guesses for a 2^3 experiment, 192 units to place.
//! let s2 = VarianceSpec::new(vec![0.21, 0.20, 0.18, 0.20, 0.23, 0.21, 0.27, 0.21])?;
//! let design = DesignSpec::new(3, 192, Criterion::A)?;
//! let alloc = optalloc::greedy::greedy_crd(&s2, &design)?;
//! assert_eq!(alloc.counts, vec![24, 23, 22, 23, 25, 24, 27, 24]);
//! # Ok::<(), optalloc::Error>(())
//! ```

#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod conditions;
pub mod contrast;
pub mod criterion;
pub mod design;
pub mod error;
pub mod exact;
pub mod greedy;
pub mod matrix;
pub mod oracle;
pub mod sim;
pub mod variance;

pub use conditions::{ConditionReport, DEFAULT_CONDITION_TOL};
pub use contrast::{ContrastMatrix, EffectVector};
pub use design::{treatment_index, treatment_levels, Criterion, DesignSpec};
pub use error::{Error, Result};
pub use exact::{BlockExactAllocation, CostAllocation, CostSpec, ExactAllocation};
pub use greedy::{BlockBounds, BlockIntegerAllocation, IntegerAllocation};
pub use matrix::Mat;
pub use oracle::{BlockOptimalSet, OptimalSet};
pub use sim::{Assignment, CovarianceReport};
pub use variance::{BlockVarianceSpec, PotentialOutcomeMatrix, VarianceSpec};
