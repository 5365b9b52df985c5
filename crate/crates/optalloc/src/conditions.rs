//! Checks of the potential-outcome restrictions that make closed-form
//! balanced allocations valid: homoscedasticity, strict additivity, and
//! the within-/between-block homoscedasticity pair for block designs.
//!
//! These are exact algebraic statements; the tolerance exists only to
//! absorb floating-point ingestion, so the default is tight.

use alloc::vec::Vec;

use crate::error::Result;
use crate::variance::{BlockVarianceSpec, PotentialOutcomeMatrix, VarianceSpec};

/// Default relative tolerance for condition checks.
pub const DEFAULT_CONDITION_TOL: f64 = 1e-9;

/// Named potential-outcome restrictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Condition {
    /// Every treatment column has the same variance.
    Homoscedastic,
    /// Unit-level treatment contrasts are constant across units.
    StrictlyAdditive,
    /// Within each block, all treatments share one variance (WBH).
    WithinBlockHomoscedastic,
    /// For each treatment, all blocks share one variance (BBH).
    BetweenBlockHomoscedastic,
}

impl core::fmt::Display for Condition {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Condition::Homoscedastic => f.write_str("homoscedasticity"),
            Condition::StrictlyAdditive => f.write_str("strict additivity"),
            Condition::WithinBlockHomoscedastic => f.write_str("WBH"),
            Condition::BetweenBlockHomoscedastic => f.write_str("BBH"),
        }
    }
}

/// Outcome of [`check_variances`], [`check_block_variances`] or
/// [`check_potential_outcomes`]. A `None` flag means the input carried too
/// little structure to evaluate that condition.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConditionReport {
    pub homoscedastic: Option<bool>,
    pub strictly_additive: Option<bool>,
    pub within_block_homoscedastic: Option<bool>,
    pub between_block_homoscedastic: Option<bool>,
    pub tol: f64,
}

impl ConditionReport {
    fn empty(tol: f64) -> Self {
        Self {
            homoscedastic: None,
            strictly_additive: None,
            within_block_homoscedastic: None,
            between_block_homoscedastic: None,
            tol,
        }
    }

    /// Conditions this report found to hold.
    pub fn holding(&self) -> Vec<Condition> {
        let mut out = Vec::new();
        if self.homoscedastic == Some(true) {
            out.push(Condition::Homoscedastic);
        }
        if self.strictly_additive == Some(true) {
            out.push(Condition::StrictlyAdditive);
        }
        if self.within_block_homoscedastic == Some(true) {
            out.push(Condition::WithinBlockHomoscedastic);
        }
        if self.between_block_homoscedastic == Some(true) {
            out.push(Condition::BetweenBlockHomoscedastic);
        }
        out
    }
}

/// All values equal within `tol`, relative to the largest magnitude among
/// them. An all-zero slice counts as equal.
fn all_equal_rel(values: impl Iterator<Item = f64> + Clone, tol: f64) -> bool {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut scale = 0.0f64;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
        scale = scale.max(libm::fabs(v));
    }
    if !lo.is_finite() || !hi.is_finite() {
        return lo > hi; // empty iterator counts as equal
    }
    hi - lo <= tol * scale
}

/// Homoscedasticity from a flat variance specification.
pub fn check_variances(vs: &VarianceSpec, tol: f64) -> ConditionReport {
    let mut report = ConditionReport::empty(tol);
    report.homoscedastic = Some(all_equal_rel(vs.values().iter().copied(), tol));
    report
}

/// WBH/BBH (and their conjunction as homoscedasticity) from per-block
/// variances.
pub fn check_block_variances(vs: &BlockVarianceSpec, tol: f64) -> ConditionReport {
    let mut report = ConditionReport::empty(tol);
    let wbh = vs
        .rows()
        .iter()
        .all(|row| all_equal_rel(row.iter().copied(), tol));
    let bbh = (0..vs.j()).all(|t| all_equal_rel(vs.rows().iter().map(|row| row[t]), tol));
    report.within_block_homoscedastic = Some(wbh);
    report.between_block_homoscedastic = Some(bbh);
    report.homoscedastic = Some(all_equal_rel(
        vs.rows().iter().flat_map(|row| row.iter().copied()),
        tol,
    ));
    report
}

/// Every flag computable from a full potential-outcome matrix: strict
/// additivity and homoscedasticity always, the block pair when the matrix
/// carries block labels.
pub fn check_potential_outcomes(po: &PotentialOutcomeMatrix, tol: f64) -> Result<ConditionReport> {
    let mut report = check_variances(&po.column_variances()?, tol);

    // Strict additivity: Y_i(t) - Y_i(0) constant over units for every
    // treatment column t; pairwise constancy follows. The scale for the
    // comparison is the outcome magnitude, since the differences inherit
    // its rounding.
    let scale = (0..po.n())
        .flat_map(|i| (0..po.j()).map(move |t| (i, t)))
        .fold(0.0f64, |m, (i, t)| m.max(libm::fabs(po.outcome(i, t))));
    let additive = (1..po.j()).all(|t| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..po.n() {
            let d = po.outcome(i, t) - po.outcome(i, 0);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        hi - lo <= tol * scale
    });
    report.strictly_additive = Some(additive);

    if po.block_labels().is_some() {
        let block = check_block_variances(&po.block_variances()?, tol);
        report.within_block_homoscedastic = block.within_block_homoscedastic;
        report.between_block_homoscedastic = block.between_block_homoscedastic;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn additive_rows_are_additive_and_homoscedastic() {
        // Rows (a_i, a_i+1, a_i+2, a_i+3): strictly additive, hence also
        // homoscedastic.
        let rows: Vec<Vec<f64>> = [0.3, -1.2, 5.0, 2.2]
            .iter()
            .map(|a| vec![*a, a + 1.0, a + 2.0, a + 3.0])
            .collect();
        let po = PotentialOutcomeMatrix::new(rows, None).unwrap();
        let rep = check_potential_outcomes(&po, DEFAULT_CONDITION_TOL).unwrap();
        assert_eq!(rep.strictly_additive, Some(true));
        assert_eq!(rep.homoscedastic, Some(true));
    }

    #[test]
    fn non_additive_matrix_detected() {
        let po = PotentialOutcomeMatrix::new(
            vec![vec![0.0, 1.0], vec![0.0, 2.0], vec![0.0, 3.0]],
            None,
        )
        .unwrap();
        let rep = check_potential_outcomes(&po, DEFAULT_CONDITION_TOL).unwrap();
        assert_eq!(rep.strictly_additive, Some(false));
        assert_eq!(rep.homoscedastic, Some(false));
    }

    #[test]
    fn wbh_without_bbh() {
        // Equal blocks with equal variances within block: WBH yes, BBH no.
        let vs = BlockVarianceSpec::new(
            vec![vec![4.0, 4.0, 4.0, 4.0], vec![1.0, 1.0, 1.0, 1.0]],
            vec![40, 40],
        )
        .unwrap();
        let rep = check_block_variances(&vs, DEFAULT_CONDITION_TOL);
        assert_eq!(rep.within_block_homoscedastic, Some(true));
        assert_eq!(rep.between_block_homoscedastic, Some(false));
        assert_eq!(rep.homoscedastic, Some(false));
    }

    #[test]
    fn neither_wbh_nor_bbh() {
        let vs = BlockVarianceSpec::new(
            vec![vec![1.0, 2.0, 3.0, 4.0], vec![4.0, 3.0, 2.0, 1.0]],
            vec![40, 40],
        )
        .unwrap();
        let rep = check_block_variances(&vs, DEFAULT_CONDITION_TOL);
        assert_eq!(rep.within_block_homoscedastic, Some(false));
        assert_eq!(rep.between_block_homoscedastic, Some(false));
    }

    #[test]
    fn bbh_without_wbh() {
        let vs = BlockVarianceSpec::new(
            vec![vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 4.0]],
            vec![40, 20],
        )
        .unwrap();
        let rep = check_block_variances(&vs, DEFAULT_CONDITION_TOL);
        assert_eq!(rep.within_block_homoscedastic, Some(false));
        assert_eq!(rep.between_block_homoscedastic, Some(true));
    }

    #[test]
    fn tolerance_absorbs_float_noise() {
        let vs = VarianceSpec::new(vec![1.0, 1.0 + 1e-12, 1.0 - 1e-12, 1.0]).unwrap();
        assert_eq!(
            check_variances(&vs, DEFAULT_CONDITION_TOL).homoscedastic,
            Some(true)
        );
        assert_eq!(check_variances(&vs, 1e-14).homoscedastic, Some(false));
    }

    #[test]
    fn all_zero_variances_count_as_equal() {
        let vs = VarianceSpec::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(
            check_variances(&vs, DEFAULT_CONDITION_TOL).homoscedastic,
            Some(true)
        );
    }
}
