//! Closed-form optimal allocations.
//!
//! Complete randomization: the A-optimal proportions follow the
//! finite-population standard deviations (Neyman allocation), D-optimal is
//! balanced regardless of the variances, and E-optimal follows the
//! variances. Block designs inherit the A rule per block; balanced D/E
//! rules need within- or between-block homoscedasticity and the functions
//! refuse otherwise. Budget-constrained designs allocate budget shares
//! `pi_j` instead, with the floor rule `N_j = floor(C pi_j / C_j)` keeping
//! spend within budget.

use alloc::format;
use alloc::vec::Vec;

use crate::conditions::{check_block_variances, Condition};
use crate::design::Criterion;
use crate::error::{Error, Result};
use crate::variance::{BlockVarianceSpec, VarianceSpec};

/// Non-fatal notes attached to an allocation.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Warning {
    /// A zero-variance arm gets proportion zero under A/E; bounds must be
    /// enforced at the integer stage.
    ZeroVarianceArm { treatment: usize },
    /// D ignores the variances, including any zeros.
    ZeroVarianceIgnoredByD,
    /// A floored budget count fell below the two-unit convention that keeps
    /// group variances estimable.
    CountBelowTwo { treatment: usize, count: usize },
}

impl core::fmt::Display for Warning {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Warning::ZeroVarianceArm { treatment } => write!(
                f,
                "treatment {treatment} has zero variance and receives proportion 0; integer bounds must keep it feasible"
            ),
            Warning::ZeroVarianceIgnoredByD => {
                f.write_str("criterion D is variance-free; zero variances were ignored")
            }
            Warning::CountBelowTwo { treatment, count } => write!(
                f,
                "floored count for treatment {treatment} is {count}, below the 2-unit convention for variance estimation"
            ),
        }
    }
}

/// Exact (continuous) optimal proportions for a completely randomized
/// design; each `p_j` is the share of `N` assigned to treatment `j`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExactAllocation {
    pub proportions: Vec<f64>,
    pub criterion: Criterion,
    /// Conditions the validity of this allocation relied on.
    pub conditions_used: Vec<Condition>,
    pub warnings: Vec<Warning>,
}

/// Exact optimal proportions per block for a randomized block design.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockExactAllocation {
    /// `proportions[h][j]`, each row summing to one.
    pub proportions: Vec<Vec<f64>>,
    pub criterion: Criterion,
    pub conditions_used: Vec<Condition>,
    pub warnings: Vec<Warning>,
}

/// Per-unit treatment costs and the total budget.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    costs: Vec<f64>,
    budget: f64,
}

impl CostSpec {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN as well
    pub fn new(costs: Vec<f64>, budget: f64) -> Result<Self> {
        if costs.len() < 2 || !costs.len().is_power_of_two() {
            return Err(Error::InvalidSpec(format!(
                "cost vector length must be a power of two, got {}",
                costs.len()
            )));
        }
        for (t, &c) in costs.iter().enumerate() {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::InvalidSpec(format!(
                    "cost for treatment {} must be positive and finite, got {c}",
                    t + 1
                )));
            }
        }
        if !(budget > 0.0) || !budget.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "budget must be positive and finite, got {budget}"
            )));
        }
        Ok(Self { costs, budget })
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }
}

/// Budget-share allocation: `budget_shares[j]` is the fraction of the
/// budget spent on treatment `j`, and `integer_counts` applies the floor
/// rule so that `spent <= budget` always holds.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CostAllocation {
    pub budget_shares: Vec<f64>,
    pub integer_counts: Vec<usize>,
    pub spent: f64,
    pub criterion: Criterion,
    pub warnings: Vec<Warning>,
}

/// Optimal proportions under complete randomization.
///
/// * A: `p_j = S_j / sum S_j`
/// * D: `p_j = 1/J` (the variances drop out)
/// * E: `p_j = S^2_j / sum S^2_j`
pub fn exact_crd(vs: &VarianceSpec, criterion: Criterion) -> Result<ExactAllocation> {
    let mut warnings = Vec::new();
    let proportions = direction(vs.values(), criterion, &mut warnings)?;
    Ok(ExactAllocation {
        proportions,
        criterion,
        conditions_used: Vec::new(),
        warnings,
    })
}

/// Optimal proportions per block.
///
/// The A rule applies the CRD rule within each block unconditionally. The
/// balanced D rule needs WBH or BBH and the balanced E rule needs WBH;
/// without them the closed form does not exist and the error directs the
/// caller to the greedy solver.
pub fn exact_block(
    vs: &BlockVarianceSpec,
    criterion: Criterion,
    tol: f64,
) -> Result<BlockExactAllocation> {
    let j = vs.j();
    let report = check_block_variances(vs, tol);
    let wbh = report.within_block_homoscedastic == Some(true);
    let bbh = report.between_block_homoscedastic == Some(true);

    match criterion {
        Criterion::A => {
            let mut warnings = Vec::new();
            let proportions = vs
                .rows()
                .iter()
                .map(|row| direction(row, Criterion::A, &mut warnings))
                .collect::<Result<Vec<_>>>()?;
            Ok(BlockExactAllocation {
                proportions,
                criterion,
                conditions_used: Vec::new(),
                warnings,
            })
        }
        Criterion::D => {
            if !(wbh || bbh) {
                return Err(Error::ConditionNotMet {
                    criterion,
                    required: alloc::vec![
                        Condition::WithinBlockHomoscedastic,
                        Condition::BetweenBlockHomoscedastic,
                    ],
                });
            }
            let mut conditions_used = Vec::new();
            if wbh {
                conditions_used.push(Condition::WithinBlockHomoscedastic);
            }
            if bbh {
                conditions_used.push(Condition::BetweenBlockHomoscedastic);
            }
            Ok(BlockExactAllocation {
                proportions: alloc::vec![alloc::vec![1.0 / j as f64; j]; vs.h()],
                criterion,
                conditions_used,
                warnings: Vec::new(),
            })
        }
        Criterion::E => {
            if !wbh {
                return Err(Error::ConditionNotMet {
                    criterion,
                    required: alloc::vec![Condition::WithinBlockHomoscedastic],
                });
            }
            Ok(BlockExactAllocation {
                proportions: alloc::vec![alloc::vec![1.0 / j as f64; j]; vs.h()],
                criterion,
                conditions_used: alloc::vec![Condition::WithinBlockHomoscedastic],
                warnings: Vec::new(),
            })
        }
    }
}

/// Optimal budget shares under the cost constraint `sum C_j N_j <= C`, and
/// the floored integer counts.
///
/// * A: `pi_j ∝ S_j sqrt(C_j)`
/// * D: `pi_j = 1/J`
/// * E: `pi_j ∝ S^2_j C_j`
pub fn exact_cost(
    vs: &VarianceSpec,
    cost: &CostSpec,
    criterion: Criterion,
) -> Result<CostAllocation> {
    if cost.costs().len() != vs.j() {
        return Err(Error::InvalidSpec(format!(
            "cost vector length {} does not match J = {}",
            cost.costs().len(),
            vs.j()
        )));
    }
    let mut warnings = Vec::new();
    let weights: Vec<f64> = match criterion {
        Criterion::A => vs
            .values()
            .iter()
            .zip(cost.costs())
            .map(|(&s2, &c)| libm::sqrt(s2) * libm::sqrt(c))
            .collect(),
        Criterion::D => alloc::vec![1.0; vs.j()],
        Criterion::E => vs
            .values()
            .iter()
            .zip(cost.costs())
            .map(|(&s2, &c)| s2 * c)
            .collect(),
    };
    let budget_shares = normalize(&weights, criterion, &mut warnings)?;
    if criterion == Criterion::D && vs.values().contains(&0.0) {
        warnings.push(Warning::ZeroVarianceIgnoredByD);
    }

    let integer_counts: Vec<usize> = budget_shares
        .iter()
        .zip(cost.costs())
        .map(|(&pi, &c)| floor_count(cost.budget() * pi / c))
        .collect();
    for (t, &n) in integer_counts.iter().enumerate() {
        if n < 2 {
            warnings.push(Warning::CountBelowTwo {
                treatment: t + 1,
                count: n,
            });
        }
    }
    let spent = integer_counts
        .iter()
        .zip(cost.costs())
        .map(|(&n, &c)| n as f64 * c)
        .sum();
    Ok(CostAllocation {
        budget_shares,
        integer_counts,
        spent,
        criterion,
        warnings,
    })
}

fn floor_count(x: f64) -> usize {
    libm::floor(x).max(0.0) as usize
}

/// Normalized direction vector for one variance row under a criterion.
fn direction(s2: &[f64], criterion: Criterion, warnings: &mut Vec<Warning>) -> Result<Vec<f64>> {
    let weights: Vec<f64> = match criterion {
        Criterion::A => s2.iter().map(|&v| libm::sqrt(v)).collect(),
        Criterion::D => alloc::vec![1.0; s2.len()],
        Criterion::E => s2.to_vec(),
    };
    if criterion == Criterion::D && s2.contains(&0.0) {
        warnings.push(Warning::ZeroVarianceIgnoredByD);
    }
    normalize(&weights, criterion, warnings)
}

fn normalize(
    weights: &[f64],
    criterion: Criterion,
    warnings: &mut Vec<Warning>,
) -> Result<Vec<f64>> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllZeroVariances { criterion });
    }
    for (t, &w) in weights.iter().enumerate() {
        if w == 0.0 && criterion != Criterion::D {
            warnings.push(Warning::ZeroVarianceArm { treatment: t + 1 });
        }
    }
    Ok(weights.iter().map(|&w| w / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    fn vs(v: &[f64]) -> VarianceSpec {
        VarianceSpec::new(v.to_vec()).unwrap()
    }

    #[test]
    fn homoscedastic_input_balances_every_criterion() {
        let vs = vs(&[1.0, 1.0, 1.0, 1.0]);
        for c in [Criterion::A, Criterion::D, Criterion::E] {
            let a = exact_crd(&vs, c).unwrap();
            for &p in &a.proportions {
                assert_abs_diff_eq!(p, 0.25, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn neyman_allocation_for_a() {
        // Variances (1,2,3,4): p follows the standard deviations.
        let a = exact_crd(&vs(&[1.0, 2.0, 3.0, 4.0]), Criterion::A).unwrap();
        let want = [0.163, 0.230, 0.282, 0.325];
        for (p, w) in a.proportions.iter().zip(&want) {
            assert_abs_diff_eq!(p, w, epsilon = 1e-3);
        }
        assert_abs_diff_eq!(a.proportions.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn variance_proportional_for_e() {
        let a = exact_crd(&vs(&[1.0, 2.0, 3.0, 4.0]), Criterion::E).unwrap();
        let want = [0.1, 0.2, 0.3, 0.4];
        for (p, w) in a.proportions.iter().zip(&want) {
            assert_abs_diff_eq!(p, w, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_variance_edge_cases() {
        let z = vs(&[0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            exact_crd(&z, Criterion::A).unwrap_err(),
            Error::AllZeroVariances { .. }
        ));
        assert!(matches!(
            exact_crd(&z, Criterion::E).unwrap_err(),
            Error::AllZeroVariances { .. }
        ));
        // D is variance-free, so it still balances (with a note).
        let d = exact_crd(&z, Criterion::D).unwrap();
        assert_abs_diff_eq!(d.proportions[0], 0.25, epsilon = 1e-15);
        assert!(d.warnings.contains(&Warning::ZeroVarianceIgnoredByD));
        // Partially zero: proportion 0 plus a warning.
        let a = exact_crd(&vs(&[0.0, 1.0]), Criterion::A).unwrap();
        assert_eq!(a.proportions[0], 0.0);
        assert!(a
            .warnings
            .contains(&Warning::ZeroVarianceArm { treatment: 1 }));
    }

    #[test]
    fn block_a_is_per_block_neyman() {
        let bvs = BlockVarianceSpec::new(
            vec![vec![1.0, 4.0, 9.0, 16.0], vec![4.0, 4.0, 4.0, 4.0]],
            vec![40, 40],
        )
        .unwrap();
        let a = exact_block(&bvs, Criterion::A, 1e-9).unwrap();
        let want0 = [0.1, 0.2, 0.3, 0.4];
        for (p, w) in a.proportions[0].iter().zip(&want0) {
            assert_abs_diff_eq!(p, w, epsilon = 1e-12);
        }
        for p in &a.proportions[1] {
            assert_abs_diff_eq!(*p, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn block_balanced_when_conditions_hold() {
        // Equal variances everywhere: counts 10 per arm in blocks of 40.
        let bvs = BlockVarianceSpec::new(vec![vec![1.0; 4]; 2], vec![40, 40]).unwrap();
        for c in [Criterion::A, Criterion::D, Criterion::E] {
            let a = exact_block(&bvs, c, 1e-9).unwrap();
            for row in &a.proportions {
                for &p in row {
                    assert_abs_diff_eq!(p, 0.25, epsilon = 1e-15);
                    assert_abs_diff_eq!(p * 40.0, 10.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn block_d_and_e_refuse_without_conditions() {
        let bvs = BlockVarianceSpec::new(
            vec![vec![1.0, 2.0, 3.0, 4.0], vec![4.0, 3.0, 2.0, 1.0]],
            vec![40, 40],
        )
        .unwrap();
        for c in [Criterion::D, Criterion::E] {
            let err = exact_block(&bvs, c, 1e-9).unwrap_err();
            assert!(matches!(err, Error::ConditionNotMet { .. }), "{c}: {err}");
        }
        // BBH alone is enough for D but not for E.
        let bbh_only = BlockVarianceSpec::new(
            vec![vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 4.0]],
            vec![40, 20],
        )
        .unwrap();
        let d = exact_block(&bbh_only, Criterion::D, 1e-9).unwrap();
        assert_eq!(
            d.conditions_used,
            vec![Condition::BetweenBlockHomoscedastic]
        );
        assert!(exact_block(&bbh_only, Criterion::E, 1e-9).is_err());
    }

    #[test]
    fn cost_shares_follow_theorem_directions() {
        // Unit variances, costs (0.1, 4, 4, 9).
        let unit = vs(&[1.0, 1.0, 1.0, 1.0]);
        let cost = CostSpec::new(vec![0.1, 4.0, 4.0, 9.0], 100.0).unwrap();
        let a = exact_cost(&unit, &cost, Criterion::A).unwrap();
        for (p, w) in a.budget_shares.iter().zip(&[0.043, 0.273, 0.273, 0.410]) {
            assert_abs_diff_eq!(p, w, epsilon = 1e-3);
        }
        let e = exact_cost(&unit, &cost, Criterion::E).unwrap();
        for (p, w) in e.budget_shares.iter().zip(&[0.006, 0.234, 0.234, 0.526]) {
            assert_abs_diff_eq!(p, w, epsilon = 1e-3);
        }
        let d = exact_cost(&unit, &cost, Criterion::D).unwrap();
        for p in &d.budget_shares {
            assert_abs_diff_eq!(*p, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn floor_rule_keeps_spend_within_budget() {
        let unit = vs(&[1.0, 1.0, 1.0, 1.0]);
        let cost = CostSpec::new(vec![500.0, 5000.0, 5000.0, 10000.0], 4.5e6).unwrap();
        let e = exact_cost(&unit, &cost, Criterion::E).unwrap();
        assert_eq!(e.integer_counts, vec![219, 219, 219, 219]);
        assert!(e.spent <= cost.budget());
        for (p, w) in e.budget_shares.iter().zip(&[0.024, 0.244, 0.244, 0.488]) {
            assert_abs_diff_eq!(p, w, epsilon = 1e-3);
        }
    }

    #[test]
    fn tiny_budget_warns_about_small_groups() {
        let unit = vs(&[1.0, 1.0]);
        let cost = CostSpec::new(vec![1.0, 10.0], 12.0).unwrap();
        let a = exact_cost(&unit, &cost, Criterion::A).unwrap();
        assert!(a
            .warnings
            .iter()
            .any(|w| matches!(w, Warning::CountBelowTwo { .. })));
    }

    #[test]
    fn equal_costs_reduce_to_crd() {
        let v = vs(&[1.0, 2.0, 3.0, 4.0]);
        let cost = CostSpec::new(vec![2.5; 4], 1000.0).unwrap();
        for c in [Criterion::A, Criterion::D, Criterion::E] {
            let crd = exact_crd(&v, c).unwrap();
            let cst = exact_cost(&v, &cost, c).unwrap();
            for (p, q) in crd.proportions.iter().zip(&cst.budget_shares) {
                assert_abs_diff_eq!(p, q, epsilon = 1e-12);
            }
        }
    }
}
