//! Exhaustive enumeration of feasible integer allocations.
//!
//! Brute force at desk scale: visit every integer vector satisfying the
//! sum and bound constraints, evaluate the criterion through the same code
//! path the greedy solvers use, and collect *all* minimizers. The size of
//! the search space is computed in closed form first (bounded
//! compositions via inclusion-exclusion) and the walk is refused if it
//! exceeds the cap. Enumeration order is lexicographic in the counts, so
//! the first optimum is deterministic.

use alloc::vec::Vec;

use crate::criterion::value_from_ratios;
use crate::design::{Criterion, DesignSpec};
use crate::error::{Error, Result};
use crate::greedy::BlockBounds;
use crate::variance::{BlockVarianceSpec, VarianceSpec};

/// Default cap on the number of feasible points an enumeration may visit.
pub const DEFAULT_ENUMERATION_CAP: u128 = 100_000_000;

/// Relative tolerance for collecting criterion-value ties.
pub const VALUE_TIE_TOL: f64 = 1e-12;

/// All optimal integer allocations of a CRD enumeration.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptimalSet {
    /// Every criterion minimizer, in lexicographic count order.
    pub optima: Vec<Vec<usize>>,
    pub value: f64,
    /// Feasible points visited.
    pub enumerated: u128,
    pub criterion: Criterion,
}

/// All optimal integer allocations of a block enumeration.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockOptimalSet {
    pub optima: Vec<Vec<Vec<usize>>>,
    pub value: f64,
    pub enumerated: u128,
    pub criterion: Criterion,
}

/// Exact number of integer vectors with `sum x_j = total` and
/// `lower <= x <= upper`, by inclusion-exclusion over the upper bounds.
/// Returns `u128::MAX` when the count overflows the safe range.
pub fn count_bounded_compositions(total: usize, lower: &[usize], upper: &[usize]) -> u128 {
    let j = lower.len();
    debug_assert_eq!(upper.len(), j);
    let lo: usize = lower.iter().sum();
    if total < lo {
        return 0;
    }
    let caps: Vec<u128> = lower
        .iter()
        .zip(upper)
        .map(|(&l, &u)| (u - l) as u128)
        .collect();
    let cap_sum: u128 = caps.iter().sum();
    if (total - lo) as u128 > cap_sum {
        return 0;
    }
    // Counting over the cube is symmetric under y -> cap - y; work from
    // the cheaper end so every inclusion-exclusion term stays bounded.
    let free = (total - lo) as u128;
    let free = free.min(cap_sum - free);
    let base = binomial_saturating(free + j as u128 - 1, j as u128 - 1);
    if base >= SAFE_COUNT_LIMIT {
        return u128::MAX;
    }

    // Inclusion-exclusion over subsets of violated upper bounds. J <= 16
    // keeps this at 65536 terms worst case; terms never exceed `base`.
    let mut total_count: i128 = 0;
    for mask in 0u32..(1u32 << j) {
        let mut shifted = free as i128;
        for (t, &c) in caps.iter().enumerate() {
            if mask >> t & 1 == 1 {
                shifted -= c as i128 + 1;
            }
        }
        if shifted < 0 {
            continue;
        }
        let term = binomial_saturating(shifted as u128 + j as u128 - 1, j as u128 - 1);
        let term = i128::try_from(term).expect("term bounded by base");
        if mask.count_ones() % 2 == 0 {
            total_count += term;
        } else {
            total_count -= term;
        }
    }
    debug_assert!(total_count >= 0);
    total_count as u128
}

/// Keeps every term comfortably inside i128 even after 2^16 signed sums.
const SAFE_COUNT_LIMIT: u128 = 1 << 100;

fn binomial_saturating(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by i + 1 (it equals (i+1) * C(n, i+1)).
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
        if acc >= SAFE_COUNT_LIMIT {
            return u128::MAX;
        }
    }
    acc
}

/// Collects allocations tying for the smallest value within
/// [`VALUE_TIE_TOL`] relative.
struct TieCollector<T> {
    best: f64,
    members: Vec<(f64, T)>,
}

impl<T: Clone> TieCollector<T> {
    fn new() -> Self {
        Self {
            best: f64::INFINITY,
            members: Vec::new(),
        }
    }

    #[inline]
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN values must not enter
    fn offer(&mut self, value: f64, item: impl FnOnce() -> T) {
        if !(value <= self.best + tie_slack(self.best, value)) {
            return;
        }
        if value < self.best {
            self.best = value;
            let keep = tie_slack(self.best, self.best);
            self.members.retain(|(v, _)| *v <= self.best + keep);
        }
        self.members.push((value, item()));
    }

    fn finish(self) -> (f64, Vec<T>) {
        let best = self.best;
        let keep = tie_slack(best, best);
        (
            best,
            self.members
                .into_iter()
                .filter(|(v, _)| *v <= best + keep)
                .map(|(_, t)| t)
                .collect(),
        )
    }
}

#[inline]
fn tie_slack(a: f64, b: f64) -> f64 {
    VALUE_TIE_TOL * libm::fabs(a).max(libm::fabs(b))
}

/// Enumerate every feasible CRD allocation and return all criterion
/// minimizers.
pub fn enumerate_crd(vs: &VarianceSpec, spec: &DesignSpec, cap: u128) -> Result<OptimalSet> {
    if vs.j() != spec.j() {
        return Err(Error::InvalidSpec(alloc::format!(
            "variance vector has J = {}, design has J = {}",
            vs.j(),
            spec.j()
        )));
    }
    let criterion = spec.criterion();
    if criterion == Criterion::D {
        if let Some(t) = vs.values().iter().position(|&v| v == 0.0) {
            return Err(Error::ZeroVarianceForD { treatment: t + 1 });
        }
    }
    let size = count_bounded_compositions(spec.n(), spec.lower(), spec.upper());
    if size > cap {
        return Err(Error::EnumerationTooLarge { size, cap });
    }

    let j = vs.j();
    let s2 = vs.values();
    let mut counts = spec.lower().to_vec();
    let mut ratios = alloc::vec![0.0f64; j];
    let mut ties: TieCollector<Vec<usize>> = TieCollector::new();
    let mut visited: u128 = 0;

    // Depth-first over arms; arm `t` takes any count whose remainder stays
    // coverable by the later arms' bounds.
    let tail_lower: Vec<usize> = suffix_sums(spec.lower());
    let tail_upper: Vec<usize> = suffix_sums(spec.upper());

    #[allow(clippy::too_many_arguments)]
    fn walk(
        t: usize,
        remaining: usize,
        j: usize,
        s2: &[f64],
        lower: &[usize],
        upper: &[usize],
        tail_lower: &[usize],
        tail_upper: &[usize],
        counts: &mut Vec<usize>,
        ratios: &mut Vec<f64>,
        criterion: Criterion,
        ties: &mut TieCollector<Vec<usize>>,
        visited: &mut u128,
    ) {
        if t == j {
            *visited += 1;
            // `value_from_ratios` is shared with greedy/criterion paths, so
            // tie values are bit-comparable across modules.
            if let Ok(v) = value_from_ratios(ratios, criterion) {
                ties.offer(v, || counts.clone());
            }
            return;
        }
        let lo = lower[t].max(remaining.saturating_sub(tail_upper[t + 1]));
        let hi = upper[t].min(remaining.saturating_sub(tail_lower[t + 1]));
        for n_t in lo..=hi {
            counts[t] = n_t;
            ratios[t] = if n_t == 0 {
                if s2[t] == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                s2[t] / n_t as f64
            };
            walk(
                t + 1,
                remaining - n_t,
                j,
                s2,
                lower,
                upper,
                tail_lower,
                tail_upper,
                counts,
                ratios,
                criterion,
                ties,
                visited,
            );
        }
        counts[t] = lower[t];
    }

    walk(
        0,
        spec.n(),
        j,
        s2,
        spec.lower(),
        spec.upper(),
        &tail_lower,
        &tail_upper,
        &mut counts,
        &mut ratios,
        criterion,
        &mut ties,
        &mut visited,
    );

    let (value, optima) = ties.finish();
    Ok(OptimalSet {
        optima,
        value,
        enumerated: visited,
        criterion,
    })
}

fn suffix_sums(values: &[usize]) -> Vec<usize> {
    let mut out = alloc::vec![0usize; values.len() + 1];
    for t in (0..values.len()).rev() {
        out[t] = out[t + 1] + values[t];
    }
    out
}

/// Feasible compositions of one block together with each composition's
/// per-treatment contribution `(M_h/N)^2 S^2_{h,j} / M_{h,j}` to the
/// column aggregates.
struct BlockTable {
    /// Flattened counts, `J` per composition.
    counts: Vec<usize>,
    /// Flattened contributions, `J` per composition.
    contribs: Vec<f64>,
    len: usize,
}

fn block_table(
    vs: &BlockVarianceSpec,
    bounds: &BlockBounds,
    h: usize,
) -> BlockTable {
    let j = vs.j();
    let n = vs.n() as f64;
    let m = vs.sizes()[h];
    let w = (m as f64 / n) * (m as f64 / n);
    let ws2: Vec<f64> = vs.row(h).iter().map(|&s2| w * s2).collect();

    let lower = &bounds.lower[h];
    let upper = &bounds.upper[h];
    let tail_lower = suffix_sums(lower);
    let tail_upper = suffix_sums(upper);

    let mut table = BlockTable {
        counts: Vec::new(),
        contribs: Vec::new(),
        len: 0,
    };
    let mut current = lower.clone();

    #[allow(clippy::too_many_arguments)]
    fn walk(
        t: usize,
        remaining: usize,
        j: usize,
        ws2: &[f64],
        lower: &[usize],
        upper: &[usize],
        tail_lower: &[usize],
        tail_upper: &[usize],
        current: &mut Vec<usize>,
        table: &mut BlockTable,
    ) {
        if t == j {
            table.counts.extend_from_slice(current);
            table.contribs.extend(current.iter().enumerate().map(|(x, &m)| {
                if ws2[x] == 0.0 {
                    0.0
                } else if m == 0 {
                    f64::INFINITY
                } else {
                    ws2[x] / m as f64
                }
            }));
            table.len += 1;
            return;
        }
        let lo = lower[t].max(remaining.saturating_sub(tail_upper[t + 1]));
        let hi = upper[t].min(remaining.saturating_sub(tail_lower[t + 1]));
        for m_t in lo..=hi {
            current[t] = m_t;
            walk(
                t + 1,
                remaining - m_t,
                j,
                ws2,
                lower,
                upper,
                tail_lower,
                tail_upper,
                current,
                table,
            );
        }
        current[t] = lower[t];
    }

    walk(
        0,
        m,
        j,
        &ws2,
        lower,
        upper,
        &tail_lower,
        &tail_upper,
        &mut current,
        &mut table,
    );
    table
}

/// Enumerate every feasible block allocation and return all criterion
/// minimizers.
///
/// The A criterion separates across blocks, so it is enumerated per block
/// and the optimal set is the cross product of the per-block optima. The
/// coupled criteria D and E walk the cross product of per-block
/// compositions.
pub fn enumerate_block(
    vs: &BlockVarianceSpec,
    bounds: &BlockBounds,
    criterion: Criterion,
    cap: u128,
) -> Result<BlockOptimalSet> {
    if criterion == Criterion::D {
        for row in vs.rows() {
            if let Some(t) = row.iter().position(|&v| v == 0.0) {
                return Err(Error::ZeroVarianceForD { treatment: t + 1 });
            }
        }
    }
    bounds.validate(vs)?;
    let h = vs.h();
    let per_block: Vec<u128> = (0..h)
        .map(|bh| {
            count_bounded_compositions(vs.sizes()[bh], &bounds.lower[bh], &bounds.upper[bh])
        })
        .collect();
    if per_block.contains(&0) {
        return Err(Error::Infeasible(alloc::string::String::from(
            "a block has no feasible composition",
        )));
    }

    if criterion == Criterion::A {
        let total: u128 = per_block.iter().sum();
        if total > cap {
            return Err(Error::EnumerationTooLarge { size: total, cap });
        }
        return enumerate_block_separable(vs, bounds);
    }

    let size = per_block
        .iter()
        .try_fold(1u128, |acc, &c| acc.checked_mul(c))
        .unwrap_or(u128::MAX);
    if size > cap {
        return Err(Error::EnumerationTooLarge { size, cap });
    }

    let tables: Vec<BlockTable> = (0..h).map(|bh| block_table(vs, bounds, bh)).collect();
    let j = vs.j();
    let mut ties: TieCollector<Vec<usize>> = TieCollector::new();
    let mut visited: u128 = 0;
    let mut chosen = alloc::vec![0usize; h];

    // Accumulate aggregates block by block; the fixed ascending block
    // order keeps sums bit-identical to `block_aggregate`.
    #[allow(clippy::too_many_arguments)]
    fn walk(
        bh: usize,
        h: usize,
        j: usize,
        tables: &[BlockTable],
        agg: &[f64],
        chosen: &mut Vec<usize>,
        criterion: Criterion,
        ties: &mut TieCollector<Vec<usize>>,
        visited: &mut u128,
    ) {
        if bh == h {
            *visited += 1;
            if let Ok(v) = value_from_ratios(agg, criterion) {
                ties.offer(v, || {
                    let mut flat = Vec::with_capacity(h * j);
                    for (b, &c) in chosen.iter().enumerate() {
                        flat.extend_from_slice(&tables[b].counts[c * j..(c + 1) * j]);
                    }
                    flat
                });
            }
            return;
        }
        let table = &tables[bh];
        let mut next = alloc::vec![0.0f64; j];
        for c in 0..table.len {
            let contrib = &table.contribs[c * j..(c + 1) * j];
            for t in 0..j {
                next[t] = agg[t] + contrib[t];
            }
            chosen[bh] = c;
            walk(bh + 1, h, j, tables, &next, chosen, criterion, ties, visited);
        }
    }

    let zero = alloc::vec![0.0f64; j];
    walk(
        0,
        h,
        j,
        &tables,
        &zero,
        &mut chosen,
        criterion,
        &mut ties,
        &mut visited,
    );

    let (value, flat_optima) = ties.finish();
    let optima = flat_optima
        .into_iter()
        .map(|flat| flat.chunks(j).map(|c| c.to_vec()).collect())
        .collect();
    Ok(BlockOptimalSet {
        optima,
        value,
        enumerated: visited,
        criterion,
    })
}

/// Per-block enumeration for the separable A criterion; global optima are
/// all combinations of per-block optima.
fn enumerate_block_separable(
    vs: &BlockVarianceSpec,
    bounds: &BlockBounds,
) -> Result<BlockOptimalSet> {
    let h = vs.h();
    let j = vs.j();
    let mut visited: u128 = 0;
    let mut block_optima: Vec<Vec<Vec<usize>>> = Vec::with_capacity(h);
    let mut total_partial = 0.0f64;

    for bh in 0..h {
        let table = block_table(vs, bounds, bh);
        let mut ties: TieCollector<Vec<usize>> = TieCollector::new();
        for c in 0..table.len {
            visited += 1;
            let contrib = &table.contribs[c * j..(c + 1) * j];
            let partial: f64 = contrib.iter().sum();
            ties.offer(partial, || table.counts[c * j..(c + 1) * j].to_vec());
        }
        let (partial, optima) = ties.finish();
        total_partial += partial;
        block_optima.push(optima);
    }

    // Cross product of the per-block optimal rows.
    let mut optima: Vec<Vec<Vec<usize>>> = alloc::vec![Vec::new()];
    for rows in &block_optima {
        let mut next = Vec::with_capacity(optima.len() * rows.len());
        for prefix in &optima {
            for row in rows {
                let mut combined = prefix.clone();
                combined.push(row.clone());
                next.push(combined);
            }
        }
        optima = next;
    }

    Ok(BlockOptimalSet {
        optima,
        value: vs.j() as f64 * total_partial,
        enumerated: visited,
        criterion: Criterion::A,
    })
}
