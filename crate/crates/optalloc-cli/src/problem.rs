//! Problem specification files: TOML documents describing the design, the
//! variance guesses and the optional costs, bounds and fixed allocation.
//!
//! ```toml
//! criterion = "A"
//! variances = [1.0, 2.0, 3.0, 4.0]      # or per block: [[...], [...]]
//!
//! [design]
//! k = 2
//! n = 100                                # CRD; block designs list blocks
//! # [[design.blocks]]
//! # name = "female"
//! # size = 948
//!
//! [costs]                                # cost-constrained problems
//! per_unit = [0.1, 4.0, 4.0, 9.0]
//! budget = 100.0
//!
//! [bounds]                               # optional per-arm or per-cell
//! lower = [2, 2, 2, 2]
//! upper = [50, 50, 50, 50]
//!
//! [allocation]                           # optional, used by `simulate`
//! counts = [25, 25, 25, 25]
//! ```

use serde::Deserialize;

use optalloc::greedy::BlockBounds;
use optalloc::{BlockVarianceSpec, Criterion, VarianceSpec};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub criterion: String,
    pub tolerance: Option<f64>,
    pub variances: Option<Numbers>,
    pub design: DesignSection,
    pub costs: Option<CostsSection>,
    pub bounds: Option<BoundsSection>,
    pub allocation: Option<AllocationSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub k: u32,
    pub n: Option<usize>,
    pub blocks: Option<Vec<BlockDef>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockDef {
    pub name: Option<String>,
    pub size: usize,
}

/// A flat list (CRD) or one row per block.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum Numbers {
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum Counts {
    Flat(Vec<usize>),
    Rows(Vec<Vec<usize>>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsSection {
    pub per_unit: Vec<f64>,
    pub budget: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub lower: Option<Counts>,
    pub upper: Option<Counts>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationSection {
    pub counts: Counts,
}

impl ProblemFile {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Schema(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
    }

    pub fn criterion(&self, override_flag: Option<Criterion>) -> Result<Criterion, CliError> {
        match override_flag {
            Some(c) => Ok(c),
            None => self
                .criterion
                .parse()
                .map_err(|e: optalloc::Error| CliError::Schema(e.to_string())),
        }
    }

    pub fn k(&self) -> u32 {
        self.design.k
    }

    pub fn j(&self) -> usize {
        1usize << self.design.k
    }

    /// Flat variances, validated for a CRD/cost problem.
    pub fn crd_variances(&self) -> Result<VarianceSpec, CliError> {
        match &self.variances {
            Some(Numbers::Flat(values)) => {
                if values.len() != self.j() {
                    return Err(CliError::Schema(format!(
                        "variances must have length 2^K = {}, got {}",
                        self.j(),
                        values.len()
                    )));
                }
                VarianceSpec::new(values.clone()).map_err(CliError::from)
            }
            Some(Numbers::Rows(_)) => Err(CliError::Schema(
                "this command needs a flat variance list, not per-block rows".into(),
            )),
            None => Err(CliError::Schema("the spec file is missing `variances`".into())),
        }
    }

    pub fn block_sizes(&self) -> Result<Vec<usize>, CliError> {
        let blocks = self.design.blocks.as_ref().ok_or_else(|| {
            CliError::Schema("this command needs [[design.blocks]] entries".into())
        })?;
        if blocks.is_empty() {
            return Err(CliError::Schema("at least one block is required".into()));
        }
        Ok(blocks.iter().map(|b| b.size).collect())
    }

    pub fn block_names(&self) -> Vec<String> {
        self.design
            .blocks
            .as_ref()
            .map(|blocks| {
                blocks
                    .iter()
                    .enumerate()
                    .map(|(h, b)| b.name.clone().unwrap_or_else(|| format!("{}", h + 1)))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Per-block variance matrix, validated against the block list.
    pub fn block_variances(&self) -> Result<BlockVarianceSpec, CliError> {
        let sizes = self.block_sizes()?;
        let rows = match &self.variances {
            Some(Numbers::Rows(rows)) => rows.clone(),
            Some(Numbers::Flat(_)) => {
                return Err(CliError::Schema(
                    "block designs need one variance row per block ([[...], [...]])".into(),
                ))
            }
            None => return Err(CliError::Schema("the spec file is missing `variances`".into())),
        };
        if rows.len() != sizes.len() {
            return Err(CliError::Schema(format!(
                "{} variance rows for {} blocks",
                rows.len(),
                sizes.len()
            )));
        }
        if rows.iter().any(|r| r.len() != self.j()) {
            return Err(CliError::Schema(format!(
                "every variance row must have length 2^K = {}",
                self.j()
            )));
        }
        BlockVarianceSpec::new(rows, sizes).map_err(CliError::from)
    }

    pub fn crd_n(&self) -> Result<usize, CliError> {
        match (self.design.n, &self.design.blocks) {
            (Some(n), None) => Ok(n),
            (_, Some(_)) => Err(CliError::Schema(
                "this command needs `design.n`; block specs go to `alloc block`".into(),
            )),
            (None, None) => Err(CliError::Schema("the spec file is missing `design.n`".into())),
        }
    }

    /// Flat bounds for a CRD problem, with the conventional defaults (2, N).
    pub fn crd_bounds(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>), CliError> {
        let j = self.j();
        let mut lower = vec![2usize; j];
        let mut upper = vec![n; j];
        if let Some(b) = &self.bounds {
            if let Some(l) = &b.lower {
                lower = flat_counts(l, j, "bounds.lower")?;
            }
            if let Some(u) = &b.upper {
                upper = flat_counts(u, j, "bounds.upper")?;
            }
        }
        Ok((lower, upper))
    }

    /// Per-cell bounds for a block problem; flat lists broadcast to every
    /// block.
    pub fn block_bounds(&self, sizes: &[usize]) -> Result<BlockBounds, CliError> {
        let j = self.j();
        let mut bounds = BlockBounds::defaults(sizes, j);
        if let Some(b) = &self.bounds {
            if let Some(l) = &b.lower {
                bounds.lower = cell_counts(l, sizes.len(), j, "bounds.lower")?;
            }
            if let Some(u) = &b.upper {
                bounds.upper = cell_counts(u, sizes.len(), j, "bounds.upper")?;
            }
        }
        Ok(bounds)
    }

    pub fn cost_spec(&self) -> Result<optalloc::CostSpec, CliError> {
        let costs = self
            .costs
            .as_ref()
            .ok_or_else(|| CliError::Schema("the spec file is missing a [costs] section".into()))?;
        if costs.per_unit.len() != self.j() {
            return Err(CliError::Schema(format!(
                "costs.per_unit must have length 2^K = {}, got {}",
                self.j(),
                costs.per_unit.len()
            )));
        }
        optalloc::CostSpec::new(costs.per_unit.clone(), costs.budget).map_err(CliError::from)
    }

    /// The explicit `[allocation]` section as per-block rows (single row
    /// for CRD), if present.
    pub fn fixed_allocation(&self) -> Result<Option<Vec<Vec<usize>>>, CliError> {
        match &self.allocation {
            None => Ok(None),
            Some(a) => {
                let rows = match &a.counts {
                    Counts::Flat(row) => vec![row.clone()],
                    Counts::Rows(rows) => rows.clone(),
                };
                if rows.iter().any(|r| r.len() != self.j()) {
                    return Err(CliError::Schema(format!(
                        "allocation rows must have length 2^K = {}",
                        self.j()
                    )));
                }
                Ok(Some(rows))
            }
        }
    }
}

fn flat_counts(c: &Counts, j: usize, what: &str) -> Result<Vec<usize>, CliError> {
    match c {
        Counts::Flat(values) if values.len() == j => Ok(values.clone()),
        Counts::Flat(values) => Err(CliError::Schema(format!(
            "{what} must have length 2^K = {j}, got {}",
            values.len()
        ))),
        Counts::Rows(_) => Err(CliError::Schema(format!(
            "{what}: per-cell rows only apply to block designs"
        ))),
    }
}

fn cell_counts(c: &Counts, h: usize, j: usize, what: &str) -> Result<Vec<Vec<usize>>, CliError> {
    match c {
        Counts::Flat(values) if values.len() == j => Ok(vec![values.clone(); h]),
        Counts::Rows(rows) if rows.len() == h && rows.iter().all(|r| r.len() == j) => {
            Ok(rows.clone())
        }
        _ => Err(CliError::Schema(format!(
            "{what} must be a flat length-{j} list or {h} rows of length {j}"
        ))),
    }
}
