//! Delimited data files: pilot observations and potential-outcome
//! matrices. Comma- and tab-separated files are both accepted; the
//! delimiter is sniffed from the header line.

use std::collections::BTreeMap;
use std::path::Path;

use optalloc::{treatment_index, PotentialOutcomeMatrix};

use crate::CliError;

/// One pilot observation.
#[derive(Debug, Clone)]
pub struct PilotRow {
    pub block: Option<String>,
    pub replicate: Option<String>,
    /// 1-based treatment index.
    pub treatment: usize,
    pub outcome: f64,
}

/// Parsed pilot data file with columns (case-insensitive): optional
/// `unit_id`/`unit`/`id`, optional `block`, required `treatment`, required
/// `outcome`/`y`, optional `replicate`/`rep`.
#[derive(Debug)]
pub struct PilotData {
    pub rows: Vec<PilotRow>,
    /// Replicate labels in order of first appearance.
    pub replicates: Vec<String>,
    /// Block labels in order of first appearance.
    pub blocks: Vec<String>,
}

fn reader_for(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    let head = std::fs::read_to_string(path)
        .map_err(|e| CliError::Schema(format!("cannot read {}: {e}", path.display())))?;
    let delimiter = if head.lines().next().is_some_and(|l| l.contains('\t')) {
        b'\t'
    } else {
        b','
    };
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

/// Treatment codes: a 1-based integer index, or (for K >= 2) a K-character
/// 0/1 level string such as "011".
pub fn parse_treatment(token: &str, k: u32) -> Result<usize, CliError> {
    let j = 1usize << k;
    let is_bits =
        k >= 2 && token.len() == k as usize && token.bytes().all(|b| b == b'0' || b == b'1');
    let index = if is_bits {
        let levels: Vec<u8> = token.bytes().map(|b| b - b'0').collect();
        treatment_index(&levels)
    } else {
        token
            .parse::<usize>()
            .map_err(|_| CliError::Schema(format!("unknown treatment code {token:?}")))?
    };
    if index == 0 || index > j {
        return Err(CliError::Schema(format!(
            "treatment {token:?} outside 1..={j} for K = {k}"
        )));
    }
    Ok(index)
}

impl PilotData {
    pub fn load(path: &Path, k: u32) -> Result<Self, CliError> {
        let mut reader = reader_for(path)?;
        let headers = reader
            .headers()
            .map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?
            .clone();
        let col = |names: &[&str]| -> Option<usize> {
            headers
                .iter()
                .position(|h| names.contains(&h.to_ascii_lowercase().as_str()))
        };
        let treatment_col = col(&["treatment"]).ok_or_else(|| {
            CliError::Schema(format!("{}: missing `treatment` column", path.display()))
        })?;
        let outcome_col = col(&["outcome", "y"]).ok_or_else(|| {
            CliError::Schema(format!("{}: missing `outcome` column", path.display()))
        })?;
        let block_col = col(&["block"]);
        let replicate_col = col(&["replicate", "rep"]);

        let mut rows = Vec::new();
        let mut replicates: Vec<String> = Vec::new();
        let mut blocks: Vec<String> = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record =
                record.map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
            let get = |i: usize| record.get(i).unwrap_or("").to_string();
            let treatment = parse_treatment(&get(treatment_col), k)?;
            let outcome: f64 = get(outcome_col).parse().map_err(|_| {
                CliError::Schema(format!(
                    "{} line {}: outcome {:?} is not a number",
                    path.display(),
                    line + 2,
                    get(outcome_col)
                ))
            })?;
            let block = block_col.map(&get).filter(|s| !s.is_empty());
            let replicate = replicate_col.map(&get).filter(|s| !s.is_empty());
            if let Some(b) = &block {
                if !blocks.contains(b) {
                    blocks.push(b.clone());
                }
            }
            if let Some(r) = &replicate {
                if !replicates.contains(r) {
                    replicates.push(r.clone());
                }
            }
            rows.push(PilotRow {
                block,
                replicate,
                treatment,
                outcome,
            });
        }
        if rows.is_empty() {
            return Err(CliError::Schema(format!("{}: no data rows", path.display())));
        }
        // Labels are all-or-nothing; silently dropping unlabeled rows
        // would corrupt the grouped summaries.
        if !replicates.is_empty() && rows.iter().any(|r| r.replicate.is_none()) {
            return Err(CliError::Schema(format!(
                "{}: some rows are missing a replicate label",
                path.display()
            )));
        }
        if !blocks.is_empty() && rows.iter().any(|r| r.block.is_none()) {
            return Err(CliError::Schema(format!(
                "{}: some rows are missing a block label",
                path.display()
            )));
        }
        Ok(Self {
            rows,
            replicates,
            blocks,
        })
    }

    /// Observations grouped by replicate (all rows under one empty label
    /// when the file has no replicate column).
    pub fn by_replicate(&self) -> BTreeMap<String, Vec<(usize, f64)>> {
        let mut out: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
        for row in &self.rows {
            out.entry(row.replicate.clone().unwrap_or_default())
                .or_default()
                .push((row.treatment, row.outcome));
        }
        out
    }

    pub fn all_observations(&self) -> Vec<(usize, f64)> {
        self.rows.iter().map(|r| (r.treatment, r.outcome)).collect()
    }
}

/// Potential-outcome matrix file: one row per unit, an optional `block`
/// column, and J outcome columns in treatment order.
pub fn load_po_matrix(path: &Path) -> Result<PotentialOutcomeMatrix, CliError> {
    let mut reader = reader_for(path)?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?
        .clone();
    let block_col = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("block"));
    let outcome_cols: Vec<usize> = (0..headers.len()).filter(|i| Some(*i) != block_col).collect();
    if !outcome_cols.len().is_power_of_two() || outcome_cols.len() < 2 {
        return Err(CliError::Schema(format!(
            "{}: {} outcome columns; expected a power of two (J = 2^K)",
            path.display(),
            outcome_cols.len()
        )));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut block_order: Vec<String> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
        let mut row = Vec::with_capacity(outcome_cols.len());
        for &i in &outcome_cols {
            let token = record.get(i).unwrap_or("");
            row.push(token.parse::<f64>().map_err(|_| {
                CliError::Schema(format!(
                    "{} line {}: outcome {token:?} is not a number",
                    path.display(),
                    line + 2
                ))
            })?);
        }
        rows.push(row);
        if let Some(bc) = block_col {
            let label = record.get(bc).unwrap_or("").to_string();
            let idx = match block_order.iter().position(|b| *b == label) {
                Some(i) => i,
                None => {
                    block_order.push(label);
                    block_order.len() - 1
                }
            };
            labels.push(idx);
        }
    }
    let blocks = block_col.map(|_| labels);
    PotentialOutcomeMatrix::new(rows, blocks).map_err(CliError::from)
}
