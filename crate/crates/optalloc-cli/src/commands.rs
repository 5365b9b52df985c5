//! Subcommand implementations. Every command produces both a fixed-format
//! text report and a JSON document; `main` picks one.

use serde_json::json;

use optalloc::conditions::{check_block_variances, check_potential_outcomes, check_variances};
use optalloc::criterion::value_from_ratios;
use optalloc::exact::{exact_block, exact_cost, exact_crd};
use optalloc::greedy::{greedy_block, greedy_crd, BlockBounds};
use optalloc::oracle::{enumerate_block, enumerate_crd, DEFAULT_ENUMERATION_CAP};
use optalloc::sim::{monte_carlo, monte_carlo_block};
use optalloc::variance::{pool_variances, sample_group_summary, GroupSummary};
use optalloc::{ConditionReport, Criterion, DesignSpec};

use crate::data::{load_po_matrix, PilotData};
use crate::problem::ProblemFile;
use crate::report::{
    bits_label, conditions_line, effect_label, fmt_share, fmt_units, fmt_value, json_value,
    matrix_lines,
};
use crate::{CliError, Mode};

pub struct Rendered {
    pub text: String,
    pub json: serde_json::Value,
}

fn warnings_json(warnings: &[optalloc::exact::Warning]) -> serde_json::Value {
    json!(warnings.iter().map(|w| w.to_string()).collect::<Vec<_>>())
}

fn push_warnings(text: &mut String, warnings: &[optalloc::exact::Warning]) {
    for w in warnings {
        text.push_str(&format!("warning: {w}\n"));
    }
}

fn base_json(
    command: &str,
    mode: Option<Mode>,
    criterion: Criterion,
    file: &ProblemFile,
    conditions: &ConditionReport,
) -> serde_json::Value {
    let mut doc = json!({
        "schema": "optalloc/v1",
        "command": command,
        "criterion": criterion.to_string(),
        "k": file.k(),
        "conditions": conditions,
    });
    if let Some(mode) = mode {
        doc["mode"] = json!(mode.as_str());
    }
    doc
}

pub fn cmd_crd(
    file: &ProblemFile,
    mode: Mode,
    criterion_flag: Option<Criterion>,
    tol_flag: Option<f64>,
    cap_flag: Option<u128>,
) -> Result<Rendered, CliError> {
    let criterion = file.criterion(criterion_flag)?;
    let tol = tol_flag
        .or(file.tolerance)
        .unwrap_or(optalloc::DEFAULT_CONDITION_TOL);
    let vs = file.crd_variances()?;
    let n = file.crd_n()?;
    let conditions = check_variances(&vs, tol);

    let mut text = format!(
        "command: crd\nmode: {}\ncriterion: {criterion}\ndesign: K={}, J={}, N={n}\n{}\n",
        mode.as_str(),
        file.k(),
        file.j(),
        conditions_line(&conditions)
    );
    let mut doc = base_json("crd", Some(mode), criterion, file, &conditions);
    doc["n"] = json!(n);

    match mode {
        Mode::Exact => {
            let alloc = exact_crd(&vs, criterion)?;
            let units: Vec<f64> = alloc.proportions.iter().map(|p| p * n as f64).collect();
            let ratios: Vec<f64> = vs
                .values()
                .iter()
                .zip(&units)
                .map(|(&s2, &u)| if u > 0.0 { s2 / u } else { f64::INFINITY })
                .collect();
            let value = value_from_ratios(&ratios, criterion).unwrap_or(f64::INFINITY);

            text.push_str("treatment  levels  share   units\n");
            for (t, (&p, &u)) in alloc.proportions.iter().zip(&units).enumerate() {
                text.push_str(&format!(
                    "{:<11}{:<8}{:<8}{}\n",
                    t + 1,
                    bits_label(t + 1, file.k()),
                    fmt_share(p),
                    fmt_units(u)
                ));
            }
            text.push_str(&format!("criterion value: {}\n", fmt_value(value)));
            push_warnings(&mut text, &alloc.warnings);
            doc["result"] = json!({
                "allocation": alloc,
                "units": units,
                "value": json_value(value),
            });
            doc["warnings"] = warnings_json(&alloc.warnings);
        }
        Mode::Greedy => {
            let (lower, upper) = file.crd_bounds(n)?;
            let spec = DesignSpec::with_bounds(file.k(), n, criterion, lower, upper)?;
            let alloc = greedy_crd(&vs, &spec)?;
            text.push_str("treatment  levels  units\n");
            for (t, &c) in alloc.counts.iter().enumerate() {
                text.push_str(&format!(
                    "{:<11}{:<8}{c}\n",
                    t + 1,
                    bits_label(t + 1, file.k())
                ));
            }
            text.push_str(&format!(
                "criterion value: {}\niterations: {}\nsaturated arms: {}\n",
                fmt_value(alloc.criterion_value),
                alloc.iterations,
                fmt_list(&alloc.saturated)
            ));
            push_warnings(&mut text, &alloc.warnings);
            doc["warnings"] = warnings_json(&alloc.warnings);
            doc["result"] = json!({ "allocation": alloc });
        }
        Mode::Oracle => {
            let (lower, upper) = file.crd_bounds(n)?;
            let spec = DesignSpec::with_bounds(file.k(), n, criterion, lower, upper)?;
            let set = enumerate_crd(&vs, &spec, cap_flag.unwrap_or(DEFAULT_ENUMERATION_CAP))?;
            text.push_str(&format!(
                "feasible points: {}\noptimal value: {}\noptima: {}\n",
                set.enumerated,
                fmt_value(set.value),
                set.optima.len()
            ));
            for (i, counts) in set.optima.iter().enumerate() {
                text.push_str(&format!("optimum {}: {}\n", i + 1, fmt_counts(counts)));
            }
            doc["result"] = json!({ "set": set });
        }
    }
    doc["tolerance"] = json!(tol);
    Ok(Rendered { text, json: doc })
}

pub fn cmd_block(
    file: &ProblemFile,
    mode: Mode,
    criterion_flag: Option<Criterion>,
    tol_flag: Option<f64>,
    cap_flag: Option<u128>,
) -> Result<Rendered, CliError> {
    let criterion = file.criterion(criterion_flag)?;
    let tol = tol_flag
        .or(file.tolerance)
        .unwrap_or(optalloc::DEFAULT_CONDITION_TOL);
    let vs = file.block_variances()?;
    let names = file.block_names();
    let conditions = check_block_variances(&vs, tol);

    let mut text = format!(
        "command: block\nmode: {}\ncriterion: {criterion}\ndesign: K={}, J={}, N={}\nblocks: {}\n{}\n",
        mode.as_str(),
        file.k(),
        file.j(),
        vs.n(),
        names
            .iter()
            .zip(vs.sizes())
            .map(|(name, m)| format!("{name}={m}"))
            .collect::<Vec<_>>()
            .join(", "),
        conditions_line(&conditions)
    );
    let mut doc = base_json("block", Some(mode), criterion, file, &conditions);
    doc["blocks"] = json!(names
        .iter()
        .zip(vs.sizes())
        .map(|(name, m)| json!({"name": name, "size": m}))
        .collect::<Vec<_>>());

    match mode {
        Mode::Exact => {
            let alloc = exact_block(&vs, criterion, tol)?;
            text.push_str("block  treatment  levels  share   units\n");
            for (h, row) in alloc.proportions.iter().enumerate() {
                for (t, &p) in row.iter().enumerate() {
                    text.push_str(&format!(
                        "{:<7}{:<11}{:<8}{:<8}{}\n",
                        h + 1,
                        t + 1,
                        bits_label(t + 1, file.k()),
                        fmt_share(p),
                        fmt_units(p * vs.sizes()[h] as f64)
                    ));
                }
            }
            if !alloc.conditions_used.is_empty() {
                text.push_str(&format!(
                    "valid under: {}\n",
                    alloc
                        .conditions_used
                        .iter()
                        .map(|c| c.to_string())
                        .collect::<Vec<_>>()
                        .join(", ")
                ));
            }
            push_warnings(&mut text, &alloc.warnings);
            doc["warnings"] = warnings_json(&alloc.warnings);
            doc["result"] = json!({ "allocation": alloc });
        }
        Mode::Greedy => {
            let bounds = file.block_bounds(vs.sizes())?;
            let alloc = greedy_block(&vs, &bounds, criterion)?;
            text.push_str("block  treatment  levels  units\n");
            for (h, row) in alloc.counts.iter().enumerate() {
                for (t, &c) in row.iter().enumerate() {
                    text.push_str(&format!(
                        "{:<7}{:<11}{:<8}{c}\n",
                        h + 1,
                        t + 1,
                        bits_label(t + 1, file.k())
                    ));
                }
            }
            text.push_str(&format!(
                "criterion value: {}\niterations: {}\nsaturated cells: {}\n",
                fmt_value(alloc.criterion_value),
                alloc.iterations,
                fmt_pairs(&alloc.saturated)
            ));
            push_warnings(&mut text, &alloc.warnings);
            doc["warnings"] = warnings_json(&alloc.warnings);
            doc["result"] = json!({ "allocation": alloc });
        }
        Mode::Oracle => {
            let bounds = file.block_bounds(vs.sizes())?;
            let set = enumerate_block(
                &vs,
                &bounds,
                criterion,
                cap_flag.unwrap_or(DEFAULT_ENUMERATION_CAP),
            )?;
            text.push_str(&format!(
                "feasible points: {}\noptimal value: {}\noptima: {}\n",
                set.enumerated,
                fmt_value(set.value),
                set.optima.len()
            ));
            for (i, rows) in set.optima.iter().enumerate() {
                text.push_str(&format!("optimum {}:\n", i + 1));
                for (h, row) in rows.iter().enumerate() {
                    text.push_str(&format!("  block {}: {}\n", h + 1, fmt_counts(row)));
                }
            }
            doc["result"] = json!({ "set": set });
        }
    }
    doc["tolerance"] = json!(tol);
    Ok(Rendered { text, json: doc })
}

pub fn cmd_cost(
    file: &ProblemFile,
    mode: Mode,
    criterion_flag: Option<Criterion>,
    tol_flag: Option<f64>,
) -> Result<Rendered, CliError> {
    if mode != Mode::Exact {
        return Err(CliError::Schema(format!(
            "cost allocation is closed-form only; `--mode {}` is not supported",
            mode.as_str()
        )));
    }
    let criterion = file.criterion(criterion_flag)?;
    let tol = tol_flag
        .or(file.tolerance)
        .unwrap_or(optalloc::DEFAULT_CONDITION_TOL);
    let vs = file.crd_variances()?;
    let cost = file.cost_spec()?;
    let conditions = check_variances(&vs, tol);

    let alloc = exact_cost(&vs, &cost, criterion)?;
    let mut text = format!(
        "command: cost\nmode: exact\ncriterion: {criterion}\ndesign: K={}, J={}, budget={}\n{}\n",
        file.k(),
        file.j(),
        cost.budget(),
        conditions_line(&conditions)
    );
    text.push_str("treatment  levels  share   cost/unit  units\n");
    for (t, (&pi, &c)) in alloc
        .budget_shares
        .iter()
        .zip(cost.costs())
        .enumerate()
    {
        text.push_str(&format!(
            "{:<11}{:<8}{:<8}{:<11}{}\n",
            t + 1,
            bits_label(t + 1, file.k()),
            fmt_share(pi),
            c,
            alloc.integer_counts[t]
        ));
    }
    text.push_str(&format!("spent: {:.2} of {:.2}\n", alloc.spent, cost.budget()));
    push_warnings(&mut text, &alloc.warnings);

    let mut doc = base_json("cost", Some(Mode::Exact), criterion, file, &conditions);
    doc["budget"] = json!(cost.budget());
    doc["warnings"] = warnings_json(&alloc.warnings);
    doc["result"] = json!({ "allocation": alloc });
    doc["tolerance"] = json!(tol);
    Ok(Rendered { text, json: doc })
}

pub fn cmd_estimate(
    data_path: &std::path::Path,
    k: u32,
    pool: bool,
) -> Result<Rendered, CliError> {
    let data = PilotData::load(data_path, k)?;
    let j = 1usize << k;

    // Per-replicate summaries in order of first appearance; a file with no
    // replicate column is one unlabeled replicate.
    let grouped = data.by_replicate();
    let order: Vec<String> = if data.replicates.is_empty() {
        vec![String::new()]
    } else {
        data.replicates.clone()
    };
    let mut summaries: Vec<(String, GroupSummary)> = Vec::new();
    for label in &order {
        let obs = grouped.get(label).ok_or_else(|| {
            CliError::Schema(format!("replicate {label:?} has no observations"))
        })?;
        summaries.push((label.clone(), sample_group_summary(obs, j)?));
    }

    let pooled = if pool {
        let all: Vec<GroupSummary> = summaries.iter().map(|(_, s)| s.clone()).collect();
        Some(pool_variances(&all)?)
    } else {
        None
    };

    // Per-block summaries when the file labels blocks, ready to paste into
    // a block spec's variance rows.
    let mut block_summaries: Vec<(String, GroupSummary)> = Vec::new();
    for label in &data.blocks {
        let obs: Vec<(usize, f64)> = data
            .rows
            .iter()
            .filter(|r| r.block.as_deref() == Some(label))
            .map(|r| (r.treatment, r.outcome))
            .collect();
        block_summaries.push((label.clone(), sample_group_summary(&obs, j)?));
    }
    let effects = optalloc::contrast::estimate_effects(&data.all_observations(), k)?;

    let mut text = format!(
        "command: estimate\nk: {k}, treatments: {j}\nobservations: {} in {} replicate(s)\n",
        data.rows.len(),
        order.len()
    );
    for (label, summary) in &summaries {
        let name = if label.is_empty() { "all data" } else { label };
        text.push_str(&format!("replicate {name}:\n"));
        text.push_str("  treatment  levels  n     mean      variance\n");
        for t in 0..j {
            text.push_str(&format!(
                "  {:<11}{:<8}{:<6}{:<10.4}{:.4}\n",
                t + 1,
                bits_label(t + 1, k),
                summary.counts[t],
                summary.means[t],
                summary.variances[t]
            ));
        }
    }
    if let Some(p) = &pooled {
        text.push_str("pooled variances (df-weighted):\n  ");
        text.push_str(
            &p.iter()
                .map(|v| format!("{v:.4}"))
                .collect::<Vec<_>>()
                .join(" "),
        );
        text.push('\n');
    }
    for (label, summary) in &block_summaries {
        text.push_str(&format!("block {label} variances:\n  "));
        text.push_str(
            &summary
                .variances
                .iter()
                .map(|v| format!("{v:.4}"))
                .collect::<Vec<_>>()
                .join(" "),
        );
        text.push('\n');
    }
    text.push_str("effect estimates:\n");
    for (c, v) in effects.values.iter().enumerate() {
        text.push_str(&format!("  {:<10}{:+.6}\n", effect_label(c, k), v));
    }

    let doc = json!({
        "schema": "optalloc/v1",
        "command": "estimate",
        "k": k,
        "replicates": summaries
            .iter()
            .map(|(label, s)| json!({"label": label, "summary": s}))
            .collect::<Vec<_>>(),
        "pooled": pooled,
        "blocks": block_summaries
            .iter()
            .map(|(label, s)| json!({"label": label, "summary": s}))
            .collect::<Vec<_>>(),
        "effects": effects,
    });
    Ok(Rendered { text, json: doc })
}

pub fn cmd_simulate(
    file: &ProblemFile,
    po_path: &std::path::Path,
    replicates: u64,
    seed: u64,
) -> Result<Rendered, CliError> {
    let po = load_po_matrix(po_path)?;
    if po.k() != file.k() {
        return Err(CliError::Schema(format!(
            "outcome file has K = {} but the spec says K = {}",
            po.k(),
            file.k()
        )));
    }
    if let Some(blocks) = &file.design.blocks {
        let sizes = po.block_sizes();
        let spec_sizes: Vec<usize> = blocks.iter().map(|b| b.size).collect();
        if sizes != spec_sizes {
            return Err(CliError::Schema(format!(
                "block sizes disagree: outcome file {sizes:?}, spec {spec_sizes:?}"
            )));
        }
    }
    let criterion = file.criterion(None)?;
    let tol = file.tolerance.unwrap_or(optalloc::DEFAULT_CONDITION_TOL);
    let blocked = po.block_labels().is_some();

    // Allocation: the spec file's fixed [allocation] when present, else
    // the greedy allocation computed from the outcome variances.
    let (counts, source) = match file.fixed_allocation()? {
        Some(rows) => (rows, "spec file".to_string()),
        None => {
            let source = format!("greedy {criterion} from outcome variances");
            if blocked {
                let bvs = po.block_variances()?;
                let bounds = BlockBounds::defaults(bvs.sizes(), bvs.j());
                (greedy_block(&bvs, &bounds, criterion)?.counts, source)
            } else {
                let vs = po.column_variances()?;
                let spec = DesignSpec::new(po.k(), po.n(), criterion)?;
                (vec![greedy_crd(&vs, &spec)?.counts], source)
            }
        }
    };

    let report = if blocked {
        if counts.len() != po.n_blocks() {
            return Err(CliError::Schema(format!(
                "allocation has {} rows for {} blocks",
                counts.len(),
                po.n_blocks()
            )));
        }
        monte_carlo_block(&po, &counts, replicates, seed)?
    } else {
        if counts.len() != 1 {
            return Err(CliError::Schema(
                "the outcome file has no block column but the allocation has several rows".into(),
            ));
        }
        monte_carlo(&po, &counts[0], replicates, seed)?
    };
    let conditions = check_potential_outcomes(&po, tol)?;
    let additive = conditions.strictly_additive == Some(true);

    // Verdicts: PSD of the heterogeneity term and 4-standard-error
    // unbiasedness of the Monte-Carlo mean.
    let min_eig = report.heterogeneity_min_eigenvalue();
    let psd = min_eig >= -1e-9;
    let mean = report.empirical_mean.as_ref().expect("replicates >= 1");
    let cov = report.empirical_cov.as_ref();
    let mut max_z = 0.0f64;
    for (t, (&m, &tau)) in mean.iter().zip(&report.population_effects).enumerate() {
        let var = cov.map_or(0.0, |c| c.get(t, t));
        let se = (var / replicates as f64).sqrt();
        let z = if se > 0.0 {
            (m - tau).abs() / se
        } else if (m - tau).abs() <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        max_z = max_z.max(z);
    }
    let unbiased = max_z <= 4.0;

    let mut text = format!(
        "command: simulate\ndesign: K={}, J={}, N={}, blocks={}\nallocation ({source}):\n",
        po.k(),
        po.j(),
        po.n(),
        if blocked {
            po.n_blocks().to_string()
        } else {
            "none".to_string()
        }
    );
    for (h, row) in counts.iter().enumerate() {
        if blocked {
            text.push_str(&format!("  block {}: {}\n", h + 1, fmt_counts(row)));
        } else {
            text.push_str(&format!("  {}\n", fmt_counts(row)));
        }
    }
    text.push_str(&format!(
        "rng: {}\nseed: {seed}\nreplicates: {replicates}\n{}\n",
        report.rng,
        conditions_line(&conditions)
    ));
    if additive {
        text.push_str(
            "strictly additive: yes (effect components of the heterogeneity term are zero)\n",
        );
    } else {
        text.push_str("strictly additive: no\n");
    }
    text.push_str("population effects:\n");
    for (c, v) in report.population_effects.iter().enumerate() {
        text.push_str(&format!("  {:<10}{:+.6}\n", effect_label(c, po.k()), v));
    }
    text.push_str("exact first term:\n");
    text.push_str(&matrix_lines(&report.exact_first_term, "  "));
    text.push_str("heterogeneity term:\n");
    text.push_str(&matrix_lines(&report.heterogeneity_term, "  "));
    text.push_str(&format!(
        "heterogeneity min eigenvalue: {min_eig:.6e} -> PSD: {}\n",
        if psd { "yes" } else { "no" }
    ));
    text.push_str("exact covariance:\n");
    text.push_str(&matrix_lines(&report.exact_cov, "  "));
    text.push_str("empirical mean (vs population effects):\n");
    for (c, (&m, &tau)) in mean.iter().zip(&report.population_effects).enumerate() {
        text.push_str(&format!(
            "  {:<10}{m:+.6}  (exact {tau:+.6})\n",
            effect_label(c, po.k())
        ));
    }
    text.push_str(&format!(
        "unbiasedness: max |mean - tau| = {max_z:.3} SE -> within 4 SE: {}\n",
        if unbiased { "yes" } else { "no" }
    ));
    if let Some(c) = cov {
        text.push_str("empirical covariance:\n");
        text.push_str(&matrix_lines(c, "  "));
        let gap = c.sub(&report.exact_cov).max_abs();
        text.push_str(&format!("max |empirical - exact| entry: {gap:.6e}\n"));
    }

    let doc = json!({
        "schema": "optalloc/v1",
        "command": "simulate",
        "k": po.k(),
        "n": po.n(),
        "blocked": blocked,
        "allocation": counts,
        "allocation_source": source,
        "seed": seed,
        "replicates": replicates,
        "conditions": conditions,
        "report": report,
        "verdicts": {
            "heterogeneity_min_eigenvalue": json_value(min_eig),
            "psd": psd,
            "max_abs_z": json_value(max_z),
            "unbiased_within_4se": unbiased,
            "strictly_additive": additive,
        },
    });
    Ok(Rendered { text, json: doc })
}

fn fmt_counts(counts: &[usize]) -> String {
    counts
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn fmt_list(items: &[usize]) -> String {
    if items.is_empty() {
        "none".to_string()
    } else {
        items
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

fn fmt_pairs(items: &[(usize, usize)]) -> String {
    if items.is_empty() {
        "none".to_string()
    } else {
        items
            .iter()
            .map(|(h, t)| format!("({h},{t})"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}
