//! Rendering helpers shared by the subcommands: treatment labels, fixed
//! numeric formats (proportions to 3 decimals, counts as integers) and
//! matrix layout. JSON output carries full precision.

use optalloc::{ConditionReport, Mat};

/// Level string of a 1-based treatment, e.g. `"011"`.
pub fn bits_label(j: usize, k: u32) -> String {
    optalloc::treatment_levels(j, k)
        .iter()
        .map(|z| char::from(b'0' + z))
        .collect()
}

/// Label of contrast column `c`: the factor subset, `mean*2` for column 0.
pub fn effect_label(c: usize, k: u32) -> String {
    if c == 0 {
        return "mean*2".into();
    }
    let mut parts = Vec::new();
    for factor in 1..=k {
        if c >> (k - factor) & 1 == 1 {
            parts.push(format!("F{factor}"));
        }
    }
    parts.join(":")
}

pub fn fmt_share(p: f64) -> String {
    format!("{p:.3}")
}

/// Continuous unit counts print as integers when they are integral.
pub fn fmt_units(x: f64) -> String {
    if (x - x.round()).abs() < 5e-10 {
        format!("{}", x.round() as i64)
    } else {
        format!("{x:.3}")
    }
}

pub fn fmt_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "undefined".into()
    }
}

fn flag(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "yes",
        Some(false) => "no",
        None => "n/a",
    }
}

pub fn conditions_line(rep: &ConditionReport) -> String {
    format!(
        "conditions: homoscedastic={} additive={} wbh={} bbh={} (tol {:e})",
        flag(rep.homoscedastic),
        flag(rep.strictly_additive),
        flag(rep.within_block_homoscedastic),
        flag(rep.between_block_homoscedastic),
        rep.tol
    )
}

pub fn matrix_lines(m: &Mat, indent: &str) -> String {
    let mut out = String::new();
    for r in 0..m.rows() {
        out.push_str(indent);
        for c in 0..m.cols() {
            out.push_str(&format!("{:>14.6e}", m.get(r, c)));
        }
        out.push('\n');
    }
    out
}

/// Finite values only; JSON `null` instead of non-finite floats.
pub fn json_value(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::Value::Null
    }
}
