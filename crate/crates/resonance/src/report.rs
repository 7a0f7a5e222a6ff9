//! Bit-stable report emission: JSON documents with a fixed field order and
//! 17-significant-digit floats, plus plot-ready CSV tables.

use crate::engine::{SolveReport, SolveStatus};
use crate::error::{ResonanceError, Result};
use crate::solvability::{ConditionId, ConditionReport, Verdict};
use crate::spectral::{DomainKind, SpectralBasis};
use std::fmt::Write as _;
use std::path::Path;

pub const SCHEMA_VERSION: &str = "1";

/// 17 significant digits: enough for an exact f64 round-trip, bit-stable
/// across runs. Non-finite values map to null (JSON has no NaN).
pub fn fmt_float(x: f64) -> String {
    if !x.is_finite() {
        return "null".into();
    }
    format!("{x:.16e}")
}

fn json_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub fn condition_id_name(id: ConditionId) -> &'static str {
    match id {
        ConditionId::LlInterval => "LL_interval",
        ConditionId::Williams => "williams",
        ConditionId::LazerLeach => "lazer_leach",
        ConditionId::KormanLi => "korman_li",
        ConditionId::FnSign => "FN_sign",
        ConditionId::SystemA => "system_A",
        ConditionId::SystemB => "system_B",
        ConditionId::SystemC => "system_C",
    }
}

pub fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Holds => "holds",
        Verdict::Fails => "fails",
        Verdict::Boundary => "boundary",
    }
}

pub fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIter => "max_iter",
        SolveStatus::Diverged => "diverged",
        SolveStatus::ConditionViolated => "condition_violated",
    }
}

fn push_notes(out: &mut String, notes: &[String]) {
    out.push('[');
    for (i, n) in notes.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&json_string(n));
    }
    out.push(']');
}

fn condition_body(out: &mut String, c: &ConditionReport) {
    out.push('{');
    let _ = write!(
        out,
        "\"condition_id\":{},",
        json_string(condition_id_name(c.condition_id))
    );
    out.push_str("\"quantities\":{");
    for (i, (name, value)) in c.quantities.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{}:{}", json_string(name), fmt_float(*value));
    }
    out.push_str("},");
    let _ = write!(out, "\"margin\":{},", fmt_float(c.margin));
    let _ = write!(out, "\"verdict\":{},", json_string(verdict_name(c.verdict)));
    out.push_str("\"witness\":");
    match &c.witness {
        None => out.push_str("null"),
        Some(w) => {
            out.push('[');
            for (i, x) in w.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&fmt_float(*x));
            }
            out.push(']');
        }
    }
    out.push_str(",\"notes\":");
    push_notes(out, &c.notes);
    out.push('}');
}

fn metadata(out: &mut String, quiet: bool) {
    if quiet {
        return;
    }
    // Timestamps live in a separate key so quiet runs stay byte-identical.
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let _ = write!(out, ",\"metadata\":{{\"unix_time\":{now}}}");
}

/// JSON document for a `check` run.
pub fn condition_json(c: &ConditionReport, quiet: bool) -> String {
    let mut out = String::new();
    let _ = write!(out, "{{\"schema_version\":{},", json_string(SCHEMA_VERSION));
    out.push_str("\"report\":");
    condition_body(&mut out, c);
    metadata(&mut out, quiet);
    out.push('}');
    out
}

/// JSON document for a `solve` or `verify` run.
pub fn solve_json(r: &SolveReport, quiet: bool) -> String {
    let mut out = String::new();
    let _ = write!(out, "{{\"schema_version\":{},", json_string(SCHEMA_VERSION));
    let _ = write!(out, "\"status\":{},", json_string(status_name(r.status)));
    let _ = write!(out, "\"residual_l2\":{},", fmt_float(r.residual_l2));
    let _ = write!(out, "\"residual_sup\":{},", fmt_float(r.residual_sup));
    let _ = write!(out, "\"iterations\":{},", r.iterations);
    out.push_str("\"condition\":");
    match &r.condition {
        None => out.push_str("null"),
        Some(c) => condition_body(&mut out, c),
    }
    out.push_str(",\"trace\":[");
    for (i, t) in r.trace.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{{\"iteration\":{},\"xi\":[", t.iteration);
        for (j, x) in t.xi.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&fmt_float(*x));
        }
        let _ = write!(
            out,
            "],\"delta_xi\":{},\"delta_u\":{},\"residual\":{}}}",
            fmt_float(t.delta_xi),
            fmt_float(t.delta_u),
            fmt_float(t.residual)
        );
    }
    out.push_str("],\"notes\":");
    push_notes(&mut out, &r.notes);
    metadata(&mut out, quiet);
    out.push('}');
    out
}

/// Solution CSV: coordinate columns per domain dimension, then one value
/// column per solution component.
pub fn solution_csv(basis: &SpectralBasis, fields: &[crate::spectral::Field]) -> String {
    let mut out = String::new();
    match basis.domain.kind {
        DomainKind::Interval => out.push_str("x"),
        DomainKind::Circle => out.push_str("t"),
        DomainKind::Square => out.push_str("x,y"),
    }
    for i in 0..fields.len() {
        let _ = write!(out, ",{}", if i == 0 { "u" } else { "v" });
    }
    out.push('\n');
    for node in 0..basis.grid_len() {
        let coords = basis.node_coords(node);
        for (i, c) in coords.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&fmt_float(*c));
        }
        for f in fields {
            let _ = write!(out, ",{}", fmt_float(f.samples[node]));
        }
        out.push('\n');
    }
    out
}

/// One sweep row: the gated check+solve outcome at one forcing amplitude.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub amplitude: f64,
    pub margin: f64,
    pub verdict: Verdict,
    pub status: SolveStatus,
    pub residual_l2: f64,
    pub iterations: usize,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("amplitude,margin,verdict,status,residual_l2,iterations\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_float(r.amplitude),
            fmt_float(r.margin),
            verdict_name(r.verdict),
            status_name(r.status),
            fmt_float(r.residual_l2),
            r.iterations
        );
    }
    out
}

pub fn sweep_json(rows: &[SweepRow], threshold: Option<f64>, quiet: bool) -> String {
    let mut out = String::new();
    let _ = write!(out, "{{\"schema_version\":{},", json_string(SCHEMA_VERSION));
    out.push_str("\"rows\":[");
    for (i, r) in rows.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(
            out,
            "{{\"amplitude\":{},\"margin\":{},\"verdict\":{},\"status\":{},\"residual_l2\":{},\"iterations\":{}}}",
            fmt_float(r.amplitude),
            fmt_float(r.margin),
            json_string(verdict_name(r.verdict)),
            json_string(status_name(r.status)),
            fmt_float(r.residual_l2),
            r.iterations
        );
    }
    out.push_str("],\"threshold\":");
    match threshold {
        Some(t) => out.push_str(&fmt_float(t)),
        None => out.push_str("null"),
    }
    metadata(&mut out, quiet);
    out.push('}');
    out
}

pub fn write_artifact(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| {
        ResonanceError::Spec(format!("cannot write {}: {e}", path.display()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for &x in &[
            std::f64::consts::PI,
            -1.0 / 3.0,
            1.4361906e0,
            f64::MIN_POSITIVE,
            1e300,
        ] {
            let s = fmt_float(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(fmt_float(f64::NAN), "null");
    }

    #[test]
    fn condition_json_is_valid_and_ordered() {
        let c = ConditionReport {
            condition_id: ConditionId::LazerLeach,
            quantities: vec![("A".into(), std::f64::consts::PI), ("B".into(), 0.0)],
            margin: std::f64::consts::PI,
            verdict: Verdict::Holds,
            witness: None,
            notes: vec!["note with \"quotes\"".into()],
        };
        let doc = condition_json(&c, true);
        let v: serde_json::Value = serde_json::from_str(&doc).unwrap();
        assert_eq!(v["schema_version"], "1");
        assert_eq!(v["report"]["condition_id"], "lazer_leach");
        assert_eq!(v["report"]["verdict"], "holds");
        // fixed order: condition_id precedes margin precedes verdict
        let ci = doc.find("condition_id").unwrap();
        let ma = doc.find("\"margin\"").unwrap();
        let ve = doc.find("\"verdict\"").unwrap();
        assert!(ci < ma && ma < ve);
        // quiet mode carries no metadata key
        assert!(!doc.contains("metadata"));
    }

    #[test]
    fn sweep_csv_has_header() {
        let rows = vec![SweepRow {
            amplitude: 1.0,
            margin: 0.5,
            verdict: Verdict::Holds,
            status: SolveStatus::Converged,
            residual_l2: 1e-9,
            iterations: 12,
        }];
        let csv = sweep_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "amplitude,margin,verdict,status,residual_l2,iterations"
        );
        assert_eq!(lines.count(), 1);
    }
}
