//! Problem-spec ingestion: a flat, sectioned TOML format with a closed
//! registry of nonlinearities, plus a deterministic echo for round-trips.

use crate::engine::{Accel, SolveOptions};
use crate::error::{ResonanceError, Result};
use crate::problem::{
    ArgSelect, BaseFn, Family, ForcingSpec, Nonlinearity, ProblemSpec, Thresholds,
};
use crate::spectral::{Domain, DomainKind};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    problem: RawProblem,
    domain: RawDomain,
    matrix: Option<RawMatrix>,
    nonlinearity: Option<RawNonlinearity>,
    nonlinearity_f: Option<RawNonlinearity>,
    nonlinearity_g: Option<RawNonlinearity>,
    forcing: Option<RawForcing>,
    forcing_h: Option<RawForcing>,
    forcing_k: Option<RawForcing>,
    solve: Option<RawSolve>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    family: String,
    resonant_index: usize,
    second_index: Option<usize>,
    mu: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    kind: String,
    grid_size: usize,
    modes: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatrix {
    rows: [[f64; 2]; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNonlinearity {
    base: String,
    scale: Option<f64>,
    rate: Option<f64>,
    arg: Option<String>,
    bound: Option<f64>,
    limits: Option<[f64; 2]>,
    thresholds: Option<RawThresholds>,
    antiderivative_limits: Option<[f64; 2]>,
    sign_property: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThresholds {
    c: f64,
    d: f64,
    #[serde(rename = "C")]
    c_cap: f64,
    #[serde(rename = "D")]
    d_cap: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForcing {
    description: Option<String>,
    coeffs: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSolve {
    tol: Option<f64>,
    max_iter: Option<usize>,
    relax: Option<f64>,
    accel: Option<String>,
    gate: Option<bool>,
}

fn convert_nonlinearity(section: &str, raw: &RawNonlinearity) -> Result<Nonlinearity> {
    let base = BaseFn::from_name(&raw.base).ok_or_else(|| {
        ResonanceError::Spec(format!(
            "{section}.base: unknown nonlinearity {:?}; registry is arctan, tanh, bounded_gaussian, rational",
            raw.base
        ))
    })?;
    let mut nl = Nonlinearity::new(base);
    if let Some(s) = raw.scale {
        nl.scale = s;
        // Declared analytic metadata scales with the output.
        nl.declared_bound *= s.abs();
        nl.limits = nl.limits.map(|(a, b)| {
            if s >= 0.0 {
                (s * a, s * b)
            } else {
                (s * b, s * a)
            }
        });
    }
    if let Some(r) = raw.rate {
        if r <= 0.0 {
            return Err(ResonanceError::Spec(format!(
                "{section}.rate must be > 0"
            )));
        }
        nl.rate = r;
    }
    match raw.arg.as_deref() {
        None | Some("u") => {}
        Some("v") => nl.arg = ArgSelect::V,
        Some(other) => {
            return Err(ResonanceError::Spec(format!(
                "{section}.arg must be \"u\" or \"v\", got {other:?}"
            )))
        }
    }
    if let Some(b) = raw.bound {
        nl.declared_bound = b;
    }
    if let Some([lo, hi]) = raw.limits {
        nl.limits = Some((lo, hi));
    }
    if let Some(t) = &raw.thresholds {
        nl.thresholds = Some(Thresholds {
            c: t.c,
            d: t.d,
            c_cap: t.c_cap,
            d_cap: t.d_cap,
        });
    }
    if let Some([lo, hi]) = raw.antiderivative_limits {
        nl.antiderivative_limits = Some((lo, hi));
    }
    if let Some(s) = raw.sign_property {
        nl.sign_property = s;
    }
    nl.check_declarations()
        .map_err(|e| ResonanceError::Spec(format!("{section}: {e}")))?;
    Ok(nl)
}

fn convert_forcing(raw: &RawForcing) -> ForcingSpec {
    let mut terms: Vec<(String, f64)> = raw
        .coeffs
        .iter()
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    terms.sort_by(|a, b| a.0.cmp(&b.0));
    let mut f = ForcingSpec::from_terms(terms);
    if let Some(d) = &raw.description {
        f.description = d.clone();
    }
    f
}

/// Parse a spec document. Validation errors name the offending section/key.
pub fn parse_spec(text: &str) -> Result<(ProblemSpec, SolveOptions)> {
    let raw: RawSpec = toml::from_str(text)
        .map_err(|e| ResonanceError::Spec(format!("parse error: {e}")))?;

    let family = Family::from_name(&raw.problem.family).ok_or_else(|| {
        ResonanceError::Spec(format!(
            "problem.family: unknown family {:?}",
            raw.problem.family
        ))
    })?;
    let kind = match raw.domain.kind.as_str() {
        "interval" => DomainKind::Interval,
        "square" => DomainKind::Square,
        "circle" => DomainKind::Circle,
        other => {
            return Err(ResonanceError::Spec(format!(
                "domain.kind must be interval, square or circle, got {other:?}"
            )))
        }
    };
    if family.is_periodic() && kind != DomainKind::Circle {
        return Err(ResonanceError::Spec(
            "domain.kind: periodic families require the circle".into(),
        ));
    }

    if raw.nonlinearity.is_some() && (raw.nonlinearity_f.is_some() || raw.nonlinearity_g.is_some())
    {
        return Err(ResonanceError::Spec(
            "use either [nonlinearity] or [nonlinearity_f]/[nonlinearity_g], not both".into(),
        ));
    }
    if raw.forcing.is_some() && (raw.forcing_h.is_some() || raw.forcing_k.is_some()) {
        return Err(ResonanceError::Spec(
            "use either [forcing] or [forcing_h]/[forcing_k], not both".into(),
        ));
    }

    let nonlinearity_f = match (&raw.nonlinearity, &raw.nonlinearity_f) {
        (Some(n), _) => Some(convert_nonlinearity("nonlinearity", n)?),
        (_, Some(n)) => Some(convert_nonlinearity("nonlinearity_f", n)?),
        _ => None,
    };
    let nonlinearity_g = match &raw.nonlinearity_g {
        Some(n) => Some(convert_nonlinearity("nonlinearity_g", n)?),
        None => None,
    };
    let forcing_h = match (&raw.forcing, &raw.forcing_h) {
        (Some(f), _) => convert_forcing(f),
        (_, Some(f)) => convert_forcing(f),
        _ => ForcingSpec::empty(),
    };
    let forcing_k = raw.forcing_k.as_ref().map(convert_forcing);

    let problem = ProblemSpec {
        family,
        domain: Domain::new(kind, raw.domain.grid_size),
        n_modes: raw.domain.modes,
        resonant_index: raw.problem.resonant_index,
        second_index: raw.problem.second_index,
        shift_mu: raw.problem.mu,
        matrix: raw.matrix.as_ref().map(|m| {
            [m.rows[0][0], m.rows[0][1], m.rows[1][0], m.rows[1][1]]
        }),
        nonlinearity_f,
        nonlinearity_g,
        forcing_h,
        forcing_k,
    };
    problem.validate()?;
    // The basis must actually build (oversampling, index range).
    let basis = problem.build_basis()?;
    problem.resonant_group(&basis)?;
    problem.forcing_h.to_coeffs(&basis).map_err(|e| {
        ResonanceError::Spec(format!("forcing: {e}"))
    })?;
    if let Some(fk) = &problem.forcing_k {
        fk.to_coeffs(&basis)
            .map_err(|e| ResonanceError::Spec(format!("forcing_k: {e}")))?;
    }

    let mut opts = SolveOptions::default();
    if let Some(s) = &raw.solve {
        if let Some(t) = s.tol {
            opts.tol = t;
        }
        if let Some(m) = s.max_iter {
            opts.max_iter = m;
        }
        if let Some(r) = s.relax {
            opts.relax = r;
        }
        match s.accel.as_deref() {
            None | Some("none") => {}
            Some("anderson") => opts.accel = Accel::Anderson { depth: 5 },
            Some(other) => {
                return Err(ResonanceError::Spec(format!(
                    "solve.accel must be \"anderson\" or \"none\", got {other:?}"
                )))
            }
        }
        if let Some(g) = s.gate {
            opts.gate = g;
        }
    }
    opts.validate()
        .map_err(|e| ResonanceError::Spec(format!("solve: {e}")))?;
    Ok((problem, opts))
}

/// Load and validate a spec file.
pub fn load_spec(path: &Path) -> Result<(ProblemSpec, SolveOptions)> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ResonanceError::Spec(format!("cannot read {}: {e}", path.display()))
    })?;
    parse_spec(&text)
}

pub fn family_name(family: Family) -> &'static str {
    match family {
        Family::ScalarResonant => "scalar_resonant",
        Family::ScalarMulti => "scalar_multi",
        Family::PeriodicLl => "periodic_LL",
        Family::PeriodicDamped => "periodic_damped",
        Family::PeriodicFn => "periodic_FN",
        Family::SystemLinear => "system_linear",
        Family::SystemNonresonant => "system_nonresonant",
        Family::SystemCaseA => "system_case_A",
        Family::SystemCaseB => "system_case_B",
        Family::SystemCaseC => "system_case_C",
    }
}

fn base_name(base: BaseFn) -> &'static str {
    match base {
        BaseFn::Arctan => "arctan",
        BaseFn::Tanh => "tanh",
        BaseFn::BoundedGaussian => "bounded_gaussian",
        BaseFn::Rational => "rational",
    }
}

fn domain_name(kind: DomainKind) -> &'static str {
    match kind {
        DomainKind::Interval => "interval",
        DomainKind::Square => "square",
        DomainKind::Circle => "circle",
    }
}

fn echo_nonlinearity(out: &mut String, section: &str, nl: &Nonlinearity) {
    let _ = writeln!(out, "[{section}]");
    let _ = writeln!(out, "base = \"{}\"", base_name(nl.base));
    let _ = writeln!(out, "scale = {:?}", nl.scale);
    let _ = writeln!(out, "rate = {:?}", nl.rate);
    let _ = writeln!(
        out,
        "arg = \"{}\"",
        match nl.arg {
            ArgSelect::U => "u",
            ArgSelect::V => "v",
        }
    );
    let _ = writeln!(out, "bound = {:?}", nl.declared_bound);
    if let Some((lo, hi)) = nl.limits {
        let _ = writeln!(out, "limits = [{lo:?}, {hi:?}]");
    }
    if let Some(t) = &nl.thresholds {
        let _ = writeln!(
            out,
            "thresholds = {{ c = {:?}, d = {:?}, C = {:?}, D = {:?} }}",
            t.c, t.d, t.c_cap, t.d_cap
        );
    }
    if let Some((lo, hi)) = nl.antiderivative_limits {
        let _ = writeln!(out, "antiderivative_limits = [{lo:?}, {hi:?}]");
    }
    let _ = writeln!(out, "sign_property = {}", nl.sign_property);
    let _ = writeln!(out);
}

fn echo_forcing(out: &mut String, section: &str, f: &ForcingSpec) {
    let _ = writeln!(out, "[{section}]");
    if !f.description.is_empty() {
        let _ = writeln!(out, "description = {:?}", f.description);
    }
    let _ = writeln!(out, "[{section}.coeffs]");
    let mut terms = f.terms.clone();
    terms.sort_by(|a, b| a.0.cmp(&b.0));
    for (label, value) in terms {
        let _ = writeln!(out, "\"{label}\" = {value:?}");
    }
    let _ = writeln!(out);
}

/// Deterministic TOML echo of a loaded spec; `parse_spec` of the echo
/// reproduces an equal problem.
pub fn echo_spec(problem: &ProblemSpec, opts: &SolveOptions) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[problem]");
    let _ = writeln!(out, "family = \"{}\"", family_name(problem.family));
    let _ = writeln!(out, "resonant_index = {}", problem.resonant_index);
    if let Some(m) = problem.second_index {
        let _ = writeln!(out, "second_index = {m}");
    }
    if let Some(mu) = problem.shift_mu {
        let _ = writeln!(out, "mu = {mu:?}");
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "[domain]");
    let _ = writeln!(out, "kind = \"{}\"", domain_name(problem.domain.kind));
    let _ = writeln!(out, "grid_size = {}", problem.domain.grid_size);
    let _ = writeln!(out, "modes = {}", problem.n_modes);
    let _ = writeln!(out);
    if let Some(m) = problem.matrix {
        let _ = writeln!(out, "[matrix]");
        let _ = writeln!(
            out,
            "rows = [[{:?}, {:?}], [{:?}, {:?}]]",
            m[0], m[1], m[2], m[3]
        );
        let _ = writeln!(out);
    }
    if let Some(nl) = &problem.nonlinearity_f {
        let section = if problem.nonlinearity_g.is_some() {
            "nonlinearity_f"
        } else {
            "nonlinearity"
        };
        echo_nonlinearity(&mut out, section, nl);
    }
    if let Some(nl) = &problem.nonlinearity_g {
        echo_nonlinearity(&mut out, "nonlinearity_g", nl);
    }
    let section = if problem.forcing_k.is_some() {
        "forcing_h"
    } else {
        "forcing"
    };
    echo_forcing(&mut out, section, &problem.forcing_h);
    if let Some(fk) = &problem.forcing_k {
        echo_forcing(&mut out, "forcing_k", fk);
    }
    let _ = writeln!(out, "[solve]");
    let _ = writeln!(out, "tol = {:?}", opts.tol);
    let _ = writeln!(out, "max_iter = {}", opts.max_iter);
    let _ = writeln!(out, "relax = {:?}", opts.relax);
    let _ = writeln!(
        out,
        "accel = \"{}\"",
        match opts.accel {
            Accel::None => "none",
            Accel::Anderson { .. } => "anderson",
        }
    );
    let _ = writeln!(out, "gate = {}", opts.gate);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[problem]
family = "scalar_resonant"
resonant_index = 1

[domain]
kind = "interval"
grid_size = 64
modes = 16

[nonlinearity]
base = "arctan"
thresholds = { c = -1.5, d = 1.5, C = -0.9, D = 0.9 }

[forcing]
coeffs = { "1" = 0.5 }
"#;

    #[test]
    fn minimal_scalar_spec_loads() {
        let (p, opts) = parse_spec(MINIMAL).unwrap();
        assert_eq!(p.family, Family::ScalarResonant);
        assert_eq!(p.n_modes, 16);
        assert_eq!(opts.max_iter, 500);
        let t = p.nonlinearity_f.unwrap().thresholds.unwrap();
        assert_eq!(t.d_cap, 0.9);
    }

    #[test]
    fn threshold_ordering_error_names_key() {
        let bad = MINIMAL.replace("C = -0.9, D = 0.9", "C = 0.9, D = -0.9");
        let err = parse_spec(&bad).unwrap_err().to_string();
        assert!(
            err.contains("thresholds.C must be < thresholds.D"),
            "{err}"
        );
    }

    #[test]
    fn unknown_key_is_rejected() {
        let bad = MINIMAL.replace("modes = 16", "modes = 16\nbogus = 3");
        assert!(parse_spec(&bad).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let (p, opts) = parse_spec(MINIMAL).unwrap();
        let echo = echo_spec(&p, &opts);
        let (p2, opts2) = parse_spec(&echo).unwrap();
        let a = serde_json::to_string(&p).unwrap();
        let b = serde_json::to_string(&p2).unwrap();
        assert_eq!(a, b);
        assert_eq!(opts.tol, opts2.tol);
        let echo2 = echo_spec(&p2, &opts2);
        assert_eq!(echo, echo2);
    }

    #[test]
    fn system_spec_with_matrix_loads() {
        let text = r#"
[problem]
family = "system_nonresonant"
resonant_index = 1

[domain]
kind = "interval"
grid_size = 64
modes = 16

[matrix]
rows = [[2.0, 1.0], [-1.0, 4.0]]

[nonlinearity_f]
base = "arctan"

[nonlinearity_g]
base = "tanh"
arg = "v"

[forcing_h]
coeffs = { "1" = 1.0 }

[forcing_k]
coeffs = { "2" = 0.5 }
"#;
        let (p, _) = parse_spec(text).unwrap();
        assert_eq!(p.matrix, Some([2.0, 1.0, -1.0, 4.0]));
        let form = crate::systems::canonical_reduce(
            &crate::systems::CouplingMatrix::from_rows(p.matrix.unwrap()),
        )
        .unwrap();
        assert_eq!(
            form.kind,
            crate::systems::CanonicalKind::Jordan { lambda: 3.0 }
        );
    }
}
