//! Declarative descriptions of nonlinearities, forcings and complete problem
//! instances for all problem families.

use crate::error::{ResonanceError, Result};
use crate::spectral::{adaptive_simpson, Domain, ModeLabel, SpectralBasis};
use serde::Serialize;

/// Built-in pointwise maps. The registry is closed so that evaluations stay
/// pure and reproducible without an expression interpreter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseFn {
    /// arctan u
    Arctan,
    /// tanh u
    Tanh,
    /// u e^{-u^2}
    BoundedGaussian,
    /// 1/(1+u^2)
    Rational,
}

impl BaseFn {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            BaseFn::Arctan => u.atan(),
            BaseFn::Tanh => u.tanh(),
            BaseFn::BoundedGaussian => u * (-u * u).exp(),
            BaseFn::Rational => 1.0 / (1.0 + u * u),
        }
    }

    pub fn from_name(name: &str) -> Option<BaseFn> {
        match name {
            "arctan" => Some(BaseFn::Arctan),
            "tanh" => Some(BaseFn::Tanh),
            "bounded_gaussian" => Some(BaseFn::BoundedGaussian),
            "rational" => Some(BaseFn::Rational),
            _ => None,
        }
    }
}

/// Which solution component a one-argument map reads in a system setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgSelect {
    U,
    V,
}

/// Threshold quadruple (c, d, C, D) with c < d and C < D:
/// g(u) > D for u > d, g(u) < C for u < c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub c: f64,
    pub d: f64,
    pub c_cap: f64,
    pub d_cap: f64,
}

/// A pointwise nonlinearity with declared analytic metadata. Limits and
/// thresholds are declared, never computed: no finite procedure certifies a
/// limit, so validation only spot-checks consistency.
#[derive(Debug, Clone, Serialize)]
pub struct Nonlinearity {
    pub base: BaseFn,
    /// Output scale: g(u) = scale * base(rate * u).
    pub scale: f64,
    /// Input rate.
    pub rate: f64,
    pub arg: ArgSelect,
    pub declared_bound: f64,
    pub limits: Option<(f64, f64)>,
    pub thresholds: Option<Thresholds>,
    pub antiderivative_limits: Option<(f64, f64)>,
    pub sign_property: bool,
}

impl Nonlinearity {
    pub fn new(base: BaseFn) -> Nonlinearity {
        let (bound, limits, sign) = match base {
            BaseFn::Arctan => (
                std::f64::consts::FRAC_PI_2,
                Some((-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2)),
                true,
            ),
            BaseFn::Tanh => (1.0, Some((-1.0, 1.0)), true),
            BaseFn::BoundedGaussian => (1.0 / (2.0_f64 * std::f64::consts::E).sqrt(), Some((0.0, 0.0)), true),
            BaseFn::Rational => (1.0, Some((0.0, 0.0)), false),
        };
        Nonlinearity {
            base,
            scale: 1.0,
            rate: 1.0,
            arg: ArgSelect::U,
            declared_bound: bound,
            limits,
            thresholds: None,
            antiderivative_limits: match base {
                // G(u) = int_0^u 1/(1+t^2) dt = arctan u
                BaseFn::Rational => Some((
                    -std::f64::consts::FRAC_PI_2,
                    std::f64::consts::FRAC_PI_2,
                )),
                _ => None,
            },
            sign_property: sign,
        }
    }

    pub fn with_thresholds(mut self, c: f64, d: f64, c_cap: f64, d_cap: f64) -> Nonlinearity {
        self.thresholds = Some(Thresholds { c, d, c_cap, d_cap });
        self
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.scale * self.base.eval(self.rate * u)
    }

    /// Evaluate in a system context, selecting the declared argument.
    pub fn eval2(&self, u: f64, v: f64) -> f64 {
        match self.arg {
            ArgSelect::U => self.eval(u),
            ArgSelect::V => self.eval(v),
        }
    }

    /// Structural invariants of the declared metadata.
    pub fn check_declarations(&self) -> Result<()> {
        if let Some(t) = &self.thresholds {
            if t.c >= t.d {
                return Err(ResonanceError::Spec(
                    "thresholds.c must be < thresholds.d".into(),
                ));
            }
            if t.c_cap >= t.d_cap {
                return Err(ResonanceError::Spec(
                    "thresholds.C must be < thresholds.D".into(),
                ));
            }
        }
        if let Some((lo, hi)) = self.limits {
            if lo > hi {
                return Err(ResonanceError::Spec(
                    "limits: g(-inf) must be <= g(+inf)".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Status of one declared property after numeric spot-checking.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyCheck {
    pub property: String,
    pub consistent: bool,
    /// Sample point at which the declaration failed, if any.
    pub violated_at: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<PropertyCheck>,
    pub all_consistent: bool,
}

/// Spot-check declared metadata by sampling u in [-R, R] plus the endpoints
/// as limit proxies. Advisory: declared metadata is never overwritten.
pub fn validate_nonlinearity(
    desc: &Nonlinearity,
    sample_range: f64,
    samples: usize,
) -> Result<ValidationReport> {
    if sample_range <= 0.0 || samples < 16 {
        return Err(ResonanceError::Config(
            "validate_nonlinearity needs R > 0 and samples >= 16".into(),
        ));
    }
    let mut points = Vec::with_capacity(samples + 2);
    for i in 0..samples {
        points.push(-sample_range + 2.0 * sample_range * i as f64 / (samples - 1) as f64);
    }
    points.push(-sample_range);
    points.push(sample_range);
    for &u in &points {
        if !desc.eval(u).is_finite() {
            return Err(ResonanceError::Evaluation { node: 0 });
        }
    }

    let mut checks = Vec::new();

    let mut bound_violation = None;
    for &u in &points {
        if desc.eval(u).abs() > desc.declared_bound + 1e-12 {
            bound_violation = Some(u);
            break;
        }
    }
    checks.push(PropertyCheck {
        property: "declared_bound".into(),
        consistent: bound_violation.is_none(),
        violated_at: bound_violation,
        note: format!("|g| <= {}", desc.declared_bound),
    });

    if let Some((glo, ghi)) = desc.limits {
        let at_neg = desc.eval(-sample_range);
        let at_pos = desc.eval(sample_range);
        // Endpoint values should sit near the declared limits.
        let ok = (at_neg - glo).abs() <= 0.5 * (ghi - glo).abs() + 0.1
            && (at_pos - ghi).abs() <= 0.5 * (ghi - glo).abs() + 0.1;
        checks.push(PropertyCheck {
            property: "limits".into(),
            consistent: ok,
            violated_at: if ok { None } else { Some(sample_range) },
            note: format!(
                "g(-R)={at_neg:.6}, g(+R)={at_pos:.6} vs declared ({glo}, {ghi})"
            ),
        });
    }

    if let Some(t) = &desc.thresholds {
        let mut viol = None;
        for &u in &points {
            if u > t.d && desc.eval(u) <= t.d_cap {
                viol = Some(u);
                break;
            }
            if u < t.c && desc.eval(u) >= t.c_cap {
                viol = Some(u);
                break;
            }
        }
        checks.push(PropertyCheck {
            property: "thresholds".into(),
            consistent: viol.is_none(),
            violated_at: viol,
            note: format!(
                "g > {} for u > {}; g < {} for u < {}",
                t.d_cap, t.d, t.c_cap, t.c
            ),
        });
    }

    if desc.sign_property {
        let mut viol = None;
        for &u in &points {
            let g = desc.eval(u);
            // Exact zeros far out are underflow, not sign violations.
            if u != 0.0 && (u * g < 0.0 || (g == 0.0 && u.abs() < 20.0)) {
                viol = Some(u);
                break;
            }
        }
        checks.push(PropertyCheck {
            property: "sign_property".into(),
            consistent: viol.is_none(),
            violated_at: viol,
            note: "u g(u) > 0 for u != 0".into(),
        });
    }

    let all = checks.iter().all(|c| c.consistent);
    Ok(ValidationReport {
        checks,
        all_consistent: all,
    })
}

/// G(u) = int_0^u g(t) dt by adaptive quadrature, absolute error <= 1e-10.
pub fn primitive_eval(desc: &Nonlinearity, u: f64) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    let f = |t: f64| desc.eval(t);
    if u > 0.0 {
        adaptive_simpson(&f, 0.0, u, 1e-11)
    } else {
        -adaptive_simpson(&f, u, 0.0, 1e-11)
    }
}

/// A forcing given by coefficients in the problem's eigenbasis.
///
/// Interval and square coefficients are with respect to the normalized
/// eigenfunctions; circle coefficients are raw amplitudes of cos nt, sin nt
/// and the constant, matching the classical Fourier-number convention.
#[derive(Debug, Clone, Serialize)]
pub struct ForcingSpec {
    /// (mode label, amplitude) pairs with finite support.
    pub terms: Vec<(String, f64)>,
    pub description: String,
}

impl ForcingSpec {
    pub fn empty() -> ForcingSpec {
        ForcingSpec {
            terms: Vec::new(),
            description: String::new(),
        }
    }

    pub fn from_terms(terms: Vec<(String, f64)>) -> ForcingSpec {
        ForcingSpec {
            terms,
            description: String::new(),
        }
    }

    /// Resolve the labeled terms into normalized-basis coefficients.
    pub fn to_coeffs(&self, basis: &SpectralBasis) -> Result<Vec<f64>> {
        let mut coeffs = vec![0.0; basis.n_modes()];
        for (label, value) in &self.terms {
            let mi = basis
                .modes
                .iter()
                .position(|m| m.label.to_string() == *label)
                .ok_or_else(|| {
                    ResonanceError::Spec(format!(
                        "forcing mode '{label}' does not exist in a basis of {} modes",
                        basis.n_modes()
                    ))
                })?;
            // Raw circle amplitudes: a cos nt = a sqrt(pi) * (cos nt / sqrt(pi)).
            let scale = match basis.modes[mi].label {
                ModeLabel::Cos(_) | ModeLabel::Sin(_) => std::f64::consts::PI.sqrt(),
                ModeLabel::Constant => (2.0 * std::f64::consts::PI).sqrt(),
                _ => 1.0,
            };
            coeffs[mi] += value * scale;
        }
        Ok(coeffs)
    }
}

/// Problem family, following the canonical equations of each setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    ScalarResonant,
    ScalarMulti,
    PeriodicLl,
    PeriodicDamped,
    PeriodicFn,
    SystemLinear,
    SystemNonresonant,
    SystemCaseA,
    SystemCaseB,
    SystemCaseC,
}

impl Family {
    pub fn from_name(name: &str) -> Option<Family> {
        Some(match name {
            "scalar_resonant" => Family::ScalarResonant,
            "scalar_multi" => Family::ScalarMulti,
            "periodic_LL" | "periodic_ll" => Family::PeriodicLl,
            "periodic_damped" => Family::PeriodicDamped,
            "periodic_FN" | "periodic_fn" => Family::PeriodicFn,
            "system_linear" => Family::SystemLinear,
            "system_nonresonant" => Family::SystemNonresonant,
            "system_case_A" | "system_case_a" => Family::SystemCaseA,
            "system_case_B" | "system_case_b" => Family::SystemCaseB,
            "system_case_C" | "system_case_c" => Family::SystemCaseC,
            _ => return None,
        })
    }

    pub fn is_system(self) -> bool {
        matches!(
            self,
            Family::SystemLinear
                | Family::SystemNonresonant
                | Family::SystemCaseA
                | Family::SystemCaseB
                | Family::SystemCaseC
        )
    }

    pub fn is_periodic(self) -> bool {
        matches!(
            self,
            Family::PeriodicLl | Family::PeriodicDamped | Family::PeriodicFn
        )
    }
}

/// A complete problem instance.
#[derive(Debug, Clone, Serialize)]
pub struct ProblemSpec {
    pub family: Family,
    pub domain: Domain,
    pub n_modes: usize,
    /// Resonant group index (1-based, ascending eigenvalues) for interval and
    /// square families; the oscillator integer n for periodic families.
    pub resonant_index: usize,
    /// Second resonant index m for system case B.
    pub second_index: Option<usize>,
    /// Nonresonant shift mu for system case A.
    pub shift_mu: Option<f64>,
    /// Full coupling matrix (a, b, c, d) for system_linear / system_nonresonant.
    pub matrix: Option<[f64; 4]>,
    /// g for scalar and periodic families; f(u,v) for systems.
    pub nonlinearity_f: Option<Nonlinearity>,
    /// g(u,v) for systems.
    pub nonlinearity_g: Option<Nonlinearity>,
    /// f (scalar/periodic) or h (first system component).
    pub forcing_h: ForcingSpec,
    /// k (second system component).
    pub forcing_k: Option<ForcingSpec>,
}

impl ProblemSpec {
    /// Family-specific arity and index checks.
    pub fn validate(&self) -> Result<()> {
        use Family::*;
        if let Some(nl) = &self.nonlinearity_f {
            nl.check_declarations()?;
        }
        if let Some(nl) = &self.nonlinearity_g {
            nl.check_declarations()?;
        }
        match self.family {
            ScalarResonant | ScalarMulti => {
                if self.nonlinearity_f.is_none() {
                    return Err(ResonanceError::Spec(
                        "nonlinearity: scalar families require a nonlinearity".into(),
                    ));
                }
            }
            PeriodicLl | PeriodicDamped | PeriodicFn => {
                if self.domain.kind != crate::spectral::DomainKind::Circle {
                    return Err(ResonanceError::Spec(
                        "domain.kind: periodic families require the circle".into(),
                    ));
                }
                if self.nonlinearity_f.is_none() {
                    return Err(ResonanceError::Spec(
                        "nonlinearity: periodic families require a nonlinearity".into(),
                    ));
                }
            }
            SystemLinear => {
                if self.matrix.is_none() {
                    return Err(ResonanceError::Spec(
                        "matrix: system_linear requires the coupling matrix".into(),
                    ));
                }
            }
            SystemNonresonant => {
                if self.matrix.is_none() {
                    return Err(ResonanceError::Spec(
                        "matrix: system_nonresonant requires the coupling matrix".into(),
                    ));
                }
                if self.nonlinearity_f.is_none() || self.nonlinearity_g.is_none() {
                    return Err(ResonanceError::Spec(
                        "nonlinearity_f/nonlinearity_g: system families require both".into(),
                    ));
                }
            }
            SystemCaseA => {
                if self.shift_mu.is_none() {
                    return Err(ResonanceError::Spec(
                        "mu: system_case_A requires the nonresonant shift".into(),
                    ));
                }
                if self.nonlinearity_f.is_none() || self.nonlinearity_g.is_none() {
                    return Err(ResonanceError::Spec(
                        "nonlinearity_f/nonlinearity_g: system families require both".into(),
                    ));
                }
            }
            SystemCaseB => {
                if self.second_index.is_none() {
                    return Err(ResonanceError::Spec(
                        "m: system_case_B requires the second resonant index".into(),
                    ));
                }
                if self.nonlinearity_f.is_none() || self.nonlinearity_g.is_none() {
                    return Err(ResonanceError::Spec(
                        "nonlinearity_f/nonlinearity_g: system families require both".into(),
                    ));
                }
            }
            SystemCaseC => {
                if self.nonlinearity_f.is_none() || self.nonlinearity_g.is_none() {
                    return Err(ResonanceError::Spec(
                        "nonlinearity_f/nonlinearity_g: system families require both".into(),
                    ));
                }
            }
        }
        if self.family.is_system() && self.family != Family::SystemLinear
            && self.forcing_k.is_none()
        {
            // system_linear may default k to zero as well; keep it optional there
        }
        if self.resonant_index < 1 {
            return Err(ResonanceError::Spec(
                "k: resonant index must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Build the basis declared by this problem.
    pub fn build_basis(&self) -> Result<SpectralBasis> {
        crate::spectral::build_basis(self.domain, self.n_modes)
    }

    /// Resonant group index (0-based) in the built basis.
    pub fn resonant_group(&self, basis: &SpectralBasis) -> Result<usize> {
        match self.domain.kind {
            crate::spectral::DomainKind::Circle => {
                let n = self.resonant_index;
                basis.group_at((n * n) as f64).ok_or_else(|| {
                    ResonanceError::Spec(format!(
                        "n: oscillator integer {n} has no eigenvalue group in the basis"
                    ))
                })
            }
            _ => {
                basis.group(self.resonant_index)?;
                Ok(self.resonant_index - 1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn arctan_metadata_consistent() {
        let g = Nonlinearity::new(BaseFn::Arctan);
        let report = validate_nonlinearity(&g, 50.0, 256).unwrap();
        assert!(report.all_consistent, "{report:?}");
    }

    #[test]
    fn tanh_thresholds_consistent() {
        let g = Nonlinearity::new(BaseFn::Tanh).with_thresholds(-1.5, 1.5, -0.9, 0.9);
        assert!((1.5_f64).tanh() > 0.9);
        let report = validate_nonlinearity(&g, 20.0, 256).unwrap();
        assert!(report.all_consistent);
    }

    #[test]
    fn bounded_gaussian_flags_understated_bound() {
        // max of u e^{-u^2} is 1/sqrt(2e) ~ 0.4289 at u = 1/sqrt(2).
        let mut g = Nonlinearity::new(BaseFn::BoundedGaussian);
        g.declared_bound = 0.3;
        let report = validate_nonlinearity(&g, 5.0, 4096).unwrap();
        let bound = report
            .checks
            .iter()
            .find(|c| c.property == "declared_bound")
            .unwrap();
        assert!(!bound.consistent);
        let at = bound.violated_at.unwrap();
        assert!(g.eval(at).abs() > 0.3, "violation witness g({at}) too small");
        let sign = report
            .checks
            .iter()
            .find(|c| c.property == "sign_property")
            .unwrap();
        assert!(sign.consistent);
    }

    #[test]
    fn primitive_of_rational_is_arctan() {
        let g = Nonlinearity::new(BaseFn::Rational);
        assert_abs_diff_eq!(
            primitive_eval(&g, 1.0),
            std::f64::consts::FRAC_PI_4,
            epsilon = 1e-10
        );
        assert_eq!(primitive_eval(&g, 0.0), 0.0);
    }

    #[test]
    fn primitive_of_tanh_is_ln_cosh() {
        let g = Nonlinearity::new(BaseFn::Tanh);
        assert_abs_diff_eq!(
            primitive_eval(&g, 2.0),
            (2.0_f64.cosh()).ln(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn primitive_is_additive() {
        let g = Nonlinearity::new(BaseFn::Arctan);
        let (a, b) = (0.7, 1.9);
        let direct = primitive_eval(&g, a + b);
        let split =
            primitive_eval(&g, a) + adaptive_simpson(&|t| g.eval(t), a, a + b, 1e-11);
        assert_abs_diff_eq!(direct, split, epsilon = 2e-10);
    }

    #[test]
    fn threshold_ordering_enforced() {
        let g = Nonlinearity::new(BaseFn::Tanh).with_thresholds(-1.0, 1.0, 0.9, -0.9);
        assert!(g.check_declarations().is_err());
    }
}
