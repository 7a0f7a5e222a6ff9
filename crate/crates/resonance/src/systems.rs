//! 2x2 systems with a linear part at resonance: canonical reduction of the
//! coupling matrix, mode-wise linear block solvers with Fredholm selection,
//! and the nonresonant / resonant fixed-point solvers.

use crate::engine::{
    residual, SolveOptions, SolveReport, SolveStatus, TraceEntry, DIVERGENCE_BOUND,
    RESIDUAL_BLOWUP,
};
use crate::error::{ResonanceError, Result};
use crate::problem::{Family, Nonlinearity, ProblemSpec};
use crate::solvability::{check_condition, ConditionReport, Verdict};
use crate::spectral::{
    apply_pointwise2, resolvent_solve, synthesize, Field, SpectralBasis, GROUP_TOL,
    ORTHO_TOL_REL,
};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingMatrix {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl CouplingMatrix {
    pub fn from_rows(m: [f64; 4]) -> CouplingMatrix {
        CouplingMatrix {
            a: m[0],
            b: m[1],
            c: m[2],
            d: m[3],
        }
    }

    pub fn as_rows(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    fn max_abs(&self) -> f64 {
        self.a
            .abs()
            .max(self.b.abs())
            .max(self.c.abs())
            .max(self.d.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CanonicalKind {
    Diagonal { mu1: f64, mu2: f64 },
    Jordan { lambda: f64 },
}

impl CanonicalKind {
    pub fn eigenvalues(&self) -> (f64, f64) {
        match *self {
            CanonicalKind::Diagonal { mu1, mu2 } => (mu1, mu2),
            CanonicalKind::Jordan { lambda } => (lambda, lambda),
        }
    }

    /// The canonical matrix itself, row-major.
    pub fn matrix(&self) -> [f64; 4] {
        match *self {
            CanonicalKind::Diagonal { mu1, mu2 } => [mu1, 0.0, 0.0, mu2],
            CanonicalKind::Jordan { lambda } => [lambda, 1.0, 0.0, lambda],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CanonicalForm {
    pub kind: CanonicalKind,
    /// Change of variables (u, v) = Q (u1, v1), row-major.
    pub q: [f64; 4],
    pub q_inv: [f64; 4],
    /// Set for near-defective matrices resolved as diagonal.
    pub conditioning_warning: Option<String>,
}

impl CanonicalForm {
    /// Max-norm deviation of Q^{-1} A Q from the stated canonical matrix.
    pub fn reduction_error(&self, a: &CouplingMatrix) -> f64 {
        let prod = mat_mul(mat_mul(self.q_inv, a.as_rows()), self.q);
        let target = self.kind.matrix();
        (0..4).fold(0.0_f64, |m, i| m.max((prod[i] - target[i]).abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "case")]
pub enum SystemClass {
    Nonresonant,
    /// One eigenvalue equals lambda_k (1-based group index); the other, mu,
    /// misses the spectrum.
    CaseA { k: usize, mu: f64 },
    /// Both eigenvalues sit in the spectrum (possibly m = k, diagonalizable).
    CaseB { k: usize, m: usize },
    /// Jordan block at lambda_k.
    CaseC { k: usize },
}

fn mat_mul(x: [f64; 4], y: [f64; 4]) -> [f64; 4] {
    [
        x[0] * y[0] + x[1] * y[2],
        x[0] * y[1] + x[1] * y[3],
        x[2] * y[0] + x[3] * y[2],
        x[2] * y[1] + x[3] * y[3],
    ]
}

fn mat_inv(m: [f64; 4]) -> Result<[f64; 4]> {
    let det = m[0] * m[3] - m[1] * m[2];
    if det.abs() < 1e-300 {
        return Err(ResonanceError::Config(
            "change-of-variables matrix is singular".into(),
        ));
    }
    Ok([m[3] / det, -m[1] / det, -m[2] / det, m[0] / det])
}

fn mat_vec(m: [f64; 4], v: [f64; 2]) -> [f64; 2] {
    [m[0] * v[0] + m[1] * v[1], m[2] * v[0] + m[3] * v[1]]
}

/// Numerical rank decision threshold for (A - lambda I) at a double eigenvalue.
const DEFECT_TOL: f64 = 1e-8;

/// Reduce A to a real canonical form Q^{-1} A Q: diagonal when the eigenvalues
/// are distinct or A is (numerically) a multiple of the identity, the Jordan
/// block when the double eigenvalue is defective.
pub fn canonical_reduce(a: &CouplingMatrix) -> Result<CanonicalForm> {
    let scale = a.max_abs().max(1.0);
    let tr = a.a + a.d;
    let det = a.a * a.d - a.b * a.c;
    let disc = tr * tr - 4.0 * det;
    if disc < -DEFECT_TOL * scale * scale {
        return Err(ResonanceError::ComplexSpectrum { discriminant: disc });
    }
    let sq = disc.max(0.0).sqrt();
    let mu1 = 0.5 * (tr - sq);
    let mu2 = 0.5 * (tr + sq);

    if (mu2 - mu1).abs() > DEFECT_TOL * scale {
        // Distinct eigenvalues: columns of Q are eigenvectors.
        let q = [eigenvector(a, mu1), eigenvector(a, mu2)];
        let qm = [q[0][0], q[1][0], q[0][1], q[1][1]];
        let q_inv = mat_inv(qm)?;
        return Ok(CanonicalForm {
            kind: CanonicalKind::Diagonal { mu1, mu2 },
            q: qm,
            q_inv,
            conditioning_warning: None,
        });
    }

    // Double eigenvalue: decide defectiveness from the rank of N = A - lambda I.
    let lambda = 0.5 * tr;
    let n = [a.a - lambda, a.b, a.c, a.d - lambda];
    let n_norm = n.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if n_norm <= DEFECT_TOL * scale {
        let warning = if n_norm > 0.0 {
            Some(format!(
                "eigenvalue gap below {DEFECT_TOL:e} with |A - lambda I| = {n_norm:e}: resolved as diagonal; conditioning is delicate"
            ))
        } else {
            None
        };
        return Ok(CanonicalForm {
            kind: CanonicalKind::Diagonal {
                mu1: lambda,
                mu2: lambda,
            },
            q: [1.0, 0.0, 0.0, 1.0],
            q_inv: [1.0, 0.0, 0.0, 1.0],
            conditioning_warning: warning,
        });
    }
    // Defective: pick a generalized vector w with v = N w != 0, then
    // A [v w] = [v w] [[lambda, 1], [0, lambda]].
    let w = if n[0].abs().max(n[2].abs()) >= n[1].abs().max(n[3].abs()) {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    let v = mat_vec(n, w);
    // Common scaling keeps the superdiagonal exactly 1.
    let s = 1.0 / v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let qm = [v[0] * s, w[0] * s, v[1] * s, w[1] * s];
    let q_inv = mat_inv(qm)?;
    Ok(CanonicalForm {
        kind: CanonicalKind::Jordan { lambda },
        q: qm,
        q_inv,
        conditioning_warning: None,
    })
}

fn eigenvector(a: &CouplingMatrix, mu: f64) -> [f64; 2] {
    // A nonzero row of A - mu I is normal to the eigenvector.
    let r1 = [a.a - mu, a.b];
    let r2 = [a.c, a.d - mu];
    let pick = |r: [f64; 2]| -> [f64; 2] {
        let n = (r[0] * r[0] + r[1] * r[1]).sqrt();
        [r[1] / n, -r[0] / n]
    };
    let n1 = (r1[0] * r1[0] + r1[1] * r1[1]).sqrt();
    let n2 = (r2[0] * r2[0] + r2[1] * r2[1]).sqrt();
    if n1 >= n2 && n1 > 0.0 {
        pick(r1)
    } else if n2 > 0.0 {
        pick(r2)
    } else {
        [1.0, 0.0] // A = mu I: anything is an eigenvector
    }
}

/// Match the canonical eigenvalues against the basis spectrum. Resonant
/// matches at a multiple eigenvalue are unsupported and error out.
pub fn classify_system(form: &CanonicalForm, basis: &SpectralBasis) -> Result<SystemClass> {
    let simple_group = |value: f64| -> Result<Option<usize>> {
        match basis.group_at(value) {
            None => Ok(None),
            Some(gi) => {
                let mult = basis.groups[gi].members.len();
                if mult != 1 {
                    return Err(ResonanceError::Multiplicity {
                        group: gi,
                        multiplicity: mult,
                    });
                }
                Ok(Some(gi + 1))
            }
        }
    };
    match form.kind {
        CanonicalKind::Jordan { lambda } => Ok(match simple_group(lambda)? {
            Some(k) => SystemClass::CaseC { k },
            None => SystemClass::Nonresonant,
        }),
        CanonicalKind::Diagonal { mu1, mu2 } => {
            let g1 = simple_group(mu1)?;
            let g2 = simple_group(mu2)?;
            Ok(match (g1, g2) {
                (None, None) => SystemClass::Nonresonant,
                (Some(k), None) => SystemClass::CaseA { k, mu: mu2 },
                (None, Some(k)) => SystemClass::CaseA { k, mu: mu1 },
                (Some(k), Some(m)) => SystemClass::CaseB { k, m },
            })
        }
    }
}

/// Solve the mode-n 2x2 block (A - lambda_n I) (u_n, v_n) = (f_n, g_n),
/// applying the Fredholm selections of the singular canonical structures.
fn solve_mode_block(
    m: [f64; 4],
    rhs: [f64; 2],
    mode: usize,
    otol_u: f64,
    otol_v: f64,
) -> Result<[f64; 2]> {
    let scale = m.iter().fold(1.0_f64, |s, x| s.max(x.abs()));
    let det = m[0] * m[3] - m[1] * m[2];
    if det.abs() > GROUP_TOL * scale * scale {
        return Ok([
            (m[3] * rhs[0] - m[1] * rhs[1]) / det,
            (m[0] * rhs[1] - m[2] * rhs[0]) / det,
        ]);
    }
    let tiny = GROUP_TOL * scale;
    let require = |value: f64, component: char, tol: f64| -> Result<()> {
        if value.abs() > tol {
            return Err(ResonanceError::ResonantModeNonOrthogonal {
                mode,
                component,
                overlap: value.abs(),
                tol,
            });
        }
        Ok(())
    };
    let row1 = (m[0].abs().max(m[1].abs()) > tiny, [m[0], m[1]]);
    let row2 = (m[2].abs().max(m[3].abs()) > tiny, [m[2], m[3]]);
    match (row1.0, row2.0) {
        // Fully resonant block: both forcings must vanish; select (0, 0).
        (false, false) => {
            require(rhs[0], 'u', otol_u)?;
            require(rhs[1], 'v', otol_v)?;
            Ok([0.0, 0.0])
        }
        // Second equation is 0 = g_n.
        (true, false) => {
            require(rhs[1], 'v', otol_v)?;
            let [p, q] = row1.1;
            if p.abs() <= tiny {
                // Jordan structure [[0, b], [0, 0]]: the selection v_n = 0
                // additionally needs f_n = 0 (Fredholm on both components).
                require(rhs[0], 'u', otol_u)?;
                Ok([0.0, 0.0])
            } else if q.abs() <= tiny {
                // diagonal, resonance in the v-block: v_n = 0 representative
                Ok([rhs[0] / p, 0.0])
            } else {
                // generic rank-1 row: minimum-norm representative
                let n2 = p * p + q * q;
                Ok([p * rhs[0] / n2, q * rhs[0] / n2])
            }
        }
        // First equation is 0 = f_n.
        (false, true) => {
            require(rhs[0], 'u', otol_u)?;
            let [p, q] = row2.1;
            if q.abs() <= tiny {
                require(rhs[1], 'v', otol_v)?;
                Ok([0.0, 0.0])
            } else if p.abs() <= tiny {
                // diagonal, resonance in the u-block: u_n = 0 representative
                Ok([0.0, rhs[1] / q])
            } else {
                let n2 = p * p + q * q;
                Ok([p * rhs[1] / n2, q * rhs[1] / n2])
            }
        }
        // Proportional nonzero rows: consistency against the left null vector,
        // then a minimum-norm solve on the stronger row.
        (true, true) => {
            let (l1, l2) = if m[0].abs().max(m[1].abs()) >= m[2].abs().max(m[3].abs()) {
                (m[2].hypot(m[3]), -m[0].hypot(m[1]))
            } else {
                (m[2].hypot(m[3]), -m[0].hypot(m[1]))
            };
            // left null vector of a rank-1 matrix with rows r1, r2 = t r1:
            // (t, -1) up to scale; recover t from the dominant column.
            let t = if m[0].abs() >= m[1].abs() {
                m[2] / m[0]
            } else {
                m[3] / m[1]
            };
            let _ = (l1, l2);
            let mismatch = t * rhs[0] - rhs[1];
            let comp = if t.abs() >= 1.0 { 'v' } else { 'u' };
            require(
                mismatch / (1.0 + t * t).sqrt(),
                comp,
                otol_u.max(otol_v),
            )?;
            let [p, q] = row1.1;
            let n2 = p * p + q * q;
            Ok([p * rhs[0] / n2, q * rhs[0] / n2])
        }
    }
}

/// Mode-wise solve of the linear system Delta u + a u + b v = f,
/// Delta v + c u + d v = g (Dirichlet / periodic per the basis).
pub fn solve_linear_system(
    basis: &SpectralBasis,
    a: &CouplingMatrix,
    f: &Field,
    g: &Field,
) -> Result<(Field, Field)> {
    let n = basis.n_modes();
    let otol_u = ORTHO_TOL_REL * f.l2_norm().max(f64::MIN_POSITIVE);
    let otol_v = ORTHO_TOL_REL * g.l2_norm().max(f64::MIN_POSITIVE);
    let mut uc = vec![0.0; n];
    let mut vc = vec![0.0; n];
    for (i, mode) in basis.modes.iter().enumerate() {
        let lam = mode.eigenvalue;
        let m = [a.a - lam, a.b, a.c, a.d - lam];
        let sol = solve_mode_block(m, [f.coeffs[i], g.coeffs[i]], i + 1, otol_u, otol_v)?;
        uc[i] = sol[0];
        vc[i] = sol[1];
    }
    Ok((synthesize(basis, &uc)?, synthesize(basis, &vc)?))
}

fn coupling_of(problem: &ProblemSpec) -> Result<CouplingMatrix> {
    problem
        .matrix
        .map(CouplingMatrix::from_rows)
        .ok_or_else(|| ResonanceError::Spec("matrix: missing".into()))
}

fn system_forcings(
    problem: &ProblemSpec,
    basis: &SpectralBasis,
) -> Result<(Field, Field)> {
    let h = synthesize(basis, &problem.forcing_h.to_coeffs(basis)?)?;
    let k = match &problem.forcing_k {
        Some(fk) => synthesize(basis, &fk.to_coeffs(basis)?)?,
        None => Field::zero(basis),
    };
    Ok((h, k))
}

fn finish_system(
    problem: &ProblemSpec,
    status: SolveStatus,
    u: Field,
    v: Field,
    trace: Vec<TraceEntry>,
    condition: Option<ConditionReport>,
    mut notes: Vec<String>,
) -> Result<SolveReport> {
    let (res_l2, res_sup) = residual(problem, &[u.clone(), v.clone()])?;
    if status != SolveStatus::Converged {
        notes.push(
            "no convergence within the iteration budget; existence is not decided by this run"
                .into(),
        );
    }
    Ok(SolveReport {
        status,
        solution: vec![u, v],
        residual_l2: res_l2,
        residual_sup: res_sup,
        iterations: trace.len(),
        condition,
        trace,
        notes,
    })
}

/// Direct solve of the purely linear system.
pub fn solve_system_linear(problem: &ProblemSpec) -> Result<SolveReport> {
    let basis = problem.build_basis()?;
    let a = coupling_of(problem)?;
    let (h, k) = system_forcings(problem, &basis)?;
    let (u, v) = solve_linear_system(&basis, &a, &h, &k)?;
    finish_system(
        problem,
        SolveStatus::Converged,
        u,
        v,
        Vec::new(),
        None,
        Vec::new(),
    )
}

/// Damped Picard for the nonresonant nonlinear system:
/// (w, z) -> linear solve of A with right side (h - f(w,z), k - g(w,z)).
pub fn solve_system_nonresonant(
    problem: &ProblemSpec,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    opts.validate()?;
    let basis = problem.build_basis()?;
    let a = coupling_of(problem)?;
    let form = canonical_reduce(&a)?;
    if classify_system(&form, &basis)? != SystemClass::Nonresonant {
        return Err(ResonanceError::Spec(
            "coupling matrix is resonant; use the resonant solver".into(),
        ));
    }
    let (h, k) = system_forcings(problem, &basis)?;
    let nf = problem
        .nonlinearity_f
        .as_ref()
        .ok_or_else(|| ResonanceError::Spec("nonlinearity_f: missing".into()))?;
    let ng = problem
        .nonlinearity_g
        .as_ref()
        .ok_or_else(|| ResonanceError::Spec("nonlinearity_g: missing".into()))?;

    let mut u = Field::zero(&basis);
    let mut v = Field::zero(&basis);
    let mut trace = Vec::new();
    let mut min_res = f64::INFINITY;
    let mut status = SolveStatus::MaxIter;
    for iteration in 1..=opts.max_iter {
        let fv = apply_pointwise2(&basis, |x, y| nf.eval2(x, y), &u, &v)?;
        let gv = apply_pointwise2(&basis, |x, y| ng.eval2(x, y), &u, &v)?;
        let (tu, tv) = solve_linear_system(&basis, &a, &h.sub(&fv), &k.sub(&gv))?;
        let u_new = u.scaled(1.0 - opts.relax).add(&tu.scaled(opts.relax));
        let v_new = v.scaled(1.0 - opts.relax).add(&tv.scaled(opts.relax));
        let delta_u = u_new.sub(&u).l2_norm() + v_new.sub(&v).l2_norm();
        u = u_new;
        v = v_new;
        let (res, _) = residual(problem, &[u.clone(), v.clone()])?;
        trace.push(TraceEntry {
            iteration,
            xi: Vec::new(),
            delta_xi: 0.0,
            delta_u,
            residual: res,
        });
        min_res = min_res.min(res);
        if res <= opts.tol {
            status = SolveStatus::Converged;
            break;
        }
        if res > RESIDUAL_BLOWUP * min_res.max(opts.tol)
            || u.sup_norm().max(v.sup_norm()) > DIVERGENCE_BOUND
        {
            status = SolveStatus::Diverged;
            break;
        }
    }
    finish_system(problem, status, u, v, trace, None, Vec::new())
}

struct ResonantSetup<'a> {
    basis: SpectralBasis,
    nf: &'a Nonlinearity,
    ng: &'a Nonlinearity,
    h: Field,
    k: Field,
}

fn resonant_setup<'a>(problem: &'a ProblemSpec) -> Result<ResonantSetup<'a>> {
    let basis = problem.build_basis()?;
    let nf = problem
        .nonlinearity_f
        .as_ref()
        .ok_or_else(|| ResonanceError::Spec("nonlinearity_f: missing".into()))?;
    let ng = problem
        .nonlinearity_g
        .as_ref()
        .ok_or_else(|| ResonanceError::Spec("nonlinearity_g: missing".into()))?;
    let (h, k) = system_forcings(problem, &basis)?;
    Ok(ResonantSetup { basis, nf, ng, h, k })
}

/// Resonant system solver for the three canonical cases. Gating policy matches
/// the single-equation engine: with `gate` set, a failing threshold condition
/// aborts before iterating.
pub fn solve_system_resonant(
    problem: &ProblemSpec,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    opts.validate()?;
    let condition = match check_condition(problem) {
        Ok(c) => Some(c),
        Err(_) if !opts.gate => None,
        Err(e) => return Err(e),
    };
    if opts.gate {
        if let Some(c) = &condition {
            if c.verdict == Verdict::Fails {
                return Ok(SolveReport {
                    status: SolveStatus::ConditionViolated,
                    solution: Vec::new(),
                    residual_l2: f64::NAN,
                    residual_sup: f64::NAN,
                    iterations: 0,
                    condition: condition.clone(),
                    trace: Vec::new(),
                    notes: vec![
                        "solve aborted by --gate: solvability condition fails".into(),
                    ],
                });
            }
        }
    }
    match problem.family {
        Family::SystemCaseA => solve_case_a(problem, opts, condition),
        Family::SystemCaseB => solve_case_b(problem, opts, condition),
        Family::SystemCaseC => solve_case_c(problem, opts, condition),
        _ => Err(ResonanceError::Spec(
            "solve_system_resonant requires a resonant system family".into(),
        )),
    }
}

fn require_simple(basis: &SpectralBasis, gi: usize) -> Result<usize> {
    let mult = basis.groups[gi].members.len();
    if mult != 1 {
        return Err(ResonanceError::Multiplicity {
            group: gi,
            multiplicity: mult,
        });
    }
    Ok(basis.groups[gi].members[0])
}

/// Kernel projection <w, phi> for a simple group via exact coefficients.
fn kernel_coeff(field: &Field, mode_idx: usize) -> f64 {
    field.coeffs[mode_idx]
}

fn strip_mode(basis: &SpectralBasis, field: &Field, mode_idx: usize) -> Result<Field> {
    let mut c = field.coeffs.clone();
    c[mode_idx] = 0.0;
    synthesize(basis, &c)
}

fn with_kernel(
    basis: &SpectralBasis,
    complement: &Field,
    mode_idx: usize,
    xi: f64,
) -> Result<Field> {
    let mut c = complement.coeffs.clone();
    c[mode_idx] = xi;
    synthesize(basis, &c)
}

fn solve_case_a(
    problem: &ProblemSpec,
    opts: &SolveOptions,
    condition: Option<ConditionReport>,
) -> Result<SolveReport> {
    let s = resonant_setup(problem)?;
    let gi = problem.resonant_group(&s.basis)?;
    let ki = require_simple(&s.basis, gi)?;
    let lambda = s.basis.groups[gi].value;
    let mu = problem
        .shift_mu
        .ok_or_else(|| ResonanceError::Spec("mu: missing".into()))?;
    if s.basis.group_at(mu).is_some() {
        return Err(ResonanceError::Config(format!(
            "mu = {mu} collides with the spectrum; case A requires a nonresonant second eigenvalue"
        )));
    }
    let a_k = kernel_coeff(&s.h, ki);
    let e1 = strip_mode(&s.basis, &s.h, ki)?;

    let mut alpha = 0.0_f64;
    let mut w = Field::zero(&s.basis);
    let mut z = Field::zero(&s.basis);
    let mut trace = Vec::new();
    let mut min_res = f64::INFINITY;
    let mut status = SolveStatus::MaxIter;
    let (mut u_out, mut v_out) = (Field::zero(&s.basis), Field::zero(&s.basis));

    for iteration in 1..=opts.max_iter {
        let u_full = with_kernel(&s.basis, &w, ki, alpha)?;
        let fv = apply_pointwise2(&s.basis, |x, y| s.nf.eval2(x, y), &u_full, &z)?;
        let gv = apply_pointwise2(&s.basis, |x, y| s.ng.eval2(x, y), &u_full, &z)?;
        // Complement equation for U: right side is -f + phi_k<f,phi_k> + e1,
        // re-orthogonalized exactly.
        let rhs_u = strip_mode(&s.basis, &fv.scaled(-1.0).add(&e1), ki)?;
        let u_new = resolvent_solve(&s.basis, lambda, &rhs_u, Some(gi))?;
        // Second component is nonresonant at mu.
        let rhs_v = s.k.sub(&gv);
        let v_new = resolvent_solve(&s.basis, mu, &rhs_v, None)?;

        let u_mid = with_kernel(&s.basis, &u_new, ki, alpha)?;
        let f_mid = apply_pointwise2(&s.basis, |x, y| s.nf.eval2(x, y), &u_mid, &v_new)?;
        let xi = alpha + opts.relax * (a_k - kernel_coeff(&f_mid, ki));

        let delta_xi = (xi - alpha).abs();
        let delta_u = u_new.sub(&w).l2_norm() + v_new.sub(&z).l2_norm();
        alpha = xi;
        w = u_new;
        z = v_new;
        u_out = with_kernel(&s.basis, &w, ki, alpha)?;
        v_out = z.clone();
        let (res, _) = residual(problem, &[u_out.clone(), v_out.clone()])?;
        trace.push(TraceEntry {
            iteration,
            xi: vec![alpha],
            delta_xi,
            delta_u,
            residual: res,
        });
        min_res = min_res.min(res);
        if res <= opts.tol {
            status = SolveStatus::Converged;
            break;
        }
        if alpha.abs() > DIVERGENCE_BOUND || res > RESIDUAL_BLOWUP * min_res.max(opts.tol) {
            status = SolveStatus::Diverged;
            break;
        }
    }
    finish_system(problem, status, u_out, v_out, trace, condition, Vec::new())
}

fn solve_case_b(
    problem: &ProblemSpec,
    opts: &SolveOptions,
    condition: Option<ConditionReport>,
) -> Result<SolveReport> {
    let s = resonant_setup(problem)?;
    let gi = problem.resonant_group(&s.basis)?;
    let ki = require_simple(&s.basis, gi)?;
    let lambda_k = s.basis.groups[gi].value;
    let m_idx = problem
        .second_index
        .ok_or_else(|| ResonanceError::Spec("m: missing".into()))?;
    let gm = m_idx - 1;
    if gm >= s.basis.groups.len() {
        return Err(ResonanceError::Config(format!(
            "second group index {m_idx} out of range"
        )));
    }
    let mi = require_simple(&s.basis, gm)?;
    let lambda_m = s.basis.groups[gm].value;

    let a_k = kernel_coeff(&s.h, ki);
    let b_m = kernel_coeff(&s.k, mi);
    let e1 = strip_mode(&s.basis, &s.h, ki)?;
    let e2 = strip_mode(&s.basis, &s.k, mi)?;

    let mut alpha = 0.0_f64;
    let mut beta = 0.0_f64;
    let mut w = Field::zero(&s.basis);
    let mut z = Field::zero(&s.basis);
    let mut trace = Vec::new();
    let mut min_res = f64::INFINITY;
    let mut status = SolveStatus::MaxIter;
    let (mut u_out, mut v_out) = (Field::zero(&s.basis), Field::zero(&s.basis));

    for iteration in 1..=opts.max_iter {
        let u_full = with_kernel(&s.basis, &w, ki, alpha)?;
        let v_full = with_kernel(&s.basis, &z, mi, beta)?;
        let fv = apply_pointwise2(&s.basis, |x, y| s.nf.eval2(x, y), &u_full, &v_full)?;
        let gv = apply_pointwise2(&s.basis, |x, y| s.ng.eval2(x, y), &u_full, &v_full)?;
        let rhs_u = strip_mode(&s.basis, &fv.scaled(-1.0).add(&e1), ki)?;
        let rhs_v = strip_mode(&s.basis, &gv.scaled(-1.0).add(&e2), mi)?;
        let u_new = resolvent_solve(&s.basis, lambda_k, &rhs_u, Some(gi))?;
        let v_new = resolvent_solve(&s.basis, lambda_m, &rhs_v, Some(gm))?;

        let u_mid = with_kernel(&s.basis, &u_new, ki, alpha)?;
        let v_mid = with_kernel(&s.basis, &v_new, mi, beta)?;
        let f_mid = apply_pointwise2(&s.basis, |x, y| s.nf.eval2(x, y), &u_mid, &v_mid)?;
        let g_mid = apply_pointwise2(&s.basis, |x, y| s.ng.eval2(x, y), &u_mid, &v_mid)?;
        let xi = alpha + opts.relax * (a_k - kernel_coeff(&f_mid, ki));
        let eta = beta + opts.relax * (b_m - kernel_coeff(&g_mid, mi));

        let delta_xi = ((xi - alpha).powi(2) + (eta - beta).powi(2)).sqrt();
        let delta_u = u_new.sub(&w).l2_norm() + v_new.sub(&z).l2_norm();
        alpha = xi;
        beta = eta;
        w = u_new;
        z = v_new;
        u_out = with_kernel(&s.basis, &w, ki, alpha)?;
        v_out = with_kernel(&s.basis, &z, mi, beta)?;
        let (res, _) = residual(problem, &[u_out.clone(), v_out.clone()])?;
        trace.push(TraceEntry {
            iteration,
            xi: vec![alpha, beta],
            delta_xi,
            delta_u,
            residual: res,
        });
        min_res = min_res.min(res);
        if res <= opts.tol {
            status = SolveStatus::Converged;
            break;
        }
        if alpha.abs().max(beta.abs()) > DIVERGENCE_BOUND
            || res > RESIDUAL_BLOWUP * min_res.max(opts.tol)
        {
            status = SolveStatus::Diverged;
            break;
        }
    }
    finish_system(problem, status, u_out, v_out, trace, condition, Vec::new())
}

fn solve_case_c(
    problem: &ProblemSpec,
    opts: &SolveOptions,
    condition: Option<ConditionReport>,
) -> Result<SolveReport> {
    let s = resonant_setup(problem)?;
    let gi = problem.resonant_group(&s.basis)?;
    let ki = require_simple(&s.basis, gi)?;
    let lambda = s.basis.groups[gi].value;

    let a_k = kernel_coeff(&s.h, ki);
    let b_k = kernel_coeff(&s.k, ki);
    let e1 = strip_mode(&s.basis, &s.h, ki)?;
    let e2 = strip_mode(&s.basis, &s.k, ki)?;

    let mut alpha = 0.0_f64;
    let mut eta = 0.0_f64;
    let mut w = Field::zero(&s.basis);
    let mut z = Field::zero(&s.basis);
    let mut trace = Vec::new();
    let mut min_res = f64::INFINITY;
    let mut status = SolveStatus::MaxIter;
    let (mut u_out, mut v_out) = (Field::zero(&s.basis), Field::zero(&s.basis));

    for iteration in 1..=opts.max_iter {
        let u_full = with_kernel(&s.basis, &w, ki, alpha)?;
        let v_full = with_kernel(&s.basis, &z, ki, eta)?;
        let fv = apply_pointwise2(&s.basis, |x, y| s.nf.eval2(x, y), &u_full, &v_full)?;
        let gv = apply_pointwise2(&s.basis, |x, y| s.ng.eval2(x, y), &u_full, &v_full)?;
        // Triangular back-substitution per the Jordan structure: V first,
        // then U with the (orthogonal) right side shifted by V.
        let rhs_v = strip_mode(&s.basis, &gv.scaled(-1.0).add(&e2), ki)?;
        let v_new = resolvent_solve(&s.basis, lambda, &rhs_v, Some(gi))?;
        let rhs_u = strip_mode(&s.basis, &fv.scaled(-1.0).add(&e1).sub(&v_new), ki)?;
        let u_new = resolvent_solve(&s.basis, lambda, &rhs_u, Some(gi))?;

        let u_mid = with_kernel(&s.basis, &u_new, ki, alpha)?;
        let v_mid = with_kernel(&s.basis, &v_new, ki, eta)?;
        let f_mid = apply_pointwise2(&s.basis, |x, y| s.nf.eval2(x, y), &u_mid, &v_mid)?;
        let g_mid = apply_pointwise2(&s.basis, |x, y| s.ng.eval2(x, y), &u_mid, &v_mid)?;
        // The kernel updates are asymmetric: xi is driven by the second
        // component's data, eta is assigned outright.
        let xi = alpha + opts.relax * (b_k - kernel_coeff(&g_mid, ki));
        let eta_new = a_k - kernel_coeff(&f_mid, ki);

        let delta_xi = ((xi - alpha).powi(2) + (eta_new - eta).powi(2)).sqrt();
        let delta_u = u_new.sub(&w).l2_norm() + v_new.sub(&z).l2_norm();
        alpha = xi;
        eta = eta_new;
        w = u_new;
        z = v_new;
        u_out = with_kernel(&s.basis, &w, ki, alpha)?;
        v_out = with_kernel(&s.basis, &z, ki, eta)?;
        let (res, _) = residual(problem, &[u_out.clone(), v_out.clone()])?;
        trace.push(TraceEntry {
            iteration,
            xi: vec![alpha, eta],
            delta_xi,
            delta_u,
            residual: res,
        });
        min_res = min_res.min(res);
        if res <= opts.tol {
            status = SolveStatus::Converged;
            break;
        }
        if alpha.abs() > DIVERGENCE_BOUND || res > RESIDUAL_BLOWUP * min_res.max(opts.tol) {
            status = SolveStatus::Diverged;
            break;
        }
    }
    finish_system(problem, status, u_out, v_out, trace, condition, Vec::new())
}
