//! Damped fixed-point iterations realizing the Lyapunov-Schmidt maps for the
//! scalar resonant problem, the multi-dimensional eigenspace problem and the
//! periodic oscillator problems, with residual evaluation for every family.

use crate::error::{ResonanceError, Result};
use crate::problem::{Family, ProblemSpec};
use crate::solvability::{check_condition, ConditionReport, Verdict};
use crate::spectral::{
    apply_pointwise1, apply_pointwise2, differentiate, resolvent_solve, synthesize, Field,
    SpectralBasis,
};
use serde::Serialize;

/// Hard cap on the kernel coefficient before a run is classified as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e6;
/// A residual growing by this factor from its running minimum means divergence.
pub const RESIDUAL_BLOWUP: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Accel {
    None,
    Anderson { depth: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveOptions {
    /// L2 residual target.
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation factor on the kernel update, in (0, 1].
    pub relax: f64,
    pub accel: Accel,
    /// Abort with `ConditionViolated` when the solvability check fails.
    pub gate: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iter: 500,
            relax: 0.5,
            accel: Accel::None,
            gate: false,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(ResonanceError::Config("tol must be > 0".into()));
        }
        if !(self.relax > 0.0 && self.relax <= 1.0) {
            return Err(ResonanceError::Config("relax must be in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Diverged,
    ConditionViolated,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Kernel coefficients at the end of the iteration.
    pub xi: Vec<f64>,
    pub delta_xi: f64,
    pub delta_u: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    #[serde(skip)]
    pub solution: Vec<Field>,
    pub residual_l2: f64,
    pub residual_sup: f64,
    pub iterations: usize,
    pub condition: Option<ConditionReport>,
    pub trace: Vec<TraceEntry>,
    pub notes: Vec<String>,
}

impl SolveReport {
    fn gated(condition: ConditionReport) -> SolveReport {
        SolveReport {
            status: SolveStatus::ConditionViolated,
            solution: Vec::new(),
            residual_l2: f64::NAN,
            residual_sup: f64::NAN,
            iterations: 0,
            condition: Some(condition),
            trace: Vec::new(),
            notes: vec!["solve aborted by --gate: solvability condition fails".into()],
        }
    }
}

/// Kernel/complement state of the reduction.
#[derive(Debug, Clone)]
pub struct LsState {
    pub xi: Vec<f64>,
    pub u: Field,
}

/// Effective linear coupling matrix of a system family in its canonical
/// coordinates (a, b; c, d).
pub fn family_matrix(problem: &ProblemSpec, basis: &SpectralBasis) -> Result<[f64; 4]> {
    match problem.family {
        Family::SystemLinear | Family::SystemNonresonant => problem
            .matrix
            .ok_or_else(|| ResonanceError::Spec("matrix: missing".into())),
        Family::SystemCaseA => {
            let gi = problem.resonant_group(basis)?;
            Ok([
                basis.groups[gi].value,
                0.0,
                0.0,
                problem
                    .shift_mu
                    .ok_or_else(|| ResonanceError::Spec("mu: missing".into()))?,
            ])
        }
        Family::SystemCaseB => {
            let gi = problem.resonant_group(basis)?;
            let m = problem
                .second_index
                .ok_or_else(|| ResonanceError::Spec("m: missing".into()))?;
            Ok([
                basis.groups[gi].value,
                0.0,
                0.0,
                basis.group(m)?.value,
            ])
        }
        Family::SystemCaseC => {
            let gi = problem.resonant_group(basis)?;
            let lk = basis.groups[gi].value;
            Ok([lk, 1.0, 0.0, lk])
        }
        _ => Err(ResonanceError::Spec(
            "single-equation family has no coupling matrix".into(),
        )),
    }
}

/// Nonlinear term of a single-equation family as a band-limited field.
fn single_term(
    problem: &ProblemSpec,
    basis: &SpectralBasis,
    u: &Field,
) -> Result<Field> {
    let nl = problem
        .nonlinearity_f
        .as_ref()
        .ok_or_else(|| ResonanceError::Spec("nonlinearity: missing".into()))?;
    match problem.family {
        Family::PeriodicDamped => {
            let du = differentiate(basis, u)?;
            apply_pointwise2(basis, |a, b| nl.eval(a) * b, u, &du)
        }
        _ => apply_pointwise1(basis, |a| nl.eval(a), u),
    }
}

/// Assemble the family's left side minus right side spectrally and return
/// (L2, sup) norms of the residual.
pub fn residual(problem: &ProblemSpec, candidate: &[Field]) -> Result<(f64, f64)> {
    let basis = problem.build_basis()?;
    if problem.family.is_system() {
        if candidate.len() != 2 {
            return Err(ResonanceError::Dimension {
                expected: 2,
                got: candidate.len(),
            });
        }
        let (u, v) = (&candidate[0], &candidate[1]);
        let [a, b, c, d] = family_matrix(problem, &basis)?;
        let h = synthesize(&basis, &problem.forcing_h.to_coeffs(&basis)?)?;
        let k = match &problem.forcing_k {
            Some(fk) => synthesize(&basis, &fk.to_coeffs(&basis)?)?,
            None => Field::zero(&basis),
        };
        let (fval, gval) = if problem.family == Family::SystemLinear {
            (Field::zero(&basis), Field::zero(&basis))
        } else {
            let nf = problem.nonlinearity_f.as_ref().unwrap();
            let ng = problem.nonlinearity_g.as_ref().unwrap();
            (
                apply_pointwise2(&basis, |x, y| nf.eval2(x, y), u, v)?,
                apply_pointwise2(&basis, |x, y| ng.eval2(x, y), u, v)?,
            )
        };
        let n = basis.n_modes();
        let mut r1 = vec![0.0; n];
        let mut r2 = vec![0.0; n];
        for (i, m) in basis.modes.iter().enumerate() {
            r1[i] = (a - m.eigenvalue) * u.coeffs[i] + b * v.coeffs[i] + fval.coeffs[i]
                - h.coeffs[i];
            r2[i] = c * u.coeffs[i] + (d - m.eigenvalue) * v.coeffs[i] + gval.coeffs[i]
                - k.coeffs[i];
        }
        let f1 = synthesize(&basis, &r1)?;
        let f2 = synthesize(&basis, &r2)?;
        let l2 = (f1.coeffs.iter().map(|x| x * x).sum::<f64>()
            + f2.coeffs.iter().map(|x| x * x).sum::<f64>())
        .sqrt();
        Ok((l2, f1.sup_norm().max(f2.sup_norm())))
    } else {
        if candidate.len() != 1 {
            return Err(ResonanceError::Dimension {
                expected: 1,
                got: candidate.len(),
            });
        }
        let u = &candidate[0];
        let gi = problem.resonant_group(&basis)?;
        let lambda = basis.groups[gi].value;
        let f = synthesize(&basis, &problem.forcing_h.to_coeffs(&basis)?)?;
        let term = single_term(problem, &basis, u)?;
        let mut r = vec![0.0; basis.n_modes()];
        for (i, m) in basis.modes.iter().enumerate() {
            r[i] = (lambda - m.eigenvalue) * u.coeffs[i] + term.coeffs[i] - f.coeffs[i];
        }
        let rf = synthesize(&basis, &r)?;
        Ok((rf.l2_norm(), rf.sup_norm()))
    }
}

/// One application of the map T for a single-equation family: exact complement
/// solve, then the relaxed kernel update.
struct PicardStep<'a> {
    problem: &'a ProblemSpec,
    basis: &'a SpectralBasis,
    group_idx: usize,
    lambda: f64,
    /// Kernel projections A_i of the forcing.
    a_proj: Vec<f64>,
    /// Complement part e of the forcing.
    complement_forcing: Field,
    forcing: Field,
    relax: f64,
}

impl<'a> PicardStep<'a> {
    fn members(&self) -> &[usize] {
        &self.basis.groups[self.group_idx].members
    }

    fn compose(&self, xi: &[f64], u: &Field) -> Field {
        let mut coeffs = u.coeffs.clone();
        for (i, &mi) in self.members().iter().enumerate() {
            coeffs[mi] = xi[i];
        }
        synthesize(self.basis, &coeffs).expect("coefficients fit the basis")
    }

    fn apply(&self, xi: &[f64], u: &Field) -> Result<(Vec<f64>, Field)> {
        let composed = self.compose(xi, u);
        let term = single_term(self.problem, self.basis, &composed)?;
        // Right side of the complement equation; re-orthogonalized exactly to
        // kill quadrature-induced kernel components.
        let mut rhs = vec![0.0; self.basis.n_modes()];
        for i in 0..rhs.len() {
            rhs[i] = -term.coeffs[i] + self.complement_forcing.coeffs[i];
        }
        for &mi in self.members() {
            rhs[mi] = 0.0;
        }
        let rhs = synthesize(self.basis, &rhs)?;
        let u_new = resolvent_solve(self.basis, self.lambda, &rhs, Some(self.group_idx))?;

        let mid = self.compose(xi, &u_new);
        let term_mid = single_term(self.problem, self.basis, &mid)?;
        let mut xi_new = xi.to_vec();
        for (i, &mi) in self.members().iter().enumerate() {
            xi_new[i] = xi[i] + self.relax * (self.a_proj[i] - term_mid.coeffs[mi]);
        }
        Ok((xi_new, u_new))
    }

    fn residual_of(&self, xi: &[f64], u: &Field) -> Result<(f64, f64, Field)> {
        let composed = self.compose(xi, u);
        let term = single_term(self.problem, self.basis, &composed)?;
        let mut r = vec![0.0; self.basis.n_modes()];
        for (i, m) in self.basis.modes.iter().enumerate() {
            r[i] = (self.lambda - m.eigenvalue) * composed.coeffs[i] + term.coeffs[i]
                - self.forcing.coeffs[i];
        }
        let rf = synthesize(self.basis, &r)?;
        Ok((rf.l2_norm(), rf.sup_norm(), composed))
    }
}

/// Flatten (xi, complement coefficients) into one vector for acceleration.
fn pack(xi: &[f64], u: &Field) -> Vec<f64> {
    let mut x = xi.to_vec();
    x.extend_from_slice(&u.coeffs);
    x
}

fn unpack(basis: &SpectralBasis, group_idx: usize, x: &[f64]) -> (Vec<f64>, Field) {
    let m = basis.groups[group_idx].members.len();
    let xi = x[..m].to_vec();
    let mut coeffs = x[m..].to_vec();
    for &mi in &basis.groups[group_idx].members {
        coeffs[mi] = 0.0; // complement invariance
    }
    let u = synthesize(basis, &coeffs).expect("coefficients fit the basis");
    (xi, u)
}

/// Anderson mixing over a short history of iterates and map images.
struct Anderson {
    depth: usize,
    xs: Vec<Vec<f64>>,
    gs: Vec<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Anderson {
        Anderson {
            depth,
            xs: Vec::new(),
            gs: Vec::new(),
        }
    }

    fn next(&mut self, x: Vec<f64>, g: Vec<f64>) -> Vec<f64> {
        self.xs.push(x);
        self.gs.push(g);
        if self.xs.len() > self.depth + 1 {
            self.xs.remove(0);
            self.gs.remove(0);
        }
        let k = self.xs.len() - 1;
        if k == 0 {
            return self.gs[0].clone();
        }
        let n = self.xs[0].len();
        let rk: Vec<f64> = (0..n).map(|i| self.gs[k][i] - self.xs[k][i]).collect();
        // Columns d_j = r_k - r_{k-1-j}
        let cols: Vec<Vec<f64>> = (0..k)
            .map(|j| {
                (0..n)
                    .map(|i| rk[i] - (self.gs[j][i] - self.xs[j][i]))
                    .collect()
            })
            .collect();
        // Normal equations with a small ridge for rank safety.
        let mut ata = vec![vec![0.0; k]; k];
        let mut atb = vec![0.0; k];
        for a in 0..k {
            for b in a..k {
                let s: f64 = (0..n).map(|i| cols[a][i] * cols[b][i]).sum();
                ata[a][b] = s;
                ata[b][a] = s;
            }
            atb[a] = (0..n).map(|i| cols[a][i] * rk[i]).sum();
            ata[a][a] += 1e-12;
        }
        let gamma = solve_dense(&mut ata, &mut atb);
        let mut out = self.gs[k].clone();
        if let Some(gamma) = gamma {
            for (j, &gj) in gamma.iter().enumerate() {
                for i in 0..n {
                    out[i] -= gj * (self.gs[k][i] - self.gs[j][i]);
                }
            }
        }
        out
    }
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for c in row + 1..n {
            s -= a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

fn run_single_family(
    problem: &ProblemSpec,
    opts: &SolveOptions,
    condition: Option<ConditionReport>,
    init: Option<LsState>,
) -> Result<SolveReport> {
    opts.validate()?;
    let mut opts = opts.clone();
    let mut auto_notes = Vec::new();
    // The damped-oscillator kernel map g(u) u' is rotational (skew kernel
    // Jacobian), which plain relaxation cannot contract; acceleration is
    // required, not optional, for this family.
    if problem.family == Family::PeriodicDamped && opts.accel == Accel::None {
        opts.accel = Accel::Anderson { depth: 8 };
        auto_notes.push(
            "anderson acceleration enabled automatically for the damped family".into(),
        );
    }
    let opts = &opts;
    let basis = problem.build_basis()?;
    let gi = problem.resonant_group(&basis)?;
    let lambda = basis.groups[gi].value;
    let forcing = synthesize(&basis, &problem.forcing_h.to_coeffs(&basis)?)?;
    let (a_proj, complement_forcing) = crate::spectral::project(&basis, &forcing, gi)?;
    let step = PicardStep {
        problem,
        basis: &basis,
        group_idx: gi,
        lambda,
        a_proj,
        complement_forcing,
        forcing: forcing.clone(),
        relax: opts.relax,
    };

    let (mut xi, mut u) = match init {
        Some(s) => (s.xi, s.u),
        None => (
            vec![0.0; basis.groups[gi].members.len()],
            Field::zero(&basis),
        ),
    };

    let mut anderson = match opts.accel {
        Accel::Anderson { depth } => Some(Anderson::new(depth)),
        Accel::None => None,
    };

    let mut trace = Vec::new();
    let mut min_residual = f64::INFINITY;
    let mut status = SolveStatus::MaxIter;
    let mut best: Option<(f64, f64, Field)> = None;

    for iteration in 1..=opts.max_iter {
        let (xi_new, u_new) = step.apply(&xi, &u)?;
        let (xi_next, u_next) = if let Some(acc) = anderson.as_mut() {
            let mixed = acc.next(pack(&xi, &u), pack(&xi_new, &u_new));
            unpack(&basis, gi, &mixed)
        } else {
            (xi_new, u_new)
        };

        let delta_xi = xi_next
            .iter()
            .zip(&xi)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let delta_u = u_next.sub(&u).l2_norm();
        let (res_l2, res_sup, composed) = step.residual_of(&xi_next, &u_next)?;
        trace.push(TraceEntry {
            iteration,
            xi: xi_next.clone(),
            delta_xi,
            delta_u,
            residual: res_l2,
        });
        xi = xi_next;
        u = u_next;
        min_residual = min_residual.min(res_l2);
        if best.as_ref().map(|(r, _, _)| res_l2 <= *r).unwrap_or(true) {
            best = Some((res_l2, res_sup, composed));
        }
        if res_l2 <= opts.tol {
            status = SolveStatus::Converged;
            break;
        }
        let xi_norm = xi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if xi_norm > DIVERGENCE_BOUND || res_l2 > RESIDUAL_BLOWUP * min_residual.max(opts.tol)
        {
            status = SolveStatus::Diverged;
            break;
        }
    }

    let mut notes = auto_notes;
    if status != SolveStatus::Converged {
        // Drift only signals escape when the residual also stagnates; a
        // slowly rotating approach to a fixed point can drift while the
        // residual keeps falling.
        let stagnant = match (trace.get(20), trace.last()) {
            (Some(start), Some(end)) => end.residual > 0.5 * start.residual,
            _ => false,
        };
        if let Some(span) = monotone_drift_span(&trace, 20) {
            if stagnant {
                notes.push(format!(
                    "monotone kernel drift over {span} consecutive iterations after burn-in; the fixed-point map is escaping, consistent with a violated solvability condition"
                ));
                if span >= 50 {
                    status = SolveStatus::Diverged;
                }
            }
        }
        notes.push(
            "no convergence within the iteration budget; existence is not decided by this run"
                .into(),
        );
    }

    let (res_l2, res_sup, solution) = match status {
        // Report the final iterate when converged, the best seen otherwise.
        SolveStatus::Converged => {
            let (r, s, f) = best.unwrap();
            (r, s, f)
        }
        _ => {
            let (_, _, f) = step.residual_of(&xi, &u).map(|(a, b, c)| (a, b, c))?;
            let last = trace.last().map(|t| t.residual).unwrap_or(f64::NAN);
            (last, f.sup_norm(), f)
        }
    };
    // recompute sup at solution for the converged case too
    let iterations = trace.len();
    Ok(SolveReport {
        status,
        solution: vec![solution],
        residual_l2: res_l2,
        residual_sup: res_sup,
        iterations,
        condition,
        trace,
        notes,
    })
}

/// Length of the longest run of strictly monotone (in one direction) kernel
/// norm increments ending at the last iteration, after `burn_in` iterations.
pub fn monotone_drift_span(trace: &[TraceEntry], burn_in: usize) -> Option<usize> {
    if trace.len() <= burn_in + 1 {
        return None;
    }
    let norms: Vec<f64> = trace[burn_in..]
        .iter()
        .map(|t| t.xi.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut span = 0usize;
    let mut best = 0usize;
    for w in norms.windows(2) {
        if w[1] > w[0] {
            span += 1;
            best = best.max(span);
        } else {
            span = 0;
        }
    }
    if best > 0 {
        Some(best)
    } else {
        None
    }
}

fn gate_or_run(
    problem: &ProblemSpec,
    opts: &SolveOptions,
    init: Option<LsState>,
) -> Result<SolveReport> {
    let condition = match check_condition(problem) {
        Ok(c) => Some(c),
        // Families without usable metadata still solve, ungated.
        Err(_) if !opts.gate => None,
        Err(e) => return Err(e),
    };
    if opts.gate {
        if let Some(c) = &condition {
            if c.verdict == Verdict::Fails {
                return Ok(SolveReport::gated(c.clone()));
            }
        }
    }
    run_single_family(problem, opts, condition, init)
}

/// Scalar resonant problem at a simple eigenvalue.
pub fn solve_scalar_resonant(problem: &ProblemSpec, opts: &SolveOptions) -> Result<SolveReport> {
    let basis = problem.build_basis()?;
    let gi = problem.resonant_group(&basis)?;
    let mult = basis.groups[gi].members.len();
    if mult != 1 {
        return Err(ResonanceError::Multiplicity {
            group: gi,
            multiplicity: mult,
        });
    }
    gate_or_run(problem, opts, None)
}

/// Resonance in a multi-dimensional eigenspace; reduces exactly to the scalar
/// iteration when the group is simple.
pub fn solve_multi_resonant(problem: &ProblemSpec, opts: &SolveOptions) -> Result<SolveReport> {
    gate_or_run(problem, opts, None)
}

/// 2 pi periodic oscillator problems (forced, damped, and sign-condition).
pub fn solve_periodic(problem: &ProblemSpec, opts: &SolveOptions) -> Result<SolveReport> {
    if !problem.family.is_periodic() {
        return Err(ResonanceError::Spec(
            "solve_periodic requires a periodic family".into(),
        ));
    }
    gate_or_run(problem, opts, None)
}

/// Warm-started variant used by sweeps.
pub fn solve_single_with_init(
    problem: &ProblemSpec,
    opts: &SolveOptions,
    init: LsState,
) -> Result<SolveReport> {
    gate_or_run(problem, opts, Some(init))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{BaseFn, ForcingSpec, Nonlinearity};
    use crate::spectral::{Domain, DomainKind};
    use approx::assert_abs_diff_eq;

    fn scalar_problem() -> ProblemSpec {
        ProblemSpec {
            family: Family::ScalarResonant,
            domain: Domain::new(DomainKind::Interval, 64),
            n_modes: 16,
            resonant_index: 1,
            second_index: None,
            shift_mu: None,
            matrix: None,
            nonlinearity_f: Some(Nonlinearity::new(BaseFn::Arctan)),
            nonlinearity_g: None,
            forcing_h: ForcingSpec::empty(),
            forcing_k: None,
        }
    }

    #[test]
    fn zero_forcing_gives_zero_solution() {
        let p = scalar_problem();
        let r = solve_scalar_resonant(&p, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert!(r.solution[0].l2_norm() < 1e-8);
    }

    #[test]
    fn complement_invariance_along_trace() {
        let mut p = scalar_problem();
        p.forcing_h = ForcingSpec::from_terms(vec![("1".into(), 0.4), ("2".into(), 0.3)]);
        let r = solve_scalar_resonant(&p, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        // The converged solution satisfies the kernel equation: <g(u), phi_k> = A_k.
        let basis = p.build_basis().unwrap();
        let g = apply_pointwise1(&basis, |u| u.atan(), &r.solution[0]).unwrap();
        assert!((g.coeffs[0] - 0.4).abs() <= 10.0 * 1e-8, "{}", g.coeffs[0]);
    }

    #[test]
    fn manufactured_scalar_solution() {
        // u* = 0.3 phi_2; f = (lambda_1 - lambda_2) 0.3 phi_2 + Pi(arctan(0.3 phi_2)).
        let mut p = scalar_problem();
        let basis = p.build_basis().unwrap();
        let mut c = vec![0.0; basis.n_modes()];
        c[1] = 0.3;
        let u_star = synthesize(&basis, &c).unwrap();
        let g = apply_pointwise1(&basis, |u| u.atan(), &u_star).unwrap();
        let mut fc = vec![0.0; basis.n_modes()];
        for (i, m) in basis.modes.iter().enumerate() {
            fc[i] = (1.0 - m.eigenvalue) * u_star.coeffs[i] + g.coeffs[i];
        }
        p.forcing_h = ForcingSpec::from_terms(
            basis
                .modes
                .iter()
                .enumerate()
                .filter(|(i, _)| fc[*i].abs() > 0.0)
                .map(|(i, m)| (m.label.to_string(), fc[i]))
                .collect(),
        );
        // forward-built forcing: u* has residual ~0 before any solve
        let (l2, _) = residual(&p, &[u_star.clone()]).unwrap();
        assert!(l2 < 1e-12, "manufactured residual {l2}");

        let r = solve_scalar_resonant(&p, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert!(r.residual_l2 < 1e-8);
        let a1 = p.forcing_h.to_coeffs(&basis).unwrap()[0];
        let gsol = apply_pointwise1(&basis, |u| u.atan(), &r.solution[0]).unwrap();
        assert!((gsol.coeffs[0] - a1).abs() < 1e-7);
    }

    #[test]
    fn gated_run_aborts_outside_interval() {
        let mut p = scalar_problem();
        p.nonlinearity_f =
            Some(Nonlinearity::new(BaseFn::Tanh).with_thresholds(-1.5, 1.5, -0.9, 0.9));
        p.forcing_h = ForcingSpec::from_terms(vec![("1".into(), 2.0)]);
        let opts = SolveOptions {
            gate: true,
            ..SolveOptions::default()
        };
        let r = solve_scalar_resonant(&p, &opts).unwrap();
        assert_eq!(r.status, SolveStatus::ConditionViolated);
    }

    #[test]
    fn ungated_run_drifts_monotonically() {
        let mut p = scalar_problem();
        p.nonlinearity_f =
            Some(Nonlinearity::new(BaseFn::Tanh).with_thresholds(-1.5, 1.5, -0.9, 0.9));
        p.forcing_h = ForcingSpec::from_terms(vec![("1".into(), 2.0)]);
        let opts = SolveOptions {
            max_iter: 100,
            ..SolveOptions::default()
        };
        let r = solve_scalar_resonant(&p, &opts).unwrap();
        assert_eq!(r.status, SolveStatus::Diverged);
        let span = monotone_drift_span(&r.trace, 20).unwrap();
        assert!(span >= 50, "drift span {span}");
    }

    #[test]
    fn multi_reduces_to_scalar_when_simple() {
        let mut p = scalar_problem();
        p.forcing_h = ForcingSpec::from_terms(vec![("1".into(), 0.3), ("3".into(), 0.2)]);
        let r1 = solve_scalar_resonant(&p, &SolveOptions::default()).unwrap();
        let mut p2 = p.clone();
        p2.family = Family::ScalarMulti;
        let r2 = solve_multi_resonant(&p2, &SolveOptions::default()).unwrap();
        assert_eq!(r1.iterations, r2.iterations);
        for (a, b) in r1.trace.iter().zip(&r2.trace) {
            assert_abs_diff_eq!(a.xi[0], b.xi[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn square_multi_group_converges() {
        let p = ProblemSpec {
            family: Family::ScalarMulti,
            domain: Domain::new(DomainKind::Square, 48),
            n_modes: 12,
            resonant_index: 2, // eigenvalues 2, 5, 8, ... -> second group is lambda = 5
            second_index: None,
            shift_mu: None,
            matrix: None,
            nonlinearity_f: Some(Nonlinearity::new(BaseFn::Arctan)),
            nonlinearity_g: None,
            forcing_h: ForcingSpec::from_terms(vec![
                ("1_2".into(), 0.4),
                ("2_1".into(), 0.2),
                ("1_1".into(), 1.0),
            ]),
            forcing_k: None,
        };
        let basis = p.build_basis().unwrap();
        assert_abs_diff_eq!(basis.groups[1].value, 5.0, epsilon = 0.0);
        let r = solve_multi_resonant(&p, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert!(r.residual_l2 < 1e-8);
    }

    #[test]
    fn periodic_ll_converges_with_projection_identities() {
        let p = ProblemSpec {
            family: Family::PeriodicLl,
            domain: Domain::new(DomainKind::Circle, 256),
            n_modes: 16,
            resonant_index: 2,
            second_index: None,
            shift_mu: None,
            matrix: None,
            nonlinearity_f: Some(Nonlinearity::new(BaseFn::Arctan)),
            nonlinearity_g: None,
            forcing_h: ForcingSpec::from_terms(vec![("cos2".into(), 1.0)]),
            forcing_k: None,
        };
        let r = solve_periodic(&p, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        // Projected equations: int g(u) cos 2t dt = A = pi, int g(u) sin 2t dt = B = 0.
        let basis = p.build_basis().unwrap();
        let g = apply_pointwise1(&basis, |u| u.atan(), &r.solution[0]).unwrap();
        let (a, b) = crate::solvability::fourier_numbers(&basis, &g, 2).unwrap();
        assert!((a - std::f64::consts::PI).abs() < 1e-6, "A = {a}");
        assert!(b.abs() < 1e-6, "B = {b}");
    }

    #[test]
    fn periodic_damped_converges() {
        let p = ProblemSpec {
            family: Family::PeriodicDamped,
            domain: Domain::new(DomainKind::Circle, 256),
            n_modes: 16,
            resonant_index: 1,
            second_index: None,
            shift_mu: None,
            matrix: None,
            nonlinearity_f: Some(Nonlinearity::new(BaseFn::Rational)),
            nonlinearity_g: None,
            forcing_h: ForcingSpec::from_terms(vec![("cos1".into(), 1.0)]),
            forcing_k: None,
        };
        let r = solve_periodic(&p, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged, "{:?}", r.notes);
        let (l2, _sup) = residual(&p, &r.solution).unwrap();
        assert!(l2 < 1e-7, "residual {l2}");
    }

    #[test]
    fn anderson_accelerates_or_matches() {
        let mut p = scalar_problem();
        p.forcing_h = ForcingSpec::from_terms(vec![("1".into(), 0.8), ("2".into(), 0.5)]);
        let plain = solve_scalar_resonant(&p, &SolveOptions::default()).unwrap();
        let accel = solve_scalar_resonant(
            &p,
            &SolveOptions {
                accel: Accel::Anderson { depth: 5 },
                ..SolveOptions::default()
            },
        )
        .unwrap();
        assert_eq!(accel.status, SolveStatus::Converged);
        assert!(accel.iterations <= plain.iterations + 5);
    }

    #[test]
    fn reported_residual_is_self_consistent() {
        let mut p = scalar_problem();
        p.forcing_h = ForcingSpec::from_terms(vec![("1".into(), 0.4)]);
        let r = solve_scalar_resonant(&p, &SolveOptions::default()).unwrap();
        let (l2, _) = residual(&p, &r.solution).unwrap();
        assert!((l2 - r.residual_l2).abs() < 1e-12);
    }

    #[test]
    fn mesh_consistency() {
        let mut p = scalar_problem();
        p.forcing_h = ForcingSpec::from_terms(vec![("1".into(), 0.5), ("3".into(), 0.3)]);
        let r1 = solve_scalar_resonant(&p, &SolveOptions::default()).unwrap();
        let mut p2 = p.clone();
        p2.domain.grid_size *= 2;
        let r2 = solve_scalar_resonant(&p2, &SolveOptions::default()).unwrap();
        let diff: f64 = r1.solution[0]
            .coeffs
            .iter()
            .zip(&r2.solution[0].coeffs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(diff < 10.0 * 1e-8, "mesh drift {diff}");
    }
}
