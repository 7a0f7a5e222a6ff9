//! Eigenbasis construction, transforms, projections and Fredholm-alternative
//! resolvent solves on the three domains with closed-form spectra:
//! the interval (0,pi) with Dirichlet conditions, the square (0,pi)^2 with
//! Dirichlet conditions, and the 2*pi-periodic circle.

use crate::error::{ResonanceError, Result};
use std::f64::consts::PI;

/// Absolute tolerance for deciding that two eigenvalues belong to one group.
pub const GROUP_TOL: f64 = 1e-9;
/// Relative tolerance (times ||f||) for the Fredholm orthogonality precondition.
pub const ORTHO_TOL_REL: f64 = 1e-8;
/// Nodes with |w| below this are treated as lying on the nodal set.
pub const NODAL_TOL: f64 = 1e-13;
/// Oversampling factor of the quadrature grid relative to the mode count.
pub const OVERSAMPLING: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    /// (0, pi) with Dirichlet conditions; lambda_k = k^2, phi_k = sqrt(2/pi) sin kx.
    Interval,
    /// (0, pi)^2 with Dirichlet conditions; lambda_{jl} = j^2 + l^2.
    Square,
    /// 2*pi-periodic circle; eigenvalue n^2 with cos nt and sin nt.
    Circle,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Domain {
    pub kind: DomainKind,
    /// Quadrature points per dimension.
    pub grid_size: usize,
}

impl Domain {
    pub fn new(kind: DomainKind, grid_size: usize) -> Self {
        Domain { kind, grid_size }
    }
}

/// Label of a single basis function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ModeLabel {
    /// Interval mode sqrt(2/pi) sin kx.
    Sine(u32),
    /// Square mode (2/pi) sin jx sin ly.
    Sine2d(u32, u32),
    /// Circle constant mode 1/sqrt(2 pi).
    Constant,
    /// Circle mode cos(nt)/sqrt(pi).
    Cos(u32),
    /// Circle mode sin(nt)/sqrt(pi).
    Sin(u32),
}

impl std::fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModeLabel::Sine(k) => write!(f, "{k}"),
            ModeLabel::Sine2d(j, l) => write!(f, "{j}_{l}"),
            ModeLabel::Constant => write!(f, "const"),
            ModeLabel::Cos(n) => write!(f, "cos{n}"),
            ModeLabel::Sin(n) => write!(f, "sin{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Mode {
    pub label: ModeLabel,
    pub eigenvalue: f64,
}

/// A maximal set of basis functions sharing one eigenvalue.
#[derive(Debug, Clone)]
pub struct EigenGroup {
    pub value: f64,
    /// Indices into `SpectralBasis::modes`.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub domain: Domain,
    /// All modes, ordered by ascending eigenvalue.
    pub modes: Vec<Mode>,
    /// Distinct eigenvalue groups, ascending.
    pub groups: Vec<EigenGroup>,
    /// 1-d quadrature nodes (per dimension for the square).
    nodes: Vec<f64>,
    /// 1-d quadrature weights.
    weights_1d: Vec<f64>,
    /// Per-dimension mode count for the square, 0 otherwise.
    n1d: usize,
    /// (j-1)*n1d + (l-1) -> mode index, square only.
    square_lookup: Vec<usize>,
}

impl SpectralBasis {
    /// Total mode count N.
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Number of quadrature nodes (grid_size^2 for the square).
    pub fn grid_len(&self) -> usize {
        match self.domain.kind {
            DomainKind::Square => self.domain.grid_size * self.domain.grid_size,
            _ => self.domain.grid_size,
        }
    }

    /// 1-d quadrature nodes.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Quadrature weight of flattened grid node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        match self.domain.kind {
            DomainKind::Square => {
                let g = self.domain.grid_size;
                self.weights_1d[i / g] * self.weights_1d[i % g]
            }
            _ => self.weights_1d[i],
        }
    }

    /// Coordinates of flattened grid node `i` (one entry for 1-d domains).
    pub fn node_coords(&self, i: usize) -> Vec<f64> {
        match self.domain.kind {
            DomainKind::Square => {
                let g = self.domain.grid_size;
                vec![self.nodes[i / g], self.nodes[i % g]]
            }
            _ => vec![self.nodes[i]],
        }
    }

    /// Group index whose eigenvalue matches `value` within `GROUP_TOL`, if any.
    pub fn group_at(&self, value: f64) -> Option<usize> {
        self.groups
            .iter()
            .position(|g| (g.value - value).abs() < GROUP_TOL)
    }

    /// Group index containing eigenvalue lambda_k of the given 1-based index
    /// in ascending order of distinct eigenvalues.
    pub fn group(&self, idx_1based: usize) -> Result<&EigenGroup> {
        self.groups
            .get(idx_1based.checked_sub(1).ok_or_else(|| {
                ResonanceError::Config("group index must be >= 1".into())
            })?)
            .ok_or_else(|| {
                ResonanceError::Config(format!(
                    "group index {idx_1based} exceeds the {} available groups",
                    self.groups.len()
                ))
            })
    }

    /// Value of basis function `mode_idx` at an arbitrary point of a 1-d domain.
    pub fn mode_value_1d(&self, mode_idx: usize, x: f64) -> f64 {
        match self.modes[mode_idx].label {
            ModeLabel::Sine(k) => (2.0 / PI).sqrt() * (k as f64 * x).sin(),
            ModeLabel::Constant => 1.0 / (2.0 * PI).sqrt(),
            ModeLabel::Cos(n) => (n as f64 * x).cos() / PI.sqrt(),
            ModeLabel::Sin(n) => (n as f64 * x).sin() / PI.sqrt(),
            ModeLabel::Sine2d(..) => unreachable!("square basis is not one-dimensional"),
        }
    }

    /// Value of basis function `mode_idx` at an arbitrary point of the square.
    pub fn mode_value_2d(&self, mode_idx: usize, x: f64, y: f64) -> f64 {
        match self.modes[mode_idx].label {
            ModeLabel::Sine2d(j, l) => {
                (2.0 / PI) * (j as f64 * x).sin() * (l as f64 * y).sin()
            }
            _ => unreachable!("only square modes are two-dimensional"),
        }
    }

    /// Quadrature inner product of two sample vectors.
    pub fn quad_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            s += self.weight(i) * a[i] * b[i];
        }
        s
    }

    /// L2 norm of a sample vector under the quadrature rule.
    pub fn quad_norm(&self, a: &[f64]) -> f64 {
        self.quad_inner(a, a).max(0.0).sqrt()
    }
}

/// A function represented by coefficients in the eigenbasis together with
/// synchronized point samples on the quadrature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub coeffs: Vec<f64>,
    pub samples: Vec<f64>,
}

impl Field {
    pub fn zero(basis: &SpectralBasis) -> Field {
        Field {
            coeffs: vec![0.0; basis.n_modes()],
            samples: vec![0.0; basis.grid_len()],
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, t: f64) -> Field {
        Field {
            coeffs: self.coeffs.iter().map(|c| c * t).collect(),
            samples: self.samples.iter().map(|s| s * t).collect(),
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        Field {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.add(&other.scaled(-1.0))
    }

    /// Value at an arbitrary point of a 1-d domain by direct mode summation.
    pub fn value_at_1d(&self, basis: &SpectralBasis, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * basis.mode_value_1d(i, x))
            .sum()
    }
}

/// Build the basis for `domain` with `n_modes` modes per dimension:
/// the maximal sine frequency on the interval and square, the maximal
/// oscillator integer on the circle.
pub fn build_basis(domain: Domain, n_modes: usize) -> Result<SpectralBasis> {
    if n_modes < 1 {
        return Err(ResonanceError::Config("n_modes must be >= 1".into()));
    }
    if domain.grid_size < OVERSAMPLING * n_modes {
        return Err(ResonanceError::Config(format!(
            "grid_size {} violates the oversampling rule: need >= {} (= {} x {} modes per dimension)",
            domain.grid_size,
            OVERSAMPLING * n_modes,
            OVERSAMPLING,
            n_modes
        )));
    }
    let g = domain.grid_size;
    let (nodes, weights_1d): (Vec<f64>, Vec<f64>) = match domain.kind {
        // Composite midpoint honoring the Dirichlet zeros at 0 and pi.
        DomainKind::Interval | DomainKind::Square => {
            let h = PI / g as f64;
            (
                (0..g).map(|i| (i as f64 + 0.5) * h).collect(),
                vec![h; g],
            )
        }
        // Uniform grid with trapezoid weights, spectrally accurate for
        // periodic integrands.
        DomainKind::Circle => {
            let h = 2.0 * PI / g as f64;
            ((0..g).map(|i| i as f64 * h).collect(), vec![h; g])
        }
    };

    let mut modes: Vec<Mode> = Vec::new();
    match domain.kind {
        DomainKind::Interval => {
            for k in 1..=n_modes as u32 {
                modes.push(Mode {
                    label: ModeLabel::Sine(k),
                    eigenvalue: (k * k) as f64,
                });
            }
        }
        DomainKind::Square => {
            for j in 1..=n_modes as u32 {
                for l in 1..=n_modes as u32 {
                    modes.push(Mode {
                        label: ModeLabel::Sine2d(j, l),
                        eigenvalue: (j * j + l * l) as f64,
                    });
                }
            }
            modes.sort_by(|a, b| {
                a.eigenvalue
                    .partial_cmp(&b.eigenvalue)
                    .unwrap()
                    .then_with(|| format!("{:?}", a.label).cmp(&format!("{:?}", b.label)))
            });
        }
        DomainKind::Circle => {
            modes.push(Mode {
                label: ModeLabel::Constant,
                eigenvalue: 0.0,
            });
            for n in 1..=n_modes as u32 {
                modes.push(Mode {
                    label: ModeLabel::Cos(n),
                    eigenvalue: (n * n) as f64,
                });
                modes.push(Mode {
                    label: ModeLabel::Sin(n),
                    eigenvalue: (n * n) as f64,
                });
            }
        }
    }

    let mut groups: Vec<EigenGroup> = Vec::new();
    for (i, m) in modes.iter().enumerate() {
        match groups.last_mut() {
            Some(gr) if (gr.value - m.eigenvalue).abs() < GROUP_TOL => gr.members.push(i),
            _ => groups.push(EigenGroup {
                value: m.eigenvalue,
                members: vec![i],
            }),
        }
    }

    let (n1d, square_lookup) = if domain.kind == DomainKind::Square {
        let mut lookup = vec![0usize; n_modes * n_modes];
        for (i, m) in modes.iter().enumerate() {
            if let ModeLabel::Sine2d(j, l) = m.label {
                lookup[(j as usize - 1) * n_modes + (l as usize - 1)] = i;
            }
        }
        (n_modes, lookup)
    } else {
        (0, Vec::new())
    };

    Ok(SpectralBasis {
        domain,
        modes,
        groups,
        nodes,
        weights_1d,
        n1d,
        square_lookup,
    })
}

fn mode_table_1d(basis: &SpectralBasis, mode_idx: usize) -> Vec<f64> {
    basis
        .nodes
        .iter()
        .map(|&x| basis.mode_value_1d(mode_idx, x))
        .collect()
}

/// Expand grid samples into eigenbasis coefficients (quadrature inner products
/// against each basis function) and return the band-limited field.
pub fn analyze(basis: &SpectralBasis, samples: &[f64]) -> Result<Field> {
    if samples.len() != basis.grid_len() {
        return Err(ResonanceError::Dimension {
            expected: basis.grid_len(),
            got: samples.len(),
        });
    }
    let coeffs = match basis.domain.kind {
        DomainKind::Interval | DomainKind::Circle => {
            let mut coeffs = vec![0.0; basis.n_modes()];
            for (mi, c) in coeffs.iter_mut().enumerate() {
                let table = mode_table_1d(basis, mi);
                let mut s = 0.0;
                for i in 0..samples.len() {
                    s += basis.weights_1d[i] * samples[i] * table[i];
                }
                *c = s;
            }
            coeffs
        }
        DomainKind::Square => {
            let g = basis.domain.grid_size;
            let n = basis.n1d;
            // Contract the y-direction first, then x.
            let mut partial = vec![0.0; g * n]; // [ix][l-1]
            for ix in 0..g {
                for l in 1..=n {
                    let mut s = 0.0;
                    for iy in 0..g {
                        let phi =
                            (2.0 / PI).sqrt() * (l as f64 * basis.nodes[iy]).sin();
                        s += basis.weights_1d[iy] * samples[ix * g + iy] * phi;
                    }
                    partial[ix * n + (l - 1)] = s;
                }
            }
            let mut coeffs = vec![0.0; basis.n_modes()];
            for j in 1..=n {
                for l in 1..=n {
                    let mut s = 0.0;
                    for ix in 0..g {
                        let phi =
                            (2.0 / PI).sqrt() * (j as f64 * basis.nodes[ix]).sin();
                        s += basis.weights_1d[ix] * partial[ix * n + (l - 1)] * phi;
                    }
                    coeffs[basis.square_lookup[(j - 1) * n + (l - 1)]] = s;
                }
            }
            coeffs
        }
    };
    synthesize(basis, &coeffs)
}

/// Evaluate eigenbasis coefficients on the quadrature grid.
pub fn synthesize(basis: &SpectralBasis, coeffs: &[f64]) -> Result<Field> {
    if coeffs.len() != basis.n_modes() {
        return Err(ResonanceError::Dimension {
            expected: basis.n_modes(),
            got: coeffs.len(),
        });
    }
    let samples = match basis.domain.kind {
        DomainKind::Interval | DomainKind::Circle => {
            let mut samples = vec![0.0; basis.grid_len()];
            for (mi, &c) in coeffs.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let table = mode_table_1d(basis, mi);
                for i in 0..samples.len() {
                    samples[i] += c * table[i];
                }
            }
            samples
        }
        DomainKind::Square => {
            let g = basis.domain.grid_size;
            let n = basis.n1d;
            // partial[j-1][iy] = sum_l c_{jl} phi_l(y)
            let mut partial = vec![0.0; n * g];
            for j in 1..=n {
                for l in 1..=n {
                    let c = coeffs[basis.square_lookup[(j - 1) * n + (l - 1)]];
                    if c == 0.0 {
                        continue;
                    }
                    for iy in 0..g {
                        let phi =
                            (2.0 / PI).sqrt() * (l as f64 * basis.nodes[iy]).sin();
                        partial[(j - 1) * g + iy] += c * phi;
                    }
                }
            }
            let mut samples = vec![0.0; g * g];
            for ix in 0..g {
                for j in 1..=n {
                    let phi = (2.0 / PI).sqrt() * (j as f64 * basis.nodes[ix]).sin();
                    if phi == 0.0 {
                        continue;
                    }
                    for iy in 0..g {
                        samples[ix * g + iy] += phi * partial[(j - 1) * g + iy];
                    }
                }
            }
            samples
        }
    };
    Ok(Field {
        coeffs: coeffs.to_vec(),
        samples,
    })
}

/// Split a field into its component in an eigenvalue group and the complement:
/// field = sum_i in_group_i phi_i + complement, exact in coefficients.
pub fn project(
    basis: &SpectralBasis,
    field: &Field,
    group_idx: usize,
) -> Result<(Vec<f64>, Field)> {
    let group = basis.groups.get(group_idx).ok_or_else(|| {
        ResonanceError::Config(format!("group index {group_idx} out of range"))
    })?;
    let mut comp_coeffs = field.coeffs.clone();
    let mut in_group = Vec::with_capacity(group.members.len());
    for &mi in &group.members {
        in_group.push(comp_coeffs[mi]);
        comp_coeffs[mi] = 0.0;
    }
    Ok((in_group, synthesize(basis, &comp_coeffs)?))
}

/// Solve (Delta + lambda) u = f mode-wise. At a resonant shift, `orthogonal_to`
/// must name the matching group, f must be orthogonal to it, and the returned
/// solution is the complement representative (zero on the group).
pub fn resolvent_solve(
    basis: &SpectralBasis,
    shift: f64,
    f: &Field,
    orthogonal_to: Option<usize>,
) -> Result<Field> {
    let resonant_group = basis.group_at(shift);
    if let Some(gi) = resonant_group {
        match orthogonal_to {
            Some(named) if named == gi => {}
            _ => {
                return Err(ResonanceError::Config(format!(
                    "shift {shift} is resonant with eigenvalue group {gi}; orthogonal_to must name it"
                )))
            }
        }
        let tol = ORTHO_TOL_REL * f.l2_norm().max(f64::MIN_POSITIVE);
        for &mi in &basis.groups[gi].members {
            if f.coeffs[mi].abs() > tol {
                return Err(ResonanceError::NonOrthogonalForcing {
                    eigenvalue: basis.groups[gi].value,
                    overlap: f.coeffs[mi].abs(),
                    tol,
                });
            }
        }
    }
    let mut coeffs = vec![0.0; basis.n_modes()];
    for (i, m) in basis.modes.iter().enumerate() {
        if (shift - m.eigenvalue).abs() < GROUP_TOL {
            coeffs[i] = 0.0; // complement representative
        } else {
            coeffs[i] = f.coeffs[i] / (shift - m.eigenvalue);
        }
    }
    synthesize(basis, &coeffs)
}

/// Apply a pointwise map of one field value on the oversampled grid, then
/// analyze back to N modes.
pub fn apply_pointwise1(
    basis: &SpectralBasis,
    map: impl Fn(f64) -> f64,
    input: &Field,
) -> Result<Field> {
    let mut out = Vec::with_capacity(input.samples.len());
    for (i, &u) in input.samples.iter().enumerate() {
        let v = map(u);
        if !v.is_finite() {
            return Err(ResonanceError::Evaluation { node: i });
        }
        out.push(v);
    }
    analyze(basis, &out)
}

/// Pointwise map of two field values (used for f(u,v) and for g(u) u').
pub fn apply_pointwise2(
    basis: &SpectralBasis,
    map: impl Fn(f64, f64) -> f64,
    a: &Field,
    b: &Field,
) -> Result<Field> {
    if a.samples.len() != b.samples.len() {
        return Err(ResonanceError::Dimension {
            expected: a.samples.len(),
            got: b.samples.len(),
        });
    }
    let mut out = Vec::with_capacity(a.samples.len());
    for i in 0..a.samples.len() {
        let v = map(a.samples[i], b.samples[i]);
        if !v.is_finite() {
            return Err(ResonanceError::Evaluation { node: i });
        }
        out.push(v);
    }
    analyze(basis, &out)
}

/// Spectral derivative d/dt on the circle.
pub fn differentiate(basis: &SpectralBasis, field: &Field) -> Result<Field> {
    if basis.domain.kind != DomainKind::Circle {
        return Err(ResonanceError::Config(
            "spectral differentiation is only provided on the circle".into(),
        ));
    }
    let mut coeffs = vec![0.0; basis.n_modes()];
    for (i, m) in basis.modes.iter().enumerate() {
        match m.label {
            ModeLabel::Constant => {}
            ModeLabel::Cos(n) => {
                // d/dt cos nt / sqrt(pi) = -n sin nt / sqrt(pi)
                let sin_idx = basis
                    .modes
                    .iter()
                    .position(|mm| mm.label == ModeLabel::Sin(n))
                    .expect("paired sin mode");
                coeffs[sin_idx] += -(n as f64) * field.coeffs[i];
            }
            ModeLabel::Sin(n) => {
                let cos_idx = basis
                    .modes
                    .iter()
                    .position(|mm| mm.label == ModeLabel::Cos(n))
                    .expect("paired cos mode");
                coeffs[cos_idx] += n as f64 * field.coeffs[i];
            }
            ModeLabel::Sine(_) | ModeLabel::Sine2d(..) => unreachable!(),
        }
    }
    synthesize(basis, &coeffs)
}

/// Sign-split integrals (int_{w>0} w, int_{w<0} w) of a band-limited field.
///
/// On 1-d domains the nodal points are bracketed on the grid, refined by
/// bisection, and each signed segment is integrated by adaptive Simpson on the
/// exact mode sum. On the square the oversampled grid is classified nodewise.
pub fn sign_split_integral(basis: &SpectralBasis, w: &Field) -> (f64, f64) {
    match basis.domain.kind {
        DomainKind::Square => {
            let mut pos = 0.0;
            let mut neg = 0.0;
            for i in 0..w.samples.len() {
                let v = w.samples[i];
                if v > NODAL_TOL {
                    pos += basis.weight(i) * v;
                } else if v < -NODAL_TOL {
                    neg += basis.weight(i) * v;
                }
            }
            (pos, neg)
        }
        DomainKind::Interval | DomainKind::Circle => {
            let (lo, hi) = match basis.domain.kind {
                DomainKind::Interval => (0.0, PI),
                _ => (0.0, 2.0 * PI),
            };
            let eval = |x: f64| w.value_at_1d(basis, x);
            sign_split_1d(&eval, lo, hi, basis.domain.grid_size)
        }
    }
}

/// Sign-split integrals of an arbitrary smooth 1-d function: bracket zero
/// crossings on a uniform scan of `scan` points, refine by bisection, and
/// integrate each signed piece by adaptive Simpson.
pub fn sign_split_1d(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, scan: usize) -> (f64, f64) {
    let n = scan.max(16);
    let h = (hi - lo) / n as f64;
    let vals: Vec<f64> = (0..=n).map(|i| f(lo + i as f64 * h)).collect();
    let scale = vals
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    // Scan values this close to zero carry round-off sign noise; treat the
    // point itself as a segment break instead of trusting the sign.
    let tol = 1e-12 * scale;
    let mut breaks = vec![lo];
    for i in 1..=n {
        let x = lo + i as f64 * h;
        let (pv, v) = (vals[i - 1], vals[i]);
        if pv.abs() <= tol && i > 1 {
            breaks.push(x - h);
        }
        if pv.abs() > tol && v.abs() > tol && (pv > 0.0) != (v > 0.0) {
            breaks.push(bisect_zero(f, x - h, x));
        }
    }
    breaks.push(hi);
    let mut pos = 0.0;
    let mut neg = 0.0;
    for seg in breaks.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        if b - a < 1e-14 {
            continue;
        }
        let integral = adaptive_simpson(f, a, b, 1e-12);
        let mid = f(0.5 * (a + b));
        if mid > 0.0 {
            pos += integral;
        } else {
            neg += integral;
        }
    }
    (pos, neg)
}

fn bisect_zero(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || b - a < 1e-15 {
            return m;
        }
        if (fa > 0.0) == (fm > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Adaptive Simpson quadrature with absolute error control.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if depth > 40 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth + 1)
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth + 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    recurse(f, a, b, fa, fm, fb, whole, tol, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn interval(n: usize) -> SpectralBasis {
        build_basis(Domain::new(DomainKind::Interval, 4 * n.max(8)), n).unwrap()
    }

    #[test]
    fn interval_spectrum_is_analytic() {
        let b = interval(8);
        let eigs: Vec<f64> = b.groups.iter().map(|g| g.value).collect();
        assert_eq!(eigs, vec![1.0, 4.0, 9.0, 16.0, 25.0, 36.0, 49.0, 64.0]);
        assert!(b.groups.iter().all(|g| g.members.len() == 1));
    }

    #[test]
    fn circle_groups_are_pairs() {
        let b = build_basis(Domain::new(DomainKind::Circle, 64), 3).unwrap();
        let sizes: Vec<(f64, usize)> = b
            .groups
            .iter()
            .map(|g| (g.value, g.members.len()))
            .collect();
        assert_eq!(sizes, vec![(0.0, 1), (1.0, 2), (4.0, 2), (9.0, 2)]);
    }

    #[test]
    fn square_group_at_five_has_two_members() {
        let b = build_basis(Domain::new(DomainKind::Square, 32), 3).unwrap();
        let gi = b.group_at(5.0).unwrap();
        let labels: Vec<ModeLabel> = b.groups[gi]
            .members
            .iter()
            .map(|&m| b.modes[m].label)
            .collect();
        assert_eq!(labels.len(), 2);
        assert!(labels.contains(&ModeLabel::Sine2d(1, 2)));
        assert!(labels.contains(&ModeLabel::Sine2d(2, 1)));
    }

    #[test]
    fn orthonormality_within_tolerance() {
        for b in [
            interval(6),
            build_basis(Domain::new(DomainKind::Circle, 64), 4).unwrap(),
            build_basis(Domain::new(DomainKind::Square, 24), 4).unwrap(),
        ] {
            let n = b.n_modes();
            for i in 0..n {
                let mut ci = vec![0.0; n];
                ci[i] = 1.0;
                let fi = synthesize(&b, &ci).unwrap();
                for j in i..n {
                    let mut cj = vec![0.0; n];
                    cj[j] = 1.0;
                    let fj = synthesize(&b, &cj).unwrap();
                    let ip = b.quad_inner(&fi.samples, &fj.samples);
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(ip, expect, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn analyze_of_first_eigenfunction() {
        let b = interval(6);
        let samples: Vec<f64> = b
            .nodes()
            .iter()
            .map(|&x| (2.0 / PI).sqrt() * x.sin())
            .collect();
        let f = analyze(&b, &samples).unwrap();
        assert_abs_diff_eq!(f.coeffs[0], 1.0, epsilon = 1e-12);
        for c in &f.coeffs[1..] {
            assert_abs_diff_eq!(*c, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn synthesize_second_mode_sup_error() {
        let b = interval(6);
        let mut c = vec![0.0; 6];
        c[1] = 1.0;
        let f = synthesize(&b, &c).unwrap();
        for (i, &x) in b.nodes().iter().enumerate() {
            assert_abs_diff_eq!(
                f.samples[i],
                (2.0 / PI).sqrt() * (2.0 * x).sin(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn product_to_sum_on_circle() {
        // sin t * sin 2t = (cos t - cos 3t)/2: exactly two nonzero coefficients.
        let b = build_basis(Domain::new(DomainKind::Circle, 64), 5).unwrap();
        let samples: Vec<f64> = b.nodes().iter().map(|&t| t.sin() * (2.0 * t).sin()).collect();
        let f = analyze(&b, &samples).unwrap();
        let mut nonzero = 0;
        for (i, &c) in f.coeffs.iter().enumerate() {
            // Oracle: direct quadrature of f against each basis function.
            let table: Vec<f64> = b
                .nodes()
                .iter()
                .map(|&t| b.mode_value_1d(i, t))
                .collect();
            let direct = b.quad_inner(&samples, &table);
            assert_abs_diff_eq!(c, direct, epsilon = 1e-12);
            if c.abs() > 1e-12 {
                nonzero += 1;
                match b.modes[i].label {
                    ModeLabel::Cos(1) => assert_abs_diff_eq!(c, PI.sqrt() / 2.0, epsilon = 1e-12),
                    ModeLabel::Cos(3) => assert_abs_diff_eq!(c, -PI.sqrt() / 2.0, epsilon = 1e-12),
                    other => panic!("unexpected nonzero mode {other:?}"),
                }
            }
        }
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn parseval_and_round_trip() {
        let b = interval(8);
        let coeffs = vec![0.3, -1.2, 0.0, 0.7, 0.0, 0.1, -0.4, 0.05];
        let f = synthesize(&b, &coeffs).unwrap();
        let quad = b.quad_inner(&f.samples, &f.samples);
        let parseval: f64 = coeffs.iter().map(|c| c * c).sum();
        assert!((quad - parseval).abs() / parseval < 1e-10);
        let back = analyze(&b, &f.samples).unwrap();
        for (a, c) in back.coeffs.iter().zip(&coeffs) {
            assert_abs_diff_eq!(a, c, epsilon = 1e-12);
        }
    }

    #[test]
    fn project_splits_exactly() {
        let b = interval(6);
        let mut c = vec![0.0; 6];
        c[0] = 2.0;
        c[1] = 3.0;
        let f = synthesize(&b, &c).unwrap();
        let (in_group, comp) = project(&b, &f, 0).unwrap();
        assert_eq!(in_group, vec![2.0]);
        assert_abs_diff_eq!(comp.coeffs[1], 3.0, epsilon = 0.0);
        assert_abs_diff_eq!(comp.coeffs[0], 0.0, epsilon = 0.0);
    }

    #[test]
    fn project_circle_group() {
        // f = 4 cos 2t + sin 2t + cos 5t, group n=2.
        let b = build_basis(Domain::new(DomainKind::Circle, 64), 6).unwrap();
        let samples: Vec<f64> = b
            .nodes()
            .iter()
            .map(|&t| 4.0 * (2.0 * t).cos() + (2.0 * t).sin() + (5.0 * t).cos())
            .collect();
        let f = analyze(&b, &samples).unwrap();
        let gi = b.group_at(4.0).unwrap();
        let (in_group, comp) = project(&b, &f, gi).unwrap();
        // Normalized basis: coefficient of cos 2t/sqrt(pi) is 4 sqrt(pi).
        assert_abs_diff_eq!(in_group[0], 4.0 * PI.sqrt(), epsilon = 1e-10);
        assert_abs_diff_eq!(in_group[1], PI.sqrt(), epsilon = 1e-10);
        for &mi in &b.groups[gi].members {
            assert_abs_diff_eq!(comp.coeffs[mi], 0.0, epsilon = 0.0);
        }
        // A = int f cos 2t dt = 4 pi, reachable from the normalized coefficient.
        assert_abs_diff_eq!(in_group[0] * PI.sqrt(), 4.0 * PI, epsilon = 1e-9);
    }

    #[test]
    fn resolvent_single_mode_closed_forms() {
        let b = interval(6);
        let mut c = vec![0.0; 6];
        c[1] = 1.0;
        let f = synthesize(&b, &c).unwrap();
        let u = resolvent_solve(&b, 1.0, &f, Some(0)).unwrap();
        assert_abs_diff_eq!(u.coeffs[1], -1.0 / 3.0, epsilon = 1e-14);

        let mut c1 = vec![0.0; 6];
        c1[0] = 1.0;
        let f1 = synthesize(&b, &c1).unwrap();
        let u1 = resolvent_solve(&b, 2.5, &f1, None).unwrap();
        assert_abs_diff_eq!(u1.coeffs[0], 1.0 / 1.5, epsilon = 1e-14);
    }

    #[test]
    fn resolvent_rejects_non_orthogonal_forcing() {
        let b = interval(6);
        let mut c = vec![0.0; 6];
        c[0] = 1.0;
        let f = synthesize(&b, &c).unwrap();
        match resolvent_solve(&b, 1.0, &f, Some(0)) {
            Err(ResonanceError::NonOrthogonalForcing { .. }) => {}
            other => panic!("expected NonOrthogonalForcing, got {other:?}"),
        }
    }

    #[test]
    fn resolvent_residual_is_mode_exact() {
        let b = interval(8);
        let coeffs = vec![0.0, 0.4, -0.3, 0.2, 0.0, 0.7, -0.1, 0.9];
        let f = synthesize(&b, &coeffs).unwrap();
        let shift = 1.0;
        let u = resolvent_solve(&b, shift, &f, Some(0)).unwrap();
        for (i, m) in b.modes.iter().enumerate() {
            let r = (shift - m.eigenvalue) * u.coeffs[i] - f.coeffs[i];
            assert!(r.abs() < 1e-12, "mode {i} residual {r}");
        }
        assert_abs_diff_eq!(u.coeffs[0], 0.0, epsilon = 0.0);
    }

    #[test]
    fn apply_pointwise_zero_and_identity_cases() {
        let b = interval(8);
        let z = Field::zero(&b);
        let out = apply_pointwise1(&b, |_| 0.0, &z).unwrap();
        assert_eq!(out.l2_norm(), 0.0);
        let out = apply_pointwise1(&b, f64::atan, &z).unwrap();
        assert_eq!(out.l2_norm(), 0.0);
    }

    #[test]
    fn apply_pointwise_tanh_against_fine_quadrature() {
        // tanh(10 phi_1) projected on phi_1, oracle at 10x grid resolution.
        let n = 8;
        let b = build_basis(Domain::new(DomainKind::Interval, 64), n).unwrap();
        let mut c = vec![0.0; n];
        c[0] = 10.0;
        let u = synthesize(&b, &c).unwrap();
        let g = apply_pointwise1(&b, f64::tanh, &u).unwrap();
        let fine = 640;
        let h = PI / fine as f64;
        let mut oracle = 0.0;
        for i in 0..fine {
            let x = (i as f64 + 0.5) * h;
            let phi = (2.0 / PI).sqrt() * x.sin();
            oracle += h * (10.0 * phi).tanh() * phi;
        }
        assert_abs_diff_eq!(g.coeffs[0], oracle, epsilon = 1e-8);
    }

    #[test]
    fn apply_pointwise_rejects_non_finite() {
        let b = interval(6);
        let z = Field::zero(&b);
        match apply_pointwise1(&b, |u| 1.0 / u, &z) {
            Err(ResonanceError::Evaluation { .. }) => {}
            other => panic!("expected evaluation error, got {other:?}"),
        }
    }

    #[test]
    fn differentiate_circle() {
        let b = build_basis(Domain::new(DomainKind::Circle, 64), 4).unwrap();
        let samples: Vec<f64> = b.nodes().iter().map(|&t| (3.0 * t).sin()).collect();
        let f = analyze(&b, &samples).unwrap();
        let df = differentiate(&b, &f).unwrap();
        for (i, &t) in b.nodes().iter().enumerate() {
            assert_abs_diff_eq!(df.samples[i], 3.0 * (3.0 * t).cos(), epsilon = 1e-10);
        }
    }

    #[test]
    fn oversampling_rule_enforced() {
        assert!(build_basis(Domain::new(DomainKind::Interval, 16), 8).is_err());
    }

    #[test]
    fn sign_split_of_sin_2x() {
        let b = interval(6);
        let mut c = vec![0.0; 6];
        c[1] = 1.0;
        let phi2 = synthesize(&b, &c).unwrap();
        let (pos, neg) = sign_split_integral(&b, &phi2);
        // int_0^{pi/2} sqrt(2/pi) sin 2x dx = sqrt(2/pi)
        assert_abs_diff_eq!(pos, (2.0 / PI).sqrt(), epsilon = 1e-10);
        assert_abs_diff_eq!(neg, -(2.0 / PI).sqrt(), epsilon = 1e-10);
    }
}
