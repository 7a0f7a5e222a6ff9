use thiserror::Error;

/// Errors produced by the spectral core and the solvers built on it.
#[derive(Debug, Error)]
pub enum ResonanceError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error(
        "forcing is not orthogonal to the resonant eigenspace: |<f, phi>| = {overlap:e} exceeds tolerance {tol:e} (group eigenvalue {eigenvalue})"
    )]
    NonOrthogonalForcing {
        eigenvalue: f64,
        overlap: f64,
        tol: f64,
    },

    #[error(
        "resonant mode {mode} is non-orthogonal in component {component}: |coefficient| = {overlap:e} exceeds tolerance {tol:e}"
    )]
    ResonantModeNonOrthogonal {
        mode: usize,
        component: char,
        overlap: f64,
        tol: f64,
    },

    #[error("pointwise map produced a non-finite value at node {node}")]
    Evaluation { node: usize },

    #[error("eigenvalue group {group} has multiplicity {multiplicity}; a simple eigenvalue is required")]
    Multiplicity { group: usize, multiplicity: usize },

    #[error("coupling matrix has complex eigenvalues (discriminant {discriminant:e}); only real spectra are supported")]
    ComplexSpectrum { discriminant: f64 },

    #[error("specification error: {0}")]
    Spec(String),
}

pub type Result<T> = std::result::Result<T, ResonanceError>;
