//! Spectral Lyapunov-Schmidt solvers and solvability-condition checkers for
//! semilinear elliptic and periodic problems with the linear part at
//! resonance, on the interval, the square and the circle.

pub mod config;
pub mod engine;
pub mod error;
pub mod problem;
pub mod report;
pub mod solvability;
pub mod spectral;
pub mod systems;

pub use error::{ResonanceError, Result};

/// Solve a problem with the family's solver.
pub fn solve_problem(
    problem: &problem::ProblemSpec,
    opts: &engine::SolveOptions,
) -> Result<engine::SolveReport> {
    use problem::Family;
    match problem.family {
        Family::ScalarResonant => engine::solve_scalar_resonant(problem, opts),
        Family::ScalarMulti => engine::solve_multi_resonant(problem, opts),
        Family::PeriodicLl | Family::PeriodicDamped | Family::PeriodicFn => {
            engine::solve_periodic(problem, opts)
        }
        Family::SystemLinear => systems::solve_system_linear(problem),
        Family::SystemNonresonant => systems::solve_system_nonresonant(problem, opts),
        Family::SystemCaseA | Family::SystemCaseB | Family::SystemCaseC => {
            systems::solve_system_resonant(problem, opts)
        }
    }
}
