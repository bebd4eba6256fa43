//! Product-form solution of the closed car-sharing network.
//!
//! Stations are single-server queues with geometric factors `(e_i/μ_i)^n`,
//! delay links are infinite-server queues with Poisson-like factors
//! `(e_l T_l)^n / n!`. The normalization constant G(0..N) comes from the
//! convolution algorithm, and a brute-force enumerator over all population
//! vectors serves as the oracle for small instances.

mod brute;
mod convolution;
mod metrics;
mod output;
mod traffic;

pub use brute::{brute_force_distribution, BruteForceDistribution, MAX_STATES};
pub use convolution::{convolution, convolution_up_to, convolve, queue_factors, NormalizationTable, QueueFactor};
pub use metrics::{fleet_sweep, metrics, metrics_for_population, Complements, NetworkMetrics};
pub use output::{availability_table_csv, metrics_csv, metrics_json};
pub use traffic::{solve_traffic, VisitRatios};

use thiserror::Error;

use crate::netmodel::Violation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("invalid network spec ({} violations), first: {}", .0.len(), .0[0])]
    Invalid(Vec<Violation>),
    #[error("station routing chain is not irreducible")]
    Ergodicity,
    #[error("normalization constant left the floating-point range at population {population}")]
    NumericalRange { population: usize },
    #[error("state space of {states:e} states exceeds the enumeration limit")]
    Capacity { states: f64 },
    #[error("normalization table covers populations up to {available}, population {requested} requested")]
    PopulationOutOfRange { requested: usize, available: usize },
}

/// Validation gate shared by the solver entry points.
pub(crate) fn check_spec(spec: &crate::netmodel::NetworkSpec) -> Result<(), SolveError> {
    let violations = crate::netmodel::validate(spec);
    if violations.is_empty() {
        return Ok(());
    }
    if violations.iter().any(|v| matches!(v, Violation::Irreducibility { .. })) {
        return Err(SolveError::Ergodicity);
    }
    Err(SolveError::Invalid(violations))
}
