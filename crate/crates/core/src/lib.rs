//! Sensor placement by mutual-information maximization over a Gaussian
//! model, compiled to spin polynomials and QUBO.
//!
//! Pipeline: [`model::validate_covariance`] → [`expansion::expand_objective`]
//! → [`quadratize::build_qubo`] → [`solve`] → [`report::report`]. The
//! [`oracle`] module computes the same quantities directly from block
//! determinants and is used to cross-check every stage.

pub mod error;
pub mod expansion;
pub mod io;
pub mod model;
pub mod oracle;
pub mod quadratize;
pub mod report;
pub mod solve;

pub use error::{Error, Result};
pub use expansion::{expand_objective, masked_determinant, masking_value, reduce_monomial};
pub use model::{
    evaluate_polynomial, selection_from_spins, validate_covariance, BooleanPolynomial,
    CovarianceMatrix, MaskingMatrix, Monomial, SensorSelection, SpinAssignment, SpinPolynomial,
    VariableKind,
};
pub use oracle::{
    brute_force_optimum, entropy, interpolate_polynomial, mutual_information, subset_objective,
};
pub use quadratize::{
    add_cardinality_penalty, build_qubo, quadratize, qubo_to_ising, spin_to_boolean, QuboModel,
    QuboOptions,
};
pub use report::{report, sweep_cardinality, PlacementReport, SolverChoice};
pub use solve::{project_solution, solve_annealing, solve_exhaustive, AnnealParams, SolveResult};
