//! Simulator for a rigid colloidal particle immersed in a simplified
//! Ericksen-Leslie nematic liquid crystal, solved on a fixed reference
//! annulus through a localized volume-preserving change of variables.
//!
//! The crate is organized around the pipeline
//! `grid -> rigid -> transform -> operators -> solver -> diagnostics`,
//! with `oracle` providing independent brute-force references and the
//! binary target exposing the batch CLI.

pub mod diagnostics;
pub mod grid;
pub mod io;
pub mod operators;
pub mod oracle;
pub mod real;
pub mod rigid;
pub mod scenario;
pub mod solver;
pub mod transform;

pub use real::Real;

use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum Error {
    #[error("grid: {0}")]
    Grid(String),
    #[error("field does not conform to grid: expected {expected} values, got {got}")]
    NonConforming { expected: usize, got: usize },
    #[error("rigid body: {0}")]
    Rigid(String),
    #[error("transform: {0}")]
    Transform(String),
    #[error("gap violated: particle entered the cutoff transition zone ({0})")]
    GapViolation(String),
    #[error("operators: {0}")]
    Operators(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error("iterative solver did not converge: {0}")]
    NonConvergence(String),
    #[error("initial data rejected: {0}")]
    Validation(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Default scalar type of the concrete aliases below.
pub type Scalar = f64;

pub type Grid = grid::AnnulusGrid<Scalar>;
pub type ScalarField = grid::ScalarField<Scalar>;
pub type VectorField = grid::VectorField<Scalar>;
pub type DirectorField = grid::DirectorField<Scalar>;
pub type RigidBody = rigid::RigidBody<Scalar>;
pub type RigidState2D = rigid::RigidState2D<Scalar>;
pub type RigidState3D = rigid::RigidState3D<Scalar>;
pub type TransformField = transform::TransformField<Scalar>;
pub type CutoffSpec = transform::CutoffSpec<Scalar>;
pub type PhysicalParams = operators::PhysicalParams<Scalar>;
pub type SystemState = solver::SystemState<Scalar>;
pub type Solver = solver::Solver<Scalar>;
pub use solver::Scenario;
