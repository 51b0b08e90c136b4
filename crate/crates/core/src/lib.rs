//! Desk-scale laboratory for the implicit midpoint rule applied to the
//! finite-difference discrete nonlinear Schrödinger equation on a Dirichlet
//! lattice, together with a numerical backward-error-analysis engine that
//! builds the scheme's modified energies and measures their defect,
//! conservation and long-time stability properties.

pub mod bea;
pub mod error;
pub mod experiments;
pub mod lattice;
pub mod state;
pub mod stepper;
pub mod testutil;

pub use error::CoreError;
pub use lattice::{FieldState, GridSpec, Lattice, ModelParams, ResolventSign};
pub use num_complex::Complex64;
pub use state::{LatticeState, PairState};
pub use stepper::{SolverParams, StepDiagnostics};
