//! Solvers and analysis for driven-dissipative dipolar spin lattices.
//!
//! Three independent routes to the steady state are provided: exact
//! density-matrix evolution ([`lindblad`]), quantum-jump trajectories
//! ([`trajectories`]) and variational product states ([`meanfield`]). The
//! [`analysis`] module turns sweeps into susceptibilities, Weibull peak fits,
//! finite-size scaling exponents and a field-sensitivity estimate.
//!
//! All rates and energies are angular frequencies in rad·MHz (rad/µs);
//! times are in µs.

pub mod analysis;
pub mod error;
pub mod kernel;
pub mod lattice;
pub mod linalg;
pub mod lindblad;
pub mod meanfield;
pub mod observables;
pub mod operators;
pub mod optimize;
pub mod trajectories;

pub use error::{Error, Result};
pub use lattice::{Bond, Lattice, LatticeSpec};
pub use lindblad::DensityMatrix;
pub use operators::{ModelParams, Pauli, SparseOperator};
pub use trajectories::{EnsembleResult, PureState, TrajectoryConfig, TrajectoryRecord};
