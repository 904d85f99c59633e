//! Benchmark fixtures shared by the criterion targets.

use dqs_core::operators::{build_hamiltonian, build_jump_operators};
use dqs_core::trajectories::TrajectorySystem;
use dqs_core::{Lattice, LatticeSpec, ModelParams, SparseOperator};

/// Reference parameters near the χ peak.
pub fn params() -> ModelParams {
    ModelParams {
        omega: 2.5,
        ..ModelParams::default()
    }
}

pub fn operators(nx: usize, ny: usize) -> (Lattice, SparseOperator, Vec<SparseOperator>) {
    let p = params();
    let l = Lattice::build(&LatticeSpec::planar(nx, ny), p.coupling).unwrap();
    let h = build_hamiltonian(&l, &p).unwrap();
    let c = build_jump_operators(&l, &p).unwrap();
    (l, h, c)
}

pub fn system(nx: usize, ny: usize) -> TrajectorySystem {
    let (_, h, c) = operators(nx, ny);
    TrajectorySystem::new(&h, &c).unwrap()
}
