//! Shared fixtures for the solver benchmarks.

use fockstab::model::{self, SystemParams};
use fockstab::sweep::Truncation;
use fockstab::{liouvillian, steady_state, DensityMatrix, HilbertSpace, Liouvillian, Operator};

/// Default stabilization truncation.
pub const DIMS: Truncation = Truncation { storage: 5, cooling: 15 };

/// Hamiltonian and collapse operators of the stabilization operating point.
pub fn stabilization_model(dims: Truncation) -> (Operator, Vec<Operator>) {
    let params = SystemParams::stabilization();
    let space = HilbertSpace::two_cavity(dims.storage, dims.cooling).expect("valid dims");
    let h = model::driven_hamiltonian(&params, &space).expect("hamiltonian");
    let ops = model::collapse_operators(&params, &space).expect("collapse operators");
    (h, ops)
}

pub fn stabilization_liouvillian(dims: Truncation) -> Liouvillian {
    let (h, ops) = stabilization_model(dims);
    liouvillian(&h, &ops).expect("liouvillian")
}

/// Reduced storage state of the operating point.
pub fn storage_state(dims: Truncation) -> DensityMatrix {
    let rho = steady_state(&stabilization_liouvillian(dims)).expect("steady state");
    rho.reduce_to(fockstab::fock::STORAGE).expect("storage mode")
}
