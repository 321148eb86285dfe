//! Pseudo-Hermitian multiqubit Hamiltonians with twisted exceptional points.
//!
//! The crate builds the N-qubit Hamiltonian with complex transverse fields
//! parametrized by a control point (x, y), computes its sorted (real)
//! spectra and Riemann sheets, integrates the Schrödinger equation along
//! closed control loops that wind around the exceptional point at (0, 1),
//! extracts the induced eigenstate permutations and studies the group they
//! generate. Dilation and β-dyne embeddings of the Hamiltonian are included.

pub mod betadyne;
pub mod dilation;
pub mod dynamics;
pub mod eigen;
pub mod error;
pub mod hamiltonian;
pub mod linalg;
pub mod permutation;
pub mod spectral;

pub use error::{Error, Result};
pub use hamiltonian::{FieldPoint, SystemConfig};
pub use linalg::ComplexMatrix;
pub use num_complex::Complex64;

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
