//! Numerical laboratory for the `O(1/N)` mean-field limit of weakly interacting bosons.
//!
//! The crate propagates the exact `N`-body Schrödinger equation with `1/N` pair coupling on a
//! periodic tensor grid, the one-body Hartree equation, the kernels of the quadratic (Bogoliubov)
//! fluctuation dynamics and a truncated Fock-space model of the fluctuation generators, and
//! compares them against each other.
//!
//! Conventions shared by every module:
//!
//! * space is a 1D torus `[0, L)` sampled at `M` points with spacing `dx = L / M`;
//! * `L²` inner products are Riemann sums weighted by `dx`, and the discrete delta is `1/dx`;
//! * the one-body Hamiltonian is `-Δ` (no factor ½), realised spectrally as multiplication by
//!   `k²` in discrete Fourier space.

pub mod bogoliubov;
pub mod combinatorics;
pub mod error;
pub mod fock;
pub mod grid;
pub mod harness;
pub mod hartree;
pub mod linalg;
pub mod nbody;

pub use error::{Error, Result};
pub use grid::{GridSpec, PotentialSpec, Wavefunction};
