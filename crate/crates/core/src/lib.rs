//! Numerical inverse scattering transform for the focusing Davey-Stewartson II
//! system.
//!
//! The pipeline: compute generalized scattering data from an initial
//! potential by solving a conjugate-linear Lippmann-Schwinger equation per
//! spectral point (`forward`), push the data forward in time by explicit
//! exponential factors (`evolution`), then reconstruct the solution at any
//! `(z, t)` by solving a real-linear Fredholm equation built from Cauchy and
//! boundary-arc integral operators (`inverse`). A split-step Fourier
//! integrator (`splitstep`) and a set of structural identities (`validation`)
//! provide independent checks, and `blowup`-style scans map where the
//! reconstruction operator degenerates.

pub mod bspace;
pub mod config;
pub mod error;
pub mod evolution;
pub mod fft;
pub mod forward;
pub mod grid;
pub mod inverse;
pub mod io;
pub mod potentials;
pub mod quad;
pub mod solver;
pub mod splitstep;
pub mod validation;

pub use error::{DataError, ForwardError, GridError, InverseError, SimError};
pub use grid::{make_grid, ComplexField, ComplexGrid, DiskSpec, K0Policy};

/// Complex scalar type used throughout.
pub type C64 = num_complex::Complex64;
