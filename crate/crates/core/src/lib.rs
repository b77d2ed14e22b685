//! Classical simulator for period-finding computations of the unit group and of principal ideals
//! in real quadratic orders, with brute-force oracles for verification.

pub mod error;
pub mod ideals;
pub mod lattice;
pub mod numfield;
pub mod oracle;
pub mod pip;
pub mod qsim;
pub mod unitgroup;

pub use error::{Error, Result};

/// Double-precision lattice used by the pipelines.
pub type Lattice = lattice::RealLattice<f64>;
pub type Lattice32 = lattice::RealLattice<f32>;
/// Double-precision outcome distribution.
pub type Spectrum = qsim::SpectrumDistribution<f64>;
pub type Spectrum32 = qsim::SpectrumDistribution<f32>;
