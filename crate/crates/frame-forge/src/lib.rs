//! Spline-type spaces generated by localized atoms on a discretized torus, and
//! frame surgery: piecing together portions of several frames over a covering.
//!
//! The crate is organized bottom-up:
//!
//! * [`grid`]: periodic domains, node sets with multiplicity, polynomial weights.
//! * [`amalgam`]: atom families, amalgam norms and the Schur-type multiplier calculus.
//! * [`frame`]: Gram matrices, frame bounds, pseudo-inverses and canonical duals.
//! * [`surgery`]: coverings, partitions of unity and the approximate reconstruction operator.
//! * [`gabor`]: short-time Fourier transform, Gabor systems and quilted Gabor frames.
//! * [`sis`] and [`kn`]: lattice-translate systems, Kohn-Nirenberg symbols and Gabor multipliers.
//! * [`sampling`]: reproducing kernels and quilted sampling sets.
//!
//! Grid functions are column vectors of complex samples; inner products use the
//! cell volume of the grid as quadrature weight.

pub mod amalgam;
pub mod atoms;
pub mod error;
pub mod fourier;
pub mod frame;
pub mod gabor;
pub mod grid;
pub mod kn;
pub mod quadrature;
pub mod sampling;
pub mod sis;
pub mod stats;
pub mod surgery;

pub use error::{Error, Result};

/// Library version recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix; atom families store one atom per column.
pub type CMatrix = nalgebra::DMatrix<C64>;

/// Dense complex vector; a function sampled on every grid point.
pub type CVector = nalgebra::DVector<C64>;

#[cfg(doctest)]
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/grids.md")]
    pub struct Grids;
    #[doc = include_str!("../../../book/src/frames.md")]
    pub struct Frames;
    #[doc = include_str!("../../../book/src/surgery.md")]
    pub struct Surgery;
    #[doc = include_str!("../../../book/src/gabor.md")]
    pub struct Gabor;
    #[doc = include_str!("../../../book/src/multipliers.md")]
    pub struct Multipliers;
    #[doc = include_str!("../../../book/src/sampling.md")]
    pub struct Sampling;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
