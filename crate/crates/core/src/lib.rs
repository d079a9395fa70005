//! Numerics for generalised Lévy areas of pairs of independent Gaussian
//! processes: covariance kernels and Gram factorisations, 1D/2D
//! p-variation and Young integrals, dyadic approximations of the Lévy
//! kernel, Monte Carlo sampling, and spectral characteristic functions.

pub mod checks;
pub mod covariance;
pub mod error;
pub mod levy_kernel;
pub mod numeric;
pub mod pvariation;
pub mod simulate;
pub mod spectral;

pub use covariance::{CovKernel, GridGram, KernelKind, LowerFactor, NodeTable, Rectangle, Table, Weight};
pub use error::{LevyError, Result};
