//! Numerical comparison of invariant metrics on model domains in `C^n`.
//!
//! The crate computes the Kobayashi-Royden, Bergman and Kähler-Einstein metrics on
//! concrete domains (balls, polydisks, the punctured disk, annuli and a weakly
//! pseudoconvex domain in `C^3`), together with their curvature, and compares them.

pub mod bergman;
pub mod chebyshev;
pub mod cholesky;
pub mod compare;
pub mod domains;
pub mod einstein;
pub mod error;
pub mod geometry;
pub mod kobayashi;
pub mod quadrature;
pub mod rng;
pub mod simplex;

pub use domains::{DomainSpec, SampleSet};
pub use error::{Error, Result};
pub use geometry::{ComplexPoint, TangentVector, C64};
