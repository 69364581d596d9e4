//! Graph convolution by heat-kernel diffusion with a trainable diffusion
//! scale per node.
//!
//! The diffusion `e^{-s_p L̂}` is approximated by a truncated expansion in
//! Chebyshev, Hermite or Laguerre polynomials of the normalized Laplacian, so
//! that one layer costs `m` sparse products. A dense eigendecomposition backs
//! an exact reference path for small graphs.

pub mod datasets;
pub mod error;
pub mod graph;
pub mod kernel;
pub mod nn;
pub mod specfun;
pub mod spectral;
pub mod train;

pub use error::{DataError, Error, Result};
pub use graph::{Graph, SparseMatrix};
pub use kernel::{Family, PolynomialBasis, ScaleVector};
pub use spectral::SpectralDecomposition;
