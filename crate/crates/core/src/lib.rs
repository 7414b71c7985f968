//! Simulation and pairwise-likelihood inference for Markovian space-time
//! max-stable processes.
//!
//! The processes handled here follow the max-autoregressive recursion
//!
//! ```text
//! X(t, x) = max(a X(t-1, S x), (1 - a) Z(t, x))
//! ```
//!
//! where `Z(t, ·)` are iid simple max-stable spatial fields (Smith, Schlather
//! or a von Mises–Fisher storm model on the sphere) and `S` is either a
//! planar translation `x ↦ x − τ` or a rotation of the unit sphere.
//!
//! Module map:
//!
//! - [`geometry`]: planar/spherical sites, translations, rotation matrices.
//! - [`point_process`]: seeded streams and the Poisson samplers behind every
//!   spectral representation.
//! - [`spatial`]: spatial innovation simulators plus the Smith exponent
//!   function (closed form and quadrature).
//! - [`markov`]: the space-time recursions, the truncated moving-max
//!   representation and the finite-dimensional distribution function.
//! - [`dependence`]: extremal coefficient and F-madogram, analytic and
//!   empirical.
//! - [`inference`]: bivariate densities, pairwise log-likelihoods, the two
//!   estimation schemes and the Nelder–Mead optimizer they use.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dependence;
pub mod error;
pub mod geometry;
pub mod inference;
pub mod markov;
pub mod point_process;
pub mod quadrature;
pub mod spatial;
pub mod special;

pub use error::{Error, Result};
pub use geometry::{PlanarSite, RotationSpec, SphereSite};
pub use markov::{MarkovParams, SpaceTimeField};
pub use point_process::SeededStream;
