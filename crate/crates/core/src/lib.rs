//! φ-spline (kernel) interpolation on spheres and bounded Euclidean domains.
//!
//! The numerical core is generic over the scalar type through [`Real`]
//! (`f32`/`f64`); the `*64` aliases below fix it to `f64`, which is what the
//! convergence harness and the command-line driver use.

pub mod cli;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod interpolation;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod orthopoly;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SpherePoint64 = geometry::SpherePoint<f64>;
pub type EuclidPoint64 = geometry::EuclidPoint<f64>;
pub type Domain64 = geometry::Domain<f64>;
pub type SphereKernel64 = kernels::SphereSeriesKernel<f64>;
pub type EuclidKernel64 = kernels::EuclidRadialKernel<f64>;
pub type SphereInterpolant64 = interpolation::Interpolant<f64, SphereKernel64>;
pub type EuclidInterpolant64 = interpolation::Interpolant<f64, EuclidKernel64>;
