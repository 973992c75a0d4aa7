//! Numerical testbench for Carleman estimates and logarithmic stability of
//! the Cauchy problem for `P u = −Δ_g u + ⟨X, ∇_g u⟩ + p u` on an annulus.
//!
//! The annulus `D = {r0 < |x| < r1}` has inner circle `S` and outer circle
//! `Gamma`; Cauchy data live on `Gamma`. Module map:
//!
//! * [`grid`]: polar grid, stencils and quadrature.
//! * [`fields`]: metric, lower-order coefficients, `P` and the magnetic operator.
//! * [`weight`]: base weight `ψ`, factors `φ`, `σ` and overflow-safe weights.
//! * [`norms`]: boundary derivatives, `C(u)`, `H²` and `H^η` norms.
//! * [`carleman`]: both sides of the Carleman estimate and empirical constants.
//! * [`continuation`]: stability modulus, `s`-minimization, Cauchy solver and rate fits.
//! * [`stokes`]: the Stokes system with drift.

pub mod banded;
pub mod carleman;
pub mod continuation;
pub mod error;
pub mod expr;
pub mod fields;
pub mod grid;
pub mod norms;
pub mod operators;
pub mod sparse;
pub mod stokes;
pub mod weight;

pub use error::{Error, Result};
pub use fields::{CoefficientSet, MagneticPotential, MetricField};
pub use grid::{BoundaryTag, GridField, Point, PolarGrid, C64};
pub use weight::{BaseWeight, CarlemanParams, LogScaled};
