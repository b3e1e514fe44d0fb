//! Closed-form nonlinear Galerkin solutions of the exponential-utility HJB
//! equation for an investor holding forwards on non-tradable assets, plus the
//! independent checks used to validate them: Gauss-Laguerre evaluation of the
//! projection integrals, an explicit finite-difference solver and Monte Carlo
//! simulation of the controlled wealth.

pub mod error;
pub mod fd;
pub mod galerkin;
pub mod harness;
pub mod mc;
pub mod model;
pub mod pricing;
pub mod quadrature;
pub mod trial;

pub use error::{Error, Result};
