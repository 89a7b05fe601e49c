//! Adaptive quadratic finite elements for the two-dimensional obstacle problem.
//!
//! The discrete problem uses P2 Lagrange elements with the obstacle constraint imposed
//! at interior edge midpoints. It is solved by a primal-dual active set iteration;
//! residual error indicators drive Dörfler marking and newest vertex bisection.

pub mod adapt;
pub mod assembly;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod mesh;
pub mod multiplier;
pub mod problems;
pub mod quadrature;
pub mod spaces;
pub mod vi_solver;

pub use error::{FemError, Result};
pub use mesh::{Domain, Mesh, Point};
