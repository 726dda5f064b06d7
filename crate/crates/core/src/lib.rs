//! Numerical laboratory for the torsion problem with constant Neumann data
//! on sector-like domains, probing rigidity of spherical caps.
//!
//! The crate is organised bottom-up:
//!
//! * [`profiles`]: convex operator profiles `f` generating `L_f u = div(f'(|∇u|) ∇u/|∇u|)`.
//! * [`geometry`]: warped-product space forms (`K = 0, -1, +1`) and 2-D cone sections.
//! * [`oracles`]: closed-form radial solutions used as ground truth.
//! * [`mesh`]: boundary-fitted curvilinear sector grids.
//! * [`solver`]: mixed Dirichlet/Neumann solver for `L_f u = -1` and `Δu + NKu = -1`.
//! * [`identities`]: `W`-matrix, Newton inequality, Pohozaev and `S₂` audits (Euclidean).
//! * [`pfunction`]: P-function audits in space forms.
//! * [`rigidity`]: deviation scans, convexity contrasts and convergence studies.
//! * [`config`] / [`report`]: experiment configuration and deterministic serialization.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod field;
pub mod geometry;
pub mod identities;
pub mod linalg;
pub mod mesh;
pub mod oracles;
pub mod pfunction;
pub mod profiles;
pub mod quadrature;
pub mod report;
pub mod rigidity;
pub mod solver;

pub use error::{Error, Result};
