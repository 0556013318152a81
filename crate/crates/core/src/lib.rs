//! Numerical toolkit for rank-2 Higgs bundles on nodal Riemann surfaces:
//! plumbing charts, self-duality residuals, model solutions on the neck,
//! twisted cohomology of local systems and the linearized operator family
//! near a node.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod fields;
pub mod fit;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod linop;
pub mod localsys;
pub mod models;
pub mod surface;

pub use error::{Error, Result};
