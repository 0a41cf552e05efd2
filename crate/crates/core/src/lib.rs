//! Scale/speed construction of one-dimensional diffusions, regular Dirichlet
//! subspaces given by characteristic sets, and numerical checks of their
//! monotone convergence.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod form_assembly;
pub mod path_sim;
pub mod scale_measure;
pub mod scenario;
pub mod semigroup_mosco;
pub mod weak_convergence;

pub use error::{Error, Result};
