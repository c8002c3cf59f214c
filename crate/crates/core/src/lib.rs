//! Numerical G₂-structure calculus on a 7-dimensional chart.
//!
//! The crate builds metrics from positive 3-forms, extracts intrinsic torsion
//! by finite differences or analytic jets, deforms structures conformally and
//! by vector fields, and realizes warped-product structures over the nearly
//! Kähler six-sphere. All numerics are generic over [`Real`] (`f32`, `f64`);
//! the `*f` aliases below fix `f64`.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod chartfield;
pub mod cli;
mod combinatorics;
pub mod deform;
pub mod error;
pub mod g2algebra;
pub mod linalg;
pub mod report;
pub mod registry;
pub mod scalar;
pub mod tensor7;
pub mod warped;

pub use error::{Error, Result};
pub use scalar::{Mat7, Point7, Real};

pub use combinatorics::{perm_sign, sorted_subsets};

pub type Tensor7f = tensor7::Tensor7<f64>;
pub type Metric7f = tensor7::Metric7<f64>;
pub type G2Pointf = g2algebra::G2Point<f64>;
pub type G2Fieldf = chartfield::G2Field<f64>;
pub type TorsionDecompf = chartfield::TorsionDecomp<f64>;
pub type WarpedModelf = warped::WarpedModel<f64>;
