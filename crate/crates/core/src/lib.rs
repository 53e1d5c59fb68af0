//! Translating solutions of the radially symmetric flow `V = H^alpha + b`.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod io;
pub mod ode;
pub mod pde;
pub mod profile;
pub mod speed;

pub use error::{Error, Result};
pub use flow::{
    classify_regime, curvature_radial, signed_pow, FlowParams, PowerSpec, RegimeTag, Slope,
};
