//! Numerical laboratory for the Keller–Segel system at the critical
//! diffusion exponent `m = 2 − 2/d`.
//!
//! * [`fields`]: radial grids, fields and the observables evaluated on them.
//! * [`lane_emden`]: shooting for the Lane–Emden control family, the mass
//!   curve `M(γ)`, and the critical masses.
//! * [`bounds`]: explicit small-mass constants and inequality checkers.
//! * [`evolve`]: mass-conserving radial finite-volume solver with streaming
//!   diagnostics.
//! * [`acceptance`]: the acceptance battery.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Stencil loops read neighbours at `i ± 1`; explicit indices are clearer.
#![allow(clippy::needless_range_loop)]

pub mod acceptance;
pub mod bounds;
pub mod error;
pub mod evolve;
pub mod fields;
pub mod io;
pub mod lane_emden;
pub mod ode;

pub use error::{KsError, Result};
pub use fields::{RadialField, RadialGrid};
