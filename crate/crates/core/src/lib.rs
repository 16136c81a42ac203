//! Disorder-averaged resolvent, density of states and two-point correlation
//! functions of the Anderson tight-binding model `H = h·Δ_adj + V_ω` on
//! `Z^d`, computed from the random-walk expansion of the resolvent with an
//! a priori geometric tail bound on every truncated series.
//!
//! * [`walks`]: nearest-neighbour walk enumeration and profile folds.
//! * [`moments`]: moments of the single-site law, continued across the
//!   real axis by contour deformation.
//! * [`expansion`]: the truncated series and their certificates.
//! * [`dos`]: density-of-states curves and regime checks.
//! * [`oracle`]: finite-box Monte Carlo used as an independent check.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contour;
pub mod distribution;
pub mod dos;
pub mod error;
pub mod expansion;
pub mod moments;
pub mod oracle;
pub mod walks;

pub use distribution::{Distribution, DistributionSpec};
pub use error::{Error, Result};
