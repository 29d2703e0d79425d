//! Numerical laboratory for mean-curvature-flow neckpinches of graphs over the
//! cylinder, simulated in rescaled blowup variables.

// `!(x > 0.0)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod lcg;
pub mod modulation;
pub mod oracles;
pub mod rescaled;

pub use error::{Error, Result};
pub use grid::{Field, Grid};
