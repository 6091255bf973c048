//! Interval-valued kriging with penalized Newton weights, variogram tools and
//! a design snow load pipeline.

// `!(x > 0.0)` style checks deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cv;
pub mod error;
pub mod intervals;
pub mod kriging;
pub mod optimizer;
pub mod simulate;
pub mod snowload;
pub mod variogram;

pub use error::{Error, Result};
pub use intervals::{AMatrix, Interval, Kernel2};
pub use kriging::{IntervalSample, KrigingProblem, KrigingSolution, Models};
pub use optimizer::{Mode, PenaltyVariant, SolverConfig};
pub use variogram::{Family, Location, VariogramModel};
