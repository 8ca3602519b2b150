#![no_std]
// `!(a < b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod acdc;
pub mod dataset;
pub mod distribution;
mod error;
pub mod interpret;
pub mod kan;
pub(crate) mod math;
pub mod opf;
pub mod spline;
pub mod stochastic;
pub mod surrogate;
pub mod train;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use kan::{KanInit, KanLayer, KanNetwork, PruneMask, SplineEdge};
pub use spline::SplineGrid;
pub use train::{TrainConfig, TrainReport};
