//! Edge-aware restoration losses, image-quality metrics and the
//! ensemble / multi-frame inference pipeline used for all-weather image
//! restoration.
//!
//! All image data moves through [`ImageTensor`], a batched `N×C×H×W`
//! `f32` buffer. Reductions accumulate in `f64`.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod edge_weight;
pub mod error;
pub mod image_io;
pub mod losses;
pub mod metrics;
pub mod pipeline;
mod structural;
pub mod tensor;
pub mod train;

pub use edge_weight::{diffbir_weight_map, ggea_weight_map, GradientMagnitude, WeightMap, WeightVariant};
pub use error::{Error, Result};
pub use losses::{LossConfig, LossReport};
pub use pipeline::{EnsembleConfig, ReferenceRestorer, Restorer, RestorerOutput};
pub use tensor::{ImageTensor, Kernel2D, PadSpec, Shape};
