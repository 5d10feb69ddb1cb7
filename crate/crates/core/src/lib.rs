//! Feed-forward reconstruction of Gaussian scenes from unposed images taken under
//! varying lighting: depth alignment, cross-view visibility, pixel-aligned Gaussian
//! construction, scale alignment and a tile-based splatting renderer.

// `!(x > 0.0)` is used throughout so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod depth_align;
pub mod error;
pub mod gaussians;
pub mod geom;
pub mod io;
pub mod pipeline;
pub mod render;
pub mod synth;
pub mod visibility;

pub use error::{Error, Result};
