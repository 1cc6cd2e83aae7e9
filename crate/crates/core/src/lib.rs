//! Texture stylization for textured triangle meshes.
//!
//! An additive style texture is optimized so that randomized renders of the
//! mesh match the feature statistics of one or more style images under a
//! nearest-neighbor feature matching loss, while a content loss keeps the
//! original appearance recognizable and a palette loss steers texel colors.

pub mod error;
pub mod features;
pub mod image_io;
pub mod losses;
pub mod palette;
pub mod par;
pub mod pipeline;
pub mod render;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Graph, NodeId, Shape, Tensor};
