//! Rasterization and shading with gradients flowing into the texture.
//!
//! Visibility is resolved once per view and held fixed; only texel values
//! are differentiable. That is enough because geometry never changes.

pub mod math;
mod mesh;
mod raster;
mod scene;
mod shade;

pub use mesh::{parse_obj, Mesh, Triangle};
pub use raster::{rasterize, Fragment, GBuffer};
pub use scene::{Camera, Material, PointLight};
pub use shade::{
    bilinear_taps, composite_background, gather_texture, phong_factors, sample_texture, shade, BilinearTaps,
    Lighting,
};

use crate::error::Result;
use crate::tensor::{Graph, Tensor};

/// Forward-only render of a (1, 3, H, W) texture; uncovered pixels are black.
pub fn render_image(
    mesh: &Mesh,
    texture: &Tensor,
    camera: &Camera,
    light: &PointLight,
    material: &Material,
    width: usize,
    height: usize,
) -> Result<Tensor> {
    let gbuffer = rasterize(mesh, camera, width, height);
    let mut g = Graph::new();
    let tex = g.constant(texture.clone())?;
    let out = shade(&mut g, &gbuffer, tex, light, material, camera)?;
    Ok(g.value(out).clone())
}
