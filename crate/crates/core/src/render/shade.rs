use std::sync::Arc;

use super::math;
use super::raster::GBuffer;
use super::scene::{Camera, Material, PointLight};
use crate::error::{Error, Result};
use crate::tensor::{Function, Graph, NodeId, Shape, Tensor};

/// Four texel indices (flat, within one channel plane) and bilinear weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BilinearTaps {
    pub index: [u32; 4],
    pub weight: [f32; 4],
}

/// Bilinear lookup for a `width x height` texture with repeat wrapping.
///
/// `u` grows to the right and `v` grows upward, so `v = 1` is the top image
/// row. The texel `(i, j)` has its center at `((i + 0.5) / width, 1 - (j + 0.5) / height)`.
pub fn bilinear_taps(width: usize, height: usize, uv: [f32; 2]) -> BilinearTaps {
    let x = uv[0] as f64 * width as f64 - 0.5;
    let y = (1.0 - uv[1] as f64) * height as f64 - 0.5;
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = ((x - x0) as f32, (y - y0) as f32);
    let wrap = |v: f64, n: usize| (v as i64).rem_euclid(n as i64) as usize;
    let (xa, xb) = (wrap(x0, width), wrap(x0 + 1.0, width));
    let (ya, yb) = (wrap(y0, height), wrap(y0 + 1.0, height));
    BilinearTaps {
        index: [
            (ya * width + xa) as u32,
            (ya * width + xb) as u32,
            (yb * width + xa) as u32,
            (yb * width + xb) as u32,
        ],
        weight: [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
    }
}

/// Samples a (1, C, H, W) texture at `uv`.
pub fn sample_texture(texture: &Tensor, uv: [f32; 2]) -> Vec<f32> {
    let s = texture.shape();
    let taps = bilinear_taps(s.w, s.h, uv);
    (0..s.c)
        .map(|c| {
            let plane = &texture.data()[c * s.plane()..][..s.plane()];
            taps.index
                .iter()
                .zip(taps.weight)
                .map(|(&i, w)| plane[i as usize] * w)
                .sum()
        })
        .collect()
}

/// Gathers texels into an image through per-pixel bilinear taps.
struct TextureGather {
    taps: Arc<Vec<Option<BilinearTaps>>>,
}

impl Function for TextureGather {
    fn name(&self) -> &'static str {
        "texture_gather"
    }

    fn backward(&self, input: &Tensor, output: &Tensor, grad_output: &[f32], grad_input: &mut [f32]) {
        let (ts, os) = (input.shape(), output.shape());
        for c in 0..ts.c {
            let dst = &mut grad_input[c * ts.plane()..][..ts.plane()];
            let g = &grad_output[c * os.plane()..][..os.plane()];
            for (p, taps) in self.taps.iter().enumerate() {
                if let Some(t) = taps {
                    for k in 0..4 {
                        dst[t.index[k] as usize] += g[p] * t.weight[k];
                    }
                }
            }
        }
    }
}

fn check_texture(shape: Shape) -> Result<()> {
    if shape.n != 1 || shape.c != 3 {
        return Err(Error::config(format!("texture must be (1, 3, H, W), got {shape}")));
    }
    Ok(())
}

/// Records the texture lookup of every covered pixel. Uncovered pixels are 0.
pub fn gather_texture(g: &mut Graph, texture: NodeId, gbuffer: &GBuffer) -> Result<NodeId> {
    let ts = g.shape(texture);
    check_texture(ts)?;
    let taps: Vec<Option<BilinearTaps>> = gbuffer
        .pixels
        .iter()
        .map(|p| p.map(|f| bilinear_taps(ts.w, ts.h, f.uv)))
        .collect();
    let os = Shape::new(1, ts.c, gbuffer.height, gbuffer.width);
    let tex = g.value(texture).data();
    let mut out = vec![0.0f32; os.numel()];
    for c in 0..ts.c {
        let src = &tex[c * ts.plane()..][..ts.plane()];
        let dst = &mut out[c * os.plane()..][..os.plane()];
        for (d, t) in dst.iter_mut().zip(&taps) {
            if let Some(t) = t {
                *d = (0..4).map(|k| src[t.index[k] as usize] * t.weight[k]).sum();
            }
        }
    }
    let out = Tensor::new(os, out)?;
    g.apply(texture, out, Box::new(TextureGather { taps: Arc::new(taps) }))
}

/// Per-pixel Phong factors: radiance = albedo * `gain` + `offset`.
pub struct Lighting {
    pub gain: Tensor,
    pub offset: Tensor,
}

pub fn phong_factors(gbuffer: &GBuffer, light: &PointLight, material: &Material, camera: &Camera) -> Lighting {
    let n_px = gbuffer.pixels.len();
    let mut gain = vec![0.0f32; n_px];
    let mut offset = vec![0.0f32; n_px];
    for (i, frag) in gbuffer.pixels.iter().enumerate() {
        let Some(f) = frag else { continue };
        let p = math::to_f64(f.position);
        let n = math::to_f64(f.normal);
        let to_light = math::sub(light.position, p);
        let d2 = math::dot(to_light, to_light).max(1e-12);
        let l = math::normalize(to_light);
        let v = math::normalize(math::sub(camera.eye, p));
        let ndotl = math::dot(n, l);
        let diffuse = material.diffuse * light.power * ndotl.max(0.0) / d2;
        let specular = if ndotl > 0.0 {
            let r = math::sub(math::scale(n, 2.0 * ndotl), l);
            material.specular * light.power * math::dot(r, v).max(0.0).powf(material.specular_exponent) / d2
        } else {
            0.0
        };
        gain[i] = (material.ambient + diffuse) as f32;
        offset[i] = specular as f32;
    }
    let s = Shape::new(1, 3, gbuffer.height, gbuffer.width);
    let expand = |v: Vec<f32>| {
        let mut data = Vec::with_capacity(s.numel());
        for _ in 0..3 {
            data.extend_from_slice(&v);
        }
        Tensor::new(s, data).expect("lighting shape")
    };
    Lighting {
        gain: expand(gain),
        offset: expand(offset),
    }
}

/// Phong-shaded render of `texture` over the G-buffer, clamped to [0, 1].
/// Visibility is fixed: gradients reach the texture only through the lookup.
pub fn shade(
    g: &mut Graph,
    gbuffer: &GBuffer,
    texture: NodeId,
    light: &PointLight,
    material: &Material,
    camera: &Camera,
) -> Result<NodeId> {
    let albedo = gather_texture(g, texture, gbuffer)?;
    let lighting = phong_factors(gbuffer, light, material, camera);
    let gain = g.constant(lighting.gain)?;
    let offset = g.constant(lighting.offset)?;
    let lit = g.mul(albedo, gain)?;
    let lit = g.add(lit, offset)?;
    g.clamp01(lit)
}

/// `mask * render + (1 - mask) * background`, where `mask` is (1, 1, H, W)
/// and the background receives no gradient.
pub fn composite_background(g: &mut Graph, render: NodeId, mask: &Tensor, background: &Tensor) -> Result<NodeId> {
    let rs = g.shape(render);
    let ms = mask.shape();
    if background.shape() != rs || ms.n != rs.n || ms.c != 1 || ms.h != rs.h || ms.w != rs.w {
        return Err(Error::config(format!(
            "composite: render {rs}, mask {ms}, background {} do not line up",
            background.shape()
        )));
    }
    let plane = rs.plane();
    let mut keep = Vec::with_capacity(rs.numel());
    let mut fill = Vec::with_capacity(rs.numel());
    for n in 0..rs.n {
        let m = &mask.data()[n * plane..][..plane];
        for c in 0..rs.c {
            let bg = &background.data()[(n * rs.c + c) * plane..][..plane];
            keep.extend_from_slice(m);
            fill.extend(m.iter().zip(bg).map(|(&mi, &b)| (1.0 - mi) * b));
        }
    }
    let keep = g.constant(Tensor::new(rs, keep)?)?;
    let fill = g.constant(Tensor::new(rs, fill)?)?;
    let kept = g.mul(render, keep)?;
    g.add(kept, fill)
}
