use super::math::{self, Vec3};
use super::mesh::Mesh;
use super::scene::Camera;
use crate::par;
use crate::tensor::{Shape, Tensor};

/// Attributes of the front-most surface at one pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fragment {
    pub triangle: u32,
    /// Perspective-correct barycentric weights of the triangle's second and
    /// third vertices; the first is `1 - b1 - b2`.
    pub bary: [f32; 2],
    pub uv: [f32; 2],
    /// Interpolated and renormalized vertex normal.
    pub normal: [f32; 3],
    pub position: [f32; 3],
}

/// Per-pixel rasterization output. A pixel is covered iff it holds a fragment.
#[derive(Clone, Debug, PartialEq)]
pub struct GBuffer {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Option<Fragment>>,
}

impl GBuffer {
    pub fn fragment(&self, x: usize, y: usize) -> Option<&Fragment> {
        self.pixels[y * self.width + x].as_ref()
    }

    /// Coverage as a (1, 1, H, W) tensor of zeros and ones.
    pub fn mask(&self) -> Tensor {
        let data = self.pixels.iter().map(|p| if p.is_some() { 1.0 } else { 0.0 }).collect();
        Tensor::new(Shape::new(1, 1, self.height, self.width), data).expect("mask shape")
    }

    pub fn coverage(&self) -> usize {
        self.pixels.iter().filter(|p| p.is_some()).count()
    }
}

#[derive(Clone, Copy)]
struct ClipVertex {
    clip: [f64; 4],
    /// Barycentric coordinates relative to the source triangle.
    bary: Vec3,
}

struct ScreenTriangle {
    id: u32,
    xy: [[f64; 2]; 3],
    z: [f64; 3],
    inv_w: [f64; 3],
    bary: [Vec3; 3],
    y_min: f64,
    y_max: f64,
    area: f64,
}

fn lerp_clip(a: &ClipVertex, b: &ClipVertex, t: f64) -> ClipVertex {
    let mut clip = [0.0; 4];
    for (i, c) in clip.iter_mut().enumerate() {
        *c = a.clip[i] + (b.clip[i] - a.clip[i]) * t;
    }
    let bary = math::add(a.bary, math::scale(math::sub(b.bary, a.bary), t));
    ClipVertex { clip, bary }
}

/// Sutherland-Hodgman against one plane `dist(v) >= 0`.
fn clip_polygon(poly: &[ClipVertex], dist: impl Fn(&ClipVertex) -> f64) -> Vec<ClipVertex> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let a = &poly[i];
        let b = &poly[(i + 1) % poly.len()];
        let (da, db) = (dist(a), dist(b));
        if da >= 0.0 {
            out.push(*a);
        }
        if (da >= 0.0) != (db >= 0.0) {
            out.push(lerp_clip(a, b, da / (da - db)));
        }
    }
    out
}

fn setup_triangles(mesh: &Mesh, camera: &Camera, width: usize, height: usize) -> Vec<ScreenTriangle> {
    let vp = camera.view_projection(width as f64 / height as f64);
    let clip: Vec<[f64; 4]> = mesh
        .positions
        .iter()
        .map(|p| vp.transform(math::to_f64(*p)))
        .collect();
    let mut out = Vec::new();
    let unit = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for (id, tri) in mesh.triangles.iter().enumerate() {
        let poly: Vec<ClipVertex> = (0..3)
            .map(|k| ClipVertex {
                clip: clip[tri.position[k] as usize],
                bary: unit[k],
            })
            .collect();
        // near: z >= -w, far: z <= w
        let poly = clip_polygon(&poly, |v| v.clip[2] + v.clip[3]);
        let poly = clip_polygon(&poly, |v| v.clip[3] - v.clip[2]);
        if poly.len() < 3 {
            continue;
        }
        for k in 1..poly.len() - 1 {
            let verts = [poly[0], poly[k], poly[k + 1]];
            if verts.iter().any(|v| v.clip[3] <= 0.0) {
                continue;
            }
            let ndc = verts.map(|v| [v.clip[0] / v.clip[3], v.clip[1] / v.clip[3], v.clip[2] / v.clip[3]]);
            // counter-clockwise in NDC faces the camera
            let area_ndc = (ndc[1][0] - ndc[0][0]) * (ndc[2][1] - ndc[0][1])
                - (ndc[2][0] - ndc[0][0]) * (ndc[1][1] - ndc[0][1]);
            if area_ndc <= 0.0 {
                continue;
            }
            let xy = ndc.map(|p| [(p[0] + 1.0) * 0.5 * width as f64, (1.0 - p[1]) * 0.5 * height as f64]);
            let area = edge(xy[0], xy[1], xy[2]);
            if area == 0.0 {
                continue;
            }
            out.push(ScreenTriangle {
                id: id as u32,
                xy,
                z: ndc.map(|p| p[2]),
                inv_w: verts.map(|v| 1.0 / v.clip[3]),
                bary: verts.map(|v| v.bary),
                y_min: xy.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min),
                y_max: xy.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max),
                area,
            });
        }
    }
    out
}

#[inline]
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Depth-buffered perspective rasterization sampled at pixel centers.
///
/// Triangles are culled when back-facing and clipped against the near and far
/// planes. On equal depth the earlier triangle keeps the pixel. Rows are
/// independent, so the output does not depend on how rows are scheduled.
pub fn rasterize(mesh: &Mesh, camera: &Camera, width: usize, height: usize) -> GBuffer {
    let tris = setup_triangles(mesh, camera, width, height);
    let mut pixels: Vec<Option<Fragment>> = vec![None; width * height];
    par::for_each_chunk_mut(&mut pixels, width.max(1), |row, out| {
        let py = row as f64 + 0.5;
        let mut depth = vec![f64::INFINITY; width];
        for t in &tris {
            if py < t.y_min || py > t.y_max {
                continue;
            }
            let x_min = t.xy.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let x_max = t.xy.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            let x0 = (x_min - 0.5).ceil().max(0.0) as usize;
            let x1 = ((x_max - 0.5).floor() as i64).min(width as i64 - 1);
            if x1 < 0 {
                continue;
            }
            for (px, slot) in out.iter_mut().enumerate().take(x1 as usize + 1).skip(x0) {
                let p = [px as f64 + 0.5, py];
                let l0 = edge(t.xy[1], t.xy[2], p) / t.area;
                let l1 = edge(t.xy[2], t.xy[0], p) / t.area;
                let l2 = edge(t.xy[0], t.xy[1], p) / t.area;
                if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                    continue;
                }
                let z = l0 * t.z[0] + l1 * t.z[1] + l2 * t.z[2];
                if !(-1.0..=1.0).contains(&z) || z >= depth[px] {
                    continue;
                }
                depth[px] = z;
                let q = [l0 * t.inv_w[0], l1 * t.inv_w[1], l2 * t.inv_w[2]];
                let qs = q[0] + q[1] + q[2];
                let mut b = [0.0; 3];
                for k in 0..3 {
                    b = math::add(b, math::scale(t.bary[k], q[k] / qs));
                }
                *slot = Some(Fragment {
                    triangle: t.id,
                    bary: [b[1] as f32, b[2] as f32],
                    uv: [0.0; 2],
                    normal: [0.0; 3],
                    position: [0.0; 3],
                });
            }
        }
        for frag in out.iter_mut().flatten() {
            fill_attributes(mesh, frag);
        }
    });
    GBuffer {
        width,
        height,
        pixels,
    }
}

fn fill_attributes(mesh: &Mesh, frag: &mut Fragment) {
    let tri = &mesh.triangles[frag.triangle as usize];
    let b = [
        1.0 - frag.bary[0] as f64 - frag.bary[1] as f64,
        frag.bary[0] as f64,
        frag.bary[1] as f64,
    ];
    let mut uv = [0.0f64; 2];
    let mut n = [0.0f64; 3];
    let mut p = [0.0f64; 3];
    for k in 0..3 {
        let t = mesh.uvs[tri.uv[k] as usize];
        uv[0] += b[k] * t[0] as f64;
        uv[1] += b[k] * t[1] as f64;
        n = math::add(n, math::scale(math::to_f64(mesh.normals[tri.normal[k] as usize]), b[k]));
        p = math::add(p, math::scale(math::to_f64(mesh.positions[tri.position[k] as usize]), b[k]));
    }
    frag.uv = [uv[0] as f32, uv[1] as f32];
    frag.normal = math::to_f32(math::normalize(n));
    frag.position = math::to_f32(p);
}
