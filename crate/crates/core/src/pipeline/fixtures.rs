//! Small procedural assets for tests, benchmarks, and demos.

use super::metrics::SeamEdge;
use crate::render::{Mesh, Triangle};
use crate::tensor::{Shape, Tensor};

fn quad_pair_triangles(p: [u32; 4], uv: [u32; 4], front: u32, back: u32) -> [Triangle; 4] {
    let tri = |pi: [u32; 3], ti: [u32; 3], n: u32| Triangle {
        position: pi,
        uv: ti,
        normal: [n; 3],
    };
    [
        tri([p[0], p[1], p[2]], [uv[0], uv[1], uv[2]], front),
        tri([p[0], p[2], p[3]], [uv[0], uv[2], uv[3]], front),
        tri([p[0], p[2], p[1]], [uv[0], uv[2], uv[1]], back),
        tri([p[0], p[3], p[2]], [uv[0], uv[3], uv[2]], back),
    ]
}

/// A double-sided quad spanning [-1, 1]^2 in the z = 0 plane with uv
/// covering the whole texture once. Both sides share the same texels.
pub fn quad_mesh() -> Mesh {
    tiled_quad_mesh(1.0)
}

/// [`quad_mesh`] with the texture repeated `repeat` times along each axis.
pub fn tiled_quad_mesh(repeat: f32) -> Mesh {
    let positions = vec![[-1.0, -1.0, 0.0], [1.0, -1.0, 0.0], [1.0, 1.0, 0.0], [-1.0, 1.0, 0.0]];
    let r = repeat;
    let uvs = vec![[0.0, 0.0], [r, 0.0], [r, r], [0.0, r]];
    let normals = vec![[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]];
    let triangles = quad_pair_triangles([0, 1, 2, 3], [0, 1, 2, 3], 0, 1).to_vec();
    Mesh::new(positions, uvs, normals, triangles).expect("quad fixture")
}

/// Two adjacent double-sided quads sharing the edge x = 0, laid out in
/// separate UV charts. The left quad uses u in [0.05, 0.45]; the right quad
/// is mirrored into u in [0.55, 0.95], so the shared edge sits at u = 0.45 in
/// one chart and u = 0.95 in the other.
pub fn seam_quad_pair() -> (Mesh, Vec<SeamEdge>) {
    let positions = vec![
        [-1.0, -0.5, 0.0],
        [0.0, -0.5, 0.0],
        [0.0, 0.5, 0.0],
        [-1.0, 0.5, 0.0],
        [1.0, -0.5, 0.0],
        [1.0, 0.5, 0.0],
    ];
    let (v0, v1) = (0.05, 0.95);
    let uvs = vec![
        [0.05, v0],
        [0.45, v0],
        [0.45, v1],
        [0.05, v1],
        [0.95, v0],
        [0.55, v0],
        [0.55, v1],
        [0.95, v1],
    ];
    let normals = vec![[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]];
    let mut triangles = quad_pair_triangles([0, 1, 2, 3], [0, 1, 2, 3], 0, 1).to_vec();
    triangles.extend(quad_pair_triangles([1, 4, 5, 2], [4, 5, 6, 7], 0, 1));
    let mesh = Mesh::new(positions, uvs, normals, triangles).expect("seam fixture");
    let seam = SeamEdge {
        a: [[0.45, v0], [0.45, v1]],
        b: [[0.95, v0], [0.95, v1]],
    };
    (mesh, vec![seam])
}

/// A (1, 3, size, size) two-color checkerboard with `cells` cells per side.
pub fn checkerboard(size: usize, cells: usize, a: [f32; 3], b: [f32; 3]) -> Tensor {
    let cell = (size / cells.max(1)).max(1);
    Tensor::from_fn(Shape::new(1, 3, size, size), |_, c, y, x| {
        if (x / cell + y / cell) % 2 == 0 {
            a[c]
        } else {
            b[c]
        }
    })
}

/// Diagonal color stripes with the given period in pixels.
pub fn stripes(size: usize, period: usize, a: [f32; 3], b: [f32; 3]) -> Tensor {
    Tensor::from_fn(Shape::new(1, 3, size, size), |_, c, y, x| {
        if ((x + y) / period.max(1)) % 2 == 0 {
            a[c]
        } else {
            b[c]
        }
    })
}
