use std::path::Path;

use super::math::{self, Vec3};
use crate::error::{Error, Result};

/// Index triples into the position, texture-coordinate, and normal arrays.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triangle {
    pub position: [u32; 3],
    pub uv: [u32; 3],
    pub normal: [u32; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub positions: Vec<[f32; 3]>,
    pub uvs: Vec<[f32; 2]>,
    pub normals: Vec<[f32; 3]>,
    pub triangles: Vec<Triangle>,
}

const MIN_AREA: f64 = 1e-12;

impl Mesh {
    /// Validates indices, drops degenerate triangles, and renormalizes normals.
    pub fn new(
        positions: Vec<[f32; 3]>,
        uvs: Vec<[f32; 2]>,
        normals: Vec<[f32; 3]>,
        triangles: Vec<Triangle>,
    ) -> Result<Self> {
        for (i, t) in triangles.iter().enumerate() {
            let ok = t.position.iter().all(|&p| (p as usize) < positions.len())
                && t.uv.iter().all(|&p| (p as usize) < uvs.len())
                && t.normal.iter().all(|&p| (p as usize) < normals.len());
            if !ok {
                return Err(Error::config(format!("triangle {i} has an out-of-range index")));
            }
        }
        let mut mesh = Mesh {
            positions,
            uvs,
            normals,
            triangles,
        };
        mesh.triangles.retain(|t| mesh_area(&mesh.positions, t) > MIN_AREA);
        for n in &mut mesh.normals {
            let v = math::normalize(math::to_f64(*n));
            *n = math::to_f32(v);
        }
        Ok(mesh)
    }

    pub fn load_obj(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_obj(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Mean of the vertex positions.
    pub fn centroid(&self) -> Vec3 {
        let n = self.positions.len().max(1) as f64;
        let sum = self
            .positions
            .iter()
            .fold([0.0; 3], |acc, p| math::add(acc, math::to_f64(*p)));
        math::scale(sum, 1.0 / n)
    }

    pub fn triangle_positions(&self, t: &Triangle) -> [Vec3; 3] {
        t.position.map(|i| math::to_f64(self.positions[i as usize]))
    }
}

fn mesh_area(positions: &[[f32; 3]], t: &Triangle) -> f64 {
    let [a, b, c] = t.position.map(|i| math::to_f64(positions[i as usize]));
    0.5 * math::length(math::cross(math::sub(b, a), math::sub(c, a)))
}

fn parse_floats<const N: usize>(parts: &[&str], line: usize) -> Result<[f32; N]> {
    if parts.len() < N {
        return Err(Error::config(format!("line {line}: expected {N} numbers")));
    }
    let mut out = [0.0f32; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p
            .parse()
            .map_err(|_| Error::config(format!("line {line}: bad number `{p}`")))?;
        if !o.is_finite() {
            return Err(Error::config(format!("line {line}: non-finite number")));
        }
    }
    Ok(out)
}

fn resolve_index(raw: &str, count: usize, line: usize) -> Result<u32> {
    let i: i64 = raw
        .parse()
        .map_err(|_| Error::config(format!("line {line}: bad index `{raw}`")))?;
    let idx = if i > 0 {
        i - 1
    } else if i < 0 {
        count as i64 + i
    } else {
        -1
    };
    if idx < 0 || idx as usize >= count {
        return Err(Error::config(format!("line {line}: index {i} out of range")));
    }
    Ok(idx as u32)
}

type Corner = (u32, Option<u32>, Option<u32>);

/// Parses the `v`/`vt`/`vn`/`f` subset of Wavefront OBJ. Faces with more
/// than three corners are fan-triangulated; other statements are ignored.
pub fn parse_obj(text: &str) -> Result<Mesh> {
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    let mut normals: Vec<[f32; 3]> = Vec::new();
    let mut faces: Vec<[Corner; 3]> = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let raw = raw.split('#').next().unwrap_or("");
        let mut parts = raw.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();
        match tag {
            "v" => positions.push(parse_floats::<3>(&rest, line)?),
            "vt" => uvs.push(parse_floats::<2>(&rest, line)?),
            "vn" => normals.push(parse_floats::<3>(&rest, line)?),
            "f" => {
                if rest.len() < 3 {
                    return Err(Error::config(format!("line {line}: face needs 3 corners")));
                }
                let corners = rest
                    .iter()
                    .map(|c| {
                        let mut it = c.split('/');
                        let p = resolve_index(it.next().unwrap_or(""), positions.len(), line)?;
                        let t = match it.next() {
                            Some(s) if !s.is_empty() => Some(resolve_index(s, uvs.len(), line)?),
                            _ => None,
                        };
                        let n = match it.next() {
                            Some(s) if !s.is_empty() => Some(resolve_index(s, normals.len(), line)?),
                            _ => None,
                        };
                        Ok((p, t, n))
                    })
                    .collect::<Result<Vec<Corner>>>()?;
                for k in 1..corners.len() - 1 {
                    faces.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            _ => {}
        }
    }

    if faces.is_empty() {
        return Err(Error::config("mesh has no faces"));
    }
    if faces.iter().any(|f| f.iter().any(|c| c.1.is_none())) {
        return Err(Error::config("every face needs texture coordinates"));
    }

    // Faces without normals get area-weighted vertex normals appended after
    // the file's own normals, one per position.
    let needs_normals = faces.iter().any(|f| f.iter().any(|c| c.2.is_none()));
    let generated_base = normals.len() as u32;
    if needs_normals {
        let mut acc = vec![[0.0f64; 3]; positions.len()];
        for f in &faces {
            let [a, b, c] = f.map(|c| math::to_f64(positions[c.0 as usize]));
            // cross product magnitude is twice the area
            let n = math::cross(math::sub(b, a), math::sub(c, a));
            for corner in f {
                let slot = &mut acc[corner.0 as usize];
                *slot = math::add(*slot, n);
            }
        }
        normals.extend(acc.into_iter().map(|n| math::to_f32(math::normalize(n))));
    }

    let triangles = faces
        .into_iter()
        .map(|f| Triangle {
            position: f.map(|c| c.0),
            uv: f.map(|c| c.1.unwrap_or(0)),
            normal: f.map(|c| c.2.unwrap_or(generated_base + c.0)),
        })
        .collect();
    Mesh::new(positions, uvs, normals, triangles)
}
