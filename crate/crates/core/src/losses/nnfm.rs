use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::par;
use crate::tensor::{Function, Graph, NodeId, Shape, Tensor};

pub const COSINE_EPS: f64 = 1e-8;

/// `1 - a.b / (|a||b| + eps)`.
pub fn cosine_distance(a: &[f32], b: &[f32]) -> f64 {
    cosine_with_norms(a, b, norm(a), norm(b))
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

#[inline]
fn cosine_with_norms(a: &[f32], b: &[f32], na: f64, nb: f64) -> f64 {
    let ab: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    1.0 - ab / (na * nb + COSINE_EPS)
}

/// Style vectors of one tap, flattened row-major with their norms.
#[derive(Clone, Debug)]
pub struct StyleTap {
    pub name: String,
    pub channels: usize,
    vectors: Arc<Vec<f32>>,
    norms: Arc<Vec<f64>>,
}

impl StyleTap {
    fn new(name: String, channels: usize, vectors: Vec<f32>) -> Self {
        let norms = vectors
            .chunks_exact(channels.max(1))
            .map(norm)
            .collect();
        StyleTap {
            name,
            channels,
            vectors: Arc::new(vectors),
            norms: Arc::new(norms),
        }
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn vector(&self, j: usize) -> &[f32] {
        &self.vectors[j * self.channels..][..self.channels]
    }
}

/// Style features prepared for repeated nearest-neighbor queries.
#[derive(Clone, Debug)]
pub struct StyleBank {
    pub taps: Vec<StyleTap>,
}

impl StyleBank {
    pub fn new(set: &FeatureSet) -> Result<Self> {
        if set.taps.is_empty() {
            return Err(Error::config("style feature set has no taps"));
        }
        let mut taps = Vec::new();
        for t in &set.taps {
            if t.vector_count() == 0 {
                return Err(Error::config(format!("style tap `{}` has no vectors", t.name)));
            }
            taps.push(StyleTap::new(t.name.clone(), t.channels(), t.vectors()));
        }
        Ok(StyleBank { taps })
    }

    /// Keeps at most `cap` vectors per tap, chosen without replacement from
    /// a seeded RNG and kept in their original order.
    pub fn subsample(&self, cap: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let taps = self
            .taps
            .iter()
            .map(|t| {
                if t.len() <= cap {
                    return t.clone();
                }
                let mut keep = index::sample(&mut rng, t.len(), cap).into_vec();
                keep.sort_unstable();
                let v = keep.iter().flat_map(|&j| t.vector(j).iter().copied()).collect();
                StyleTap::new(t.name.clone(), t.channels, v)
            })
            .collect();
        StyleBank { taps }
    }

    pub fn tap(&self, name: &str) -> Option<&StyleTap> {
        self.taps.iter().find(|t| t.name == name)
    }
}

/// Joins the per-tap vector bags of several style images.
pub fn concat_style_features(sets: &[FeatureSet]) -> Result<FeatureSet> {
    let first = sets
        .first()
        .ok_or_else(|| Error::config("no style feature sets to concatenate"))?;
    let mut out = first.clone();
    for set in &sets[1..] {
        if set.taps.len() != out.taps.len() {
            return Err(Error::config("style feature sets have different taps"));
        }
        for (dst, src) in out.taps.iter_mut().zip(&set.taps) {
            if dst.name != src.name || dst.channels() != src.channels() {
                return Err(Error::config(format!(
                    "style tap mismatch: `{}` ({} channels) vs `{}` ({} channels)",
                    dst.name,
                    dst.channels(),
                    src.name,
                    src.channels()
                )));
            }
            dst.maps.extend(src.maps.iter().cloned());
        }
    }
    Ok(out)
}

/// Reads vector `i` of an (N, C, H, W) map, where `i = n * H * W + p`.
fn gather_vector(data: &[f32], shape: Shape, i: usize, out: &mut [f32]) {
    let plane = shape.plane();
    let (n, p) = (i / plane, i % plane);
    let base = n * shape.c * plane + p;
    for (k, o) in out.iter_mut().enumerate() {
        *o = data[base + k * plane];
    }
}

/// Nearest style vector by cosine distance and that distance; ties go to
/// the lowest index.
fn nearest(a: &[f32], style: &StyleTap) -> (usize, f64) {
    let na = norm(a);
    let mut best = (0, f64::INFINITY);
    for j in 0..style.len() {
        let d = cosine_with_norms(a, style.vector(j), na, style.norms[j]);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

struct NnfmTap {
    style: StyleTap,
    nearest: Vec<u32>,
}

impl Function for NnfmTap {
    fn name(&self) -> &'static str {
        "nnfm"
    }

    fn backward(&self, input: &Tensor, _output: &Tensor, grad_output: &[f32], grad_input: &mut [f32]) {
        let shape = input.shape();
        let plane = shape.plane();
        let c = shape.c;
        let m = self.nearest.len();
        let scale = grad_output[0] as f64 / m as f64;
        let mut a = vec![0.0f32; c];
        for (i, &j) in self.nearest.iter().enumerate() {
            gather_vector(input.data(), shape, i, &mut a);
            let s = self.style.vector(j as usize);
            let na = a.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
            let ns = self.style.norms[j as usize];
            let dot: f64 = a.iter().zip(s).map(|(&x, &y)| x as f64 * y as f64).sum();
            let den = na * ns + COSINE_EPS;
            let radial = if na > 0.0 { dot * ns / (na * den * den) } else { 0.0 };
            let (n, p) = (i / plane, i % plane);
            let base = n * c * plane + p;
            for k in 0..c {
                let g = -(s[k] as f64 / den - radial * a[k] as f64);
                grad_input[base + k * plane] += (scale * g) as f32;
            }
        }
    }
}

/// For each vector of an (N, C, H, W) render map, the index of its nearest
/// style vector and the cosine distance to it.
pub fn nearest_matches(render: &Tensor, style: &StyleTap) -> Result<Vec<(u32, f64)>> {
    let shape = render.shape();
    if shape.c != style.channels {
        return Err(Error::config(format!(
            "nnfm tap `{}`: render has {} channels, style has {}",
            style.name, shape.c, style.channels
        )));
    }
    if style.is_empty() {
        return Err(Error::config(format!("nnfm tap `{}`: empty style set", style.name)));
    }
    let m = shape.n * shape.plane();
    const CHUNK: usize = 64;
    let data = render.data();
    let chunks = par::map_range(m.div_ceil(CHUNK), |k| {
        let mut a = vec![0.0f32; shape.c];
        (k * CHUNK..((k + 1) * CHUNK).min(m))
            .map(|i| {
                gather_vector(data, shape, i, &mut a);
                let (j, d) = nearest(&a, style);
                (j as u32, d)
            })
            .collect::<Vec<_>>()
    });
    Ok(chunks.concat())
}

/// Mean over render vectors of the cosine distance to the nearest style vector.
pub fn nnfm_tap(g: &mut Graph, render: NodeId, style: &StyleTap) -> Result<NodeId> {
    let pairs = nearest_matches(g.value(render), style)?;
    let loss = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len().max(1) as f64;
    let op = NnfmTap {
        style: style.clone(),
        nearest: pairs.iter().map(|p| p.0).collect(),
    };
    g.apply(render, Tensor::scalar(loss as f32), Box::new(op))
}

/// Averages `per_tap` scalar nodes.
pub(crate) fn average(g: &mut Graph, per_tap: &[NodeId]) -> Result<NodeId> {
    let (&first, rest) = per_tap
        .split_first()
        .ok_or_else(|| Error::config("loss needs at least one tap"))?;
    let mut acc = first;
    for &t in rest {
        acc = g.add(acc, t)?;
    }
    if per_tap.len() == 1 {
        Ok(acc)
    } else {
        g.scale(acc, 1.0 / per_tap.len() as f32)
    }
}

/// Nearest-neighbor feature matching: per tap, each render vector is matched
/// to its closest style vector by cosine distance; tap losses are averaged.
/// Taps are matched by name.
pub fn nnfm_loss(g: &mut Graph, render: &[(String, NodeId)], style: &StyleBank) -> Result<NodeId> {
    let mut per_tap = Vec::with_capacity(render.len());
    for (name, node) in render {
        let s = style
            .tap(name)
            .ok_or_else(|| Error::config(format!("style set lacks tap `{name}`")))?;
        per_tap.push(nnfm_tap(g, *node, s)?);
    }
    average(g, &per_tap)
}
