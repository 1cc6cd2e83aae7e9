use crate::error::{Error, Result};
use crate::features::{FeatureSet, TapFeatures};
use crate::tensor::{Function, Graph, NodeId, Tensor};

use super::nnfm::average;

/// Channel Gram matrix `F F^T / P` of a (N, C, H, W) map, `P = N * H * W`.
pub fn gram_matrix(map: &Tensor) -> Vec<f64> {
    gram_of(std::slice::from_ref(map))
}

fn gram_of(maps: &[Tensor]) -> Vec<f64> {
    let c = maps.first().map_or(0, |m| m.shape().c);
    let mut g = vec![0.0f64; c * c];
    let mut count = 0usize;
    for m in maps {
        let s = m.shape();
        let plane = s.plane();
        for n in 0..s.n {
            let f = &m.data()[n * c * plane..][..c * plane];
            for a in 0..c {
                for b in a..c {
                    let dot: f64 = f[a * plane..][..plane]
                        .iter()
                        .zip(&f[b * plane..][..plane])
                        .map(|(&x, &y)| x as f64 * y as f64)
                        .sum();
                    g[a * c + b] += dot;
                }
            }
            count += plane;
        }
    }
    for a in 0..c {
        for b in a..c {
            let v = g[a * c + b] / count.max(1) as f64;
            g[a * c + b] = v;
            g[b * c + a] = v;
        }
    }
    g
}

/// Gram matrix of every map of a style tap taken together.
pub fn style_gram(tap: &TapFeatures) -> Vec<f64> {
    gram_of(&tap.maps)
}

struct GramTap {
    /// `G_render - G_style`.
    diff: Vec<f64>,
}

impl Function for GramTap {
    fn name(&self) -> &'static str {
        "gram_mse"
    }

    fn backward(&self, input: &Tensor, _output: &Tensor, grad_output: &[f32], grad_input: &mut [f32]) {
        let s = input.shape();
        let (c, plane) = (s.c, s.plane());
        let p = (s.n * plane) as f64;
        let k = grad_output[0] as f64 * 4.0 / ((c * c) as f64 * p);
        for n in 0..s.n {
            let f = &input.data()[n * c * plane..][..c * plane];
            let gi = &mut grad_input[n * c * plane..][..c * plane];
            for a in 0..c {
                for q in 0..plane {
                    let mut acc = 0.0f64;
                    for b in 0..c {
                        acc += self.diff[a * c + b] * f[b * plane + q] as f64;
                    }
                    gi[a * plane + q] += (k * acc) as f32;
                }
            }
        }
    }
}

/// Mean squared difference between the render Gram matrix and `style_gram`.
pub fn gram_tap(g: &mut Graph, render: NodeId, style_gram: &[f64]) -> Result<NodeId> {
    let c = g.shape(render).c;
    if style_gram.len() != c * c {
        return Err(Error::config(format!(
            "gram: render has {c} channels, style Gram has {} entries",
            style_gram.len()
        )));
    }
    let gi = gram_matrix(g.value(render));
    let diff: Vec<f64> = gi.iter().zip(style_gram).map(|(a, b)| a - b).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / (c * c) as f64;
    g.apply(render, Tensor::scalar(loss as f32), Box::new(GramTap { diff }))
}

/// Gram-matrix style loss averaged over taps.
pub fn gram_loss(g: &mut Graph, render: &[(String, NodeId)], style: &FeatureSet) -> Result<NodeId> {
    let mut per_tap = Vec::with_capacity(render.len());
    for (name, node) in render {
        let t = style
            .tap(name)
            .ok_or_else(|| Error::config(format!("style set lacks tap `{name}`")))?;
        if t.vector_count() == 0 {
            return Err(Error::config(format!("style tap `{name}` has no vectors")));
        }
        per_tap.push(gram_tap(g, *node, &style_gram(t))?);
    }
    average(g, &per_tap)
}

/// Mean squared difference to fixed content features, averaged over taps.
pub fn content_loss(g: &mut Graph, render: &[(String, NodeId)], content: &FeatureSet) -> Result<NodeId> {
    let mut per_tap = Vec::with_capacity(render.len());
    for (name, node) in render {
        let t = content
            .tap(name)
            .ok_or_else(|| Error::config(format!("content set lacks tap `{name}`")))?;
        let target = match t.maps.as_slice() {
            [m] if m.shape() == g.shape(*node) => m.clone(),
            _ => {
                return Err(Error::config(format!(
                    "content tap `{name}`: render shape {} does not match content features",
                    g.shape(*node)
                )))
            }
        };
        let target = g.constant(target)?;
        let d = g.sub(*node, target)?;
        let sq = g.mul(d, d)?;
        per_tap.push(g.mean(sq)?);
    }
    average(g, &per_tap)
}
