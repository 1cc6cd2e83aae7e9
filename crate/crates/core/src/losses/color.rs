use crate::error::{Error, Result};
use crate::palette::{nearest_in, Palette, Rgb};
use crate::tensor::{Function, Graph, NodeId, Tensor};

struct PaletteDistance {
    colors: Vec<Rgb>,
    nearest: Vec<u32>,
}

impl Function for PaletteDistance {
    fn name(&self) -> &'static str {
        "color_palette"
    }

    fn backward(&self, input: &Tensor, _output: &Tensor, grad_output: &[f32], grad_input: &mut [f32]) {
        let plane = input.shape().plane();
        let k = 2.0 * grad_output[0] / plane as f32;
        for (p, &q) in self.nearest.iter().enumerate() {
            let target = self.colors[q as usize];
            for c in 0..3 {
                let i = c * plane + p;
                grad_input[i] += k * (input.data()[i] - target[c]);
            }
        }
    }
}

/// Mean over texels of the squared RGB distance to the nearest palette
/// color. The assignment is held fixed in the backward pass.
pub fn color_palette_loss(g: &mut Graph, texture: NodeId, palette: &Palette) -> Result<NodeId> {
    let s = g.shape(texture);
    if s.n != 1 || s.c != 3 {
        return Err(Error::config(format!("color loss needs a (1, 3, H, W) texture, got {s}")));
    }
    let colors = palette.colors().to_vec();
    if colors.is_empty() {
        return Err(Error::config("color loss needs a non-empty palette"));
    }
    let plane = s.plane();
    let d = g.value(texture).data();
    let mut nearest = Vec::with_capacity(plane);
    let mut total = 0.0f64;
    for p in 0..plane {
        let (q, dist) = nearest_in([d[p], d[plane + p], d[2 * plane + p]], &colors);
        nearest.push(q as u32);
        total += dist as f64;
    }
    let loss = Tensor::scalar((total / plane as f64) as f32);
    g.apply(texture, loss, Box::new(PaletteDistance { colors, nearest }))
}
