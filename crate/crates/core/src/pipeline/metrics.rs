//! Texture statistics used to compare optimization outcomes.

use crate::render::sample_texture;
use crate::tensor::Tensor;

/// Radially averaged circular autocorrelation of each mean-removed channel,
/// indexed by integer lag up to half the smaller extent. Lag 0 is 1, or 0
/// for a constant channel.
pub fn radial_autocorrelation(t: &Tensor) -> Vec<f64> {
    let s = t.shape();
    let (h, w) = (s.h, s.w);
    let max_r = h.min(w) / 2;
    let mut sum = vec![0.0f64; max_r + 1];
    let mut count = vec![0usize; max_r + 1];
    for c in 0..s.c {
        let plane = &t.data()[c * s.plane()..][..s.plane()];
        let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / plane.len() as f64;
        let x: Vec<f64> = plane.iter().map(|&v| v as f64 - mean).collect();
        let var: f64 = x.iter().map(|v| v * v).sum();
        for dy in -(max_r as i64)..=max_r as i64 {
            for dx in -(max_r as i64)..=max_r as i64 {
                let r = ((dx * dx + dy * dy) as f64).sqrt().round() as usize;
                if r > max_r {
                    continue;
                }
                let mut acc = 0.0;
                if var > 0.0 {
                    for y in 0..h {
                        let yy = (y as i64 + dy).rem_euclid(h as i64) as usize;
                        for xx0 in 0..w {
                            let xx = (xx0 as i64 + dx).rem_euclid(w as i64) as usize;
                            acc += x[y * w + xx0] * x[yy * w + xx];
                        }
                    }
                    acc /= var;
                }
                sum[r] += acc;
                count[r] += 1;
            }
        }
    }
    sum.iter().zip(&count).map(|(s, &n)| s / n.max(1) as f64).collect()
}

/// Lag, in texels, at which the radial autocorrelation first falls below
/// 1/e, interpolated linearly between integer lags. Returns 0 for a
/// constant texture and the largest lag when the curve never drops.
pub fn autocorrelation_length(t: &Tensor) -> f64 {
    let curve = radial_autocorrelation(t);
    if curve.first().is_none_or(|&c0| c0 <= 0.0) {
        return 0.0;
    }
    let thresh = (-1.0f64).exp();
    for r in 1..curve.len() {
        if curve[r] < thresh {
            let (a, b) = (curve[r - 1], curve[r]);
            return (r - 1) as f64 + (a - thresh) / (a - b);
        }
    }
    (curve.len() - 1) as f64
}

/// The same mesh edge as it appears in two UV charts. Endpoints correspond.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeamEdge {
    pub a: [[f32; 2]; 2],
    pub b: [[f32; 2]; 2],
}

/// Mean absolute RGB difference between the two sides of each seam,
/// sampled bilinearly at `samples` evenly spaced points per edge.
pub fn seam_discontinuity(texture: &Tensor, seams: &[SeamEdge], samples: usize) -> f64 {
    let lerp = |e: [[f32; 2]; 2], t: f32| [e[0][0] + t * (e[1][0] - e[0][0]), e[0][1] + t * (e[1][1] - e[0][1])];
    let mut total = 0.0f64;
    let mut n = 0usize;
    for seam in seams {
        for k in 0..samples {
            let t = (k as f32 + 0.5) / samples as f32;
            let ca = sample_texture(texture, lerp(seam.a, t));
            let cb = sample_texture(texture, lerp(seam.b, t));
            total += ca.iter().zip(&cb).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / ca.len() as f64;
            n += 1;
        }
    }
    total / n.max(1) as f64
}
