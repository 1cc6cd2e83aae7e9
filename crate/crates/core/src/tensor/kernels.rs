//! Raw forward and backward kernels over flat buffers. Work is split over
//! independent output planes so results do not depend on the thread count.

use super::Shape;
use crate::par;

pub(crate) fn conv_out_extent(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < k {
        None
    } else {
        Some((padded - k) / stride + 1)
    }
}

/// Range of output columns `o` whose input column `o*stride + k - pad` lies in `0..input`.
#[inline]
fn valid_range(out: usize, input: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    // o*stride + k >= pad
    let lo = if k >= pad {
        0
    } else {
        (pad - k).div_ceil(stride)
    };
    // o*stride + k - pad <= input - 1
    let hi = if input + pad < k + 1 {
        0
    } else {
        ((input + pad - k - 1) / stride + 1).min(out)
    };
    (lo.min(hi), hi)
}

#[inline]
fn axpy_strided(dst: &mut [f32], src: &[f32], src_start: usize, stride: usize, a: f32) {
    if stride == 1 {
        let src = &src[src_start..src_start + dst.len()];
        for (d, s) in dst.iter_mut().zip(src) {
            *d += a * s;
        }
    } else {
        for (i, d) in dst.iter_mut().enumerate() {
            *d += a * src[src_start + i * stride];
        }
    }
}

pub(crate) struct ConvGeom {
    pub input: Shape,
    pub weight: Shape,
    pub output: Shape,
    pub stride: usize,
    pub pad: usize,
}

pub(crate) fn conv2d_forward(g: &ConvGeom, x: &[f32], w: &[f32], bias: Option<&[f32]>) -> Vec<f32> {
    let (is, ws, os) = (g.input, g.weight, g.output);
    let (kh, kw) = (ws.h, ws.w);
    let mut out = vec![0.0f32; os.numel()];
    par::for_each_chunk_mut(&mut out, os.plane(), |j, plane| {
        let b = j / os.c;
        let o = j % os.c;
        if let Some(bias) = bias {
            plane.fill(bias[o]);
        }
        for ic in 0..is.c {
            let in_plane = &x[(b * is.c + ic) * is.plane()..][..is.plane()];
            for ky in 0..kh {
                let (oy_lo, oy_hi) = valid_range(os.h, is.h, ky, g.stride, g.pad);
                for kx in 0..kw {
                    let wv = w[((o * ws.c + ic) * kh + ky) * kw + kx];
                    let (ox_lo, ox_hi) = valid_range(os.w, is.w, kx, g.stride, g.pad);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    for oy in oy_lo..oy_hi {
                        let iy = oy * g.stride + ky - g.pad;
                        let ix0 = ox_lo * g.stride + kx - g.pad;
                        let dst = &mut plane[oy * os.w + ox_lo..oy * os.w + ox_hi];
                        axpy_strided(dst, in_plane, iy * is.w + ix0, g.stride, wv);
                    }
                }
            }
        }
    });
    out
}

pub(crate) fn conv2d_backward_input(g: &ConvGeom, gout: &[f32], w: &[f32]) -> Vec<f32> {
    let (is, ws, os) = (g.input, g.weight, g.output);
    let (kh, kw) = (ws.h, ws.w);
    let mut gx = vec![0.0f32; is.numel()];
    par::for_each_chunk_mut(&mut gx, is.plane(), |j, plane| {
        let b = j / is.c;
        let ic = j % is.c;
        for o in 0..os.c {
            let g_plane = &gout[(b * os.c + o) * os.plane()..][..os.plane()];
            for ky in 0..kh {
                let (oy_lo, oy_hi) = valid_range(os.h, is.h, ky, g.stride, g.pad);
                for kx in 0..kw {
                    let wv = w[((o * ws.c + ic) * kh + ky) * kw + kx];
                    let (ox_lo, ox_hi) = valid_range(os.w, is.w, kx, g.stride, g.pad);
                    for oy in oy_lo..oy_hi {
                        let iy = oy * g.stride + ky - g.pad;
                        let row = &g_plane[oy * os.w..(oy + 1) * os.w];
                        for ox in ox_lo..ox_hi {
                            let ix = ox * g.stride + kx - g.pad;
                            plane[iy * is.w + ix] += wv * row[ox];
                        }
                    }
                }
            }
        }
    });
    gx
}

/// Returns (weight gradient, bias gradient).
pub(crate) fn conv2d_backward_params(g: &ConvGeom, gout: &[f32], x: &[f32]) -> (Vec<f32>, Vec<f32>) {
    let (is, ws, os) = (g.input, g.weight, g.output);
    let (kh, kw) = (ws.h, ws.w);
    let per_out = ws.c * kh * kw;
    let mut gw = vec![0.0f32; ws.numel()];
    par::for_each_chunk_mut(&mut gw, per_out, |o, gw_o| {
        for b in 0..is.n {
            let g_plane = &gout[(b * os.c + o) * os.plane()..][..os.plane()];
            for ic in 0..is.c {
                let in_plane = &x[(b * is.c + ic) * is.plane()..][..is.plane()];
                for ky in 0..kh {
                    let (oy_lo, oy_hi) = valid_range(os.h, is.h, ky, g.stride, g.pad);
                    for kx in 0..kw {
                        let (ox_lo, ox_hi) = valid_range(os.w, is.w, kx, g.stride, g.pad);
                        let mut acc = 0.0f64;
                        for oy in oy_lo..oy_hi {
                            let iy = oy * g.stride + ky - g.pad;
                            for ox in ox_lo..ox_hi {
                                let ix = ox * g.stride + kx - g.pad;
                                acc += (g_plane[oy * os.w + ox] * in_plane[iy * is.w + ix]) as f64;
                            }
                        }
                        gw_o[(ic * kh + ky) * kw + kx] += acc as f32;
                    }
                }
            }
        }
    });
    let mut gb = vec![0.0f32; os.c];
    for (o, slot) in gb.iter_mut().enumerate() {
        let mut acc = 0.0f64;
        for b in 0..os.n {
            acc += gout[(b * os.c + o) * os.plane()..][..os.plane()]
                .iter()
                .map(|&v| v as f64)
                .sum::<f64>();
        }
        *slot = acc as f32;
    }
    (gw, gb)
}

/// Max pooling; returns output and the flat input index chosen per output
/// element (first maximum in row-major window order).
pub(crate) fn max_pool_forward(
    is: Shape,
    os: Shape,
    k: usize,
    stride: usize,
    x: &[f32],
) -> (Vec<f32>, Vec<u32>) {
    let mut out = vec![0.0f32; os.numel()];
    let mut arg = vec![0u32; os.numel()];
    for p in 0..is.n * is.c {
        let base = p * is.plane();
        for oy in 0..os.h {
            for ox in 0..os.w {
                let mut best = f32::NEG_INFINITY;
                let mut best_i = base + oy * stride * is.w + ox * stride;
                for ky in 0..k {
                    for kx in 0..k {
                        let i = base + (oy * stride + ky) * is.w + ox * stride + kx;
                        if x[i] > best {
                            best = x[i];
                            best_i = i;
                        }
                    }
                }
                let o = p * os.plane() + oy * os.w + ox;
                out[o] = best;
                arg[o] = best_i as u32;
            }
        }
    }
    (out, arg)
}

pub(crate) fn avg_pool_forward(is: Shape, os: Shape, k: usize, stride: usize, x: &[f32]) -> Vec<f32> {
    let mut out = vec![0.0f32; os.numel()];
    let norm = 1.0 / (k * k) as f32;
    par::for_each_chunk_mut(&mut out, os.plane(), |p, plane| {
        let base = p * is.plane();
        for oy in 0..os.h {
            for ox in 0..os.w {
                let mut acc = 0.0f32;
                for ky in 0..k {
                    let row = base + (oy * stride + ky) * is.w + ox * stride;
                    acc += x[row..row + k].iter().sum::<f32>();
                }
                plane[oy * os.w + ox] = acc * norm;
            }
        }
    });
    out
}

pub(crate) fn avg_pool_backward(is: Shape, os: Shape, k: usize, stride: usize, gout: &[f32]) -> Vec<f32> {
    let mut gx = vec![0.0f32; is.numel()];
    let norm = 1.0 / (k * k) as f32;
    par::for_each_chunk_mut(&mut gx, is.plane(), |p, plane| {
        let g = &gout[p * os.plane()..][..os.plane()];
        for oy in 0..os.h {
            for ox in 0..os.w {
                let v = g[oy * os.w + ox] * norm;
                for ky in 0..k {
                    let row = (oy * stride + ky) * is.w + ox * stride;
                    for cell in &mut plane[row..row + k] {
                        *cell += v;
                    }
                }
            }
        }
    });
    gx
}

pub(crate) fn softmax_channels_forward(s: Shape, x: &[f32]) -> Vec<f32> {
    let plane = s.plane();
    let mut out = vec![0.0f32; s.numel()];
    for b in 0..s.n {
        let base = b * s.c * plane;
        for p in 0..plane {
            let mut max = f32::NEG_INFINITY;
            for c in 0..s.c {
                max = max.max(x[base + c * plane + p]);
            }
            let mut sum = 0.0f64;
            for c in 0..s.c {
                let e = (x[base + c * plane + p] - max).exp();
                out[base + c * plane + p] = e;
                sum += e as f64;
            }
            let inv = (1.0 / sum) as f32;
            for c in 0..s.c {
                out[base + c * plane + p] *= inv;
            }
        }
    }
    out
}

pub(crate) fn softmax_channels_backward(s: Shape, y: &[f32], gout: &[f32]) -> Vec<f32> {
    let plane = s.plane();
    let mut gx = vec![0.0f32; s.numel()];
    for b in 0..s.n {
        let base = b * s.c * plane;
        for p in 0..plane {
            let mut dot = 0.0f64;
            for c in 0..s.c {
                let i = base + c * plane + p;
                dot += (gout[i] * y[i]) as f64;
            }
            let dot = dot as f32;
            for c in 0..s.c {
                let i = base + c * plane + p;
                gx[i] = y[i] * (gout[i] - dot);
            }
        }
    }
    gx
}

/// One output coordinate of a 1-D linear resampling: two source indices and weights.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LinearTap {
    pub i0: usize,
    pub i1: usize,
    pub w0: f32,
    pub w1: f32,
}

/// Half-pixel-centered linear taps (the `align_corners = false` convention).
pub(crate) fn linear_taps(input: usize, output: usize) -> Vec<LinearTap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            let w1 = (src - i0 as f64).clamp(0.0, 1.0) as f32;
            LinearTap {
                i0,
                i1,
                w0: 1.0 - w1,
                w1,
            }
        })
        .collect()
}

pub(crate) fn resize_forward(is: Shape, os: Shape, x: &[f32]) -> Vec<f32> {
    let ty = linear_taps(is.h, os.h);
    let tx = linear_taps(is.w, os.w);
    let mut out = vec![0.0f32; os.numel()];
    par::for_each_chunk_mut(&mut out, os.plane(), |p, plane| {
        let src = &x[p * is.plane()..][..is.plane()];
        for (oy, ry) in ty.iter().enumerate() {
            let r0 = &src[ry.i0 * is.w..][..is.w];
            let r1 = &src[ry.i1 * is.w..][..is.w];
            for (ox, rx) in tx.iter().enumerate() {
                let top = r0[rx.i0] * rx.w0 + r0[rx.i1] * rx.w1;
                let bot = r1[rx.i0] * rx.w0 + r1[rx.i1] * rx.w1;
                plane[oy * os.w + ox] = top * ry.w0 + bot * ry.w1;
            }
        }
    });
    out
}

pub(crate) fn resize_backward(is: Shape, os: Shape, gout: &[f32]) -> Vec<f32> {
    let ty = linear_taps(is.h, os.h);
    let tx = linear_taps(is.w, os.w);
    let mut gx = vec![0.0f32; is.numel()];
    par::for_each_chunk_mut(&mut gx, is.plane(), |p, plane| {
        let g = &gout[p * os.plane()..][..os.plane()];
        for (oy, ry) in ty.iter().enumerate() {
            for (ox, rx) in tx.iter().enumerate() {
                let v = g[oy * os.w + ox];
                plane[ry.i0 * is.w + rx.i0] += v * ry.w0 * rx.w0;
                plane[ry.i0 * is.w + rx.i1] += v * ry.w0 * rx.w1;
                plane[ry.i1 * is.w + rx.i0] += v * ry.w1 * rx.w0;
                plane[ry.i1 * is.w + rx.i1] += v * ry.w1 * rx.w1;
            }
        }
    });
    gx
}
