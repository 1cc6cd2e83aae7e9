//! Finite-difference cases covering every differentiable operation.

use rand::seq::SliceRandom;
use rand::Rng;
use texstyle::features::{Backbone, FeatureSet, TapFeatures};
use texstyle::losses::{color_palette_loss, content_loss, gram_loss, nnfm_loss, StyleBank};
use texstyle::palette::{Palette, PaletteSource};
use texstyle::pipeline::fixtures;
use texstyle::render::{composite_background, gather_texture, rasterize, shade, Camera, GBuffer, Material, PointLight};
use texstyle::tensor::{NodeId, PoolKind, Shape, Tensor};

use super::{away_from_zero, fd_check, rng, uniform, FdReport};

pub const SAMPLES: usize = 200;

fn oblique_gbuffer(size: usize) -> (GBuffer, Camera) {
    let cam = Camera::orbit([0.0; 3], [0.3, 0.4, 1.0], 2.2, 45f64.to_radians(), 0.1, 100.0);
    (rasterize(&fixtures::quad_mesh(), &cam, size, size), cam)
}

fn features(name: &str, t: Tensor) -> FeatureSet {
    FeatureSet {
        taps: vec![TapFeatures::single(name, t)],
    }
}

/// Runs every case and returns `(name, report)` pairs.
pub fn run_all() -> Vec<(String, FdReport)> {
    let mut out = Vec::new();
    let mut push = |name: &str, r: FdReport| out.push((name.to_string(), r));
    let mut r = rng(2024);

    // convolution, each operand in turn
    let x = uniform(&mut r, Shape::new(2, 3, 8, 8), -1.0, 1.0);
    let w = uniform(&mut r, Shape::new(4, 3, 3, 3), -0.5, 0.5);
    let b = uniform(&mut r, Shape::new(1, 1, 1, 4), -0.5, 0.5);
    // small activations keep f32 rounding of the outputs under the floor
    let x_in = uniform(&mut r, Shape::new(2, 3, 8, 8), -0.1, 0.1);
    push(
        "conv2d/input",
        fd_check(&x_in, SAMPLES, 1, |g, x| {
            let w = g.constant(w.clone())?;
            let b = g.constant(b.clone())?;
            g.conv2d(x, w, Some(b), 1, 1)
        }),
    );
    let w_big = uniform(&mut r, Shape::new(8, 3, 3, 3), -0.5, 0.5);
    let x_small = uniform(&mut r, Shape::new(1, 3, 7, 7), -1.0, 1.0);
    push(
        "conv2d/weight",
        fd_check(&w_big, SAMPLES, 2, |g, w| {
            let x = g.constant(x_small.clone())?;
            g.conv2d(x, w, None, 2, 1)
        }),
    );
    let bias = uniform(&mut r, Shape::new(1, 1, 1, 200), -0.5, 0.5);
    let w_1x1 = uniform(&mut r, Shape::new(200, 2, 1, 1), -0.5, 0.5);
    let x_1x1 = uniform(&mut r, Shape::new(1, 2, 3, 3), -1.0, 1.0);
    push(
        "conv2d/bias",
        fd_check(&bias, SAMPLES, 3, |g, b| {
            let x = g.constant(x_1x1.clone())?;
            let w = g.constant(w_1x1.clone())?;
            g.conv2d(x, w, Some(b), 1, 0)
        }),
    );

    // elementwise
    let xs = away_from_zero(&mut r, Shape::new(1, 4, 8, 8), 0.05, 1.0);
    push("relu", fd_check(&xs, SAMPLES, 4, |g, x| g.relu(x)));
    let xc = Tensor::from_fn(Shape::new(1, 4, 8, 8), |_, _, _, _| {
        let v: f32 = r.random_range(-0.45..1.45);
        if v.abs() < 0.02 || (v - 1.0).abs() < 0.02 {
            v + 0.05
        } else {
            v
        }
    });
    push("clamp01", fd_check(&xc, SAMPLES, 5, |g, x| g.clamp01(x)));
    push("scale", fd_check(&xs, SAMPLES, 6, |g, x| g.scale(x, -1.7)));
    let other = uniform(&mut r, Shape::new(1, 4, 8, 8), -1.0, 1.0);
    push(
        "add",
        fd_check(&xs, SAMPLES, 7, |g, x| {
            let o = g.constant(other.clone())?;
            g.add(x, o)
        }),
    );
    push(
        "sub/left",
        fd_check(&xs, SAMPLES, 8, |g, x| {
            let o = g.constant(other.clone())?;
            g.sub(x, o)
        }),
    );
    push(
        "sub/right",
        fd_check(&xs, SAMPLES, 9, |g, x| {
            let o = g.constant(other.clone())?;
            g.sub(o, x)
        }),
    );
    push(
        "mul",
        fd_check(&xs, SAMPLES, 10, |g, x| {
            let o = g.constant(other.clone())?;
            g.mul(o, x)
        }),
    );
    push("mul/square", fd_check(&xs, SAMPLES, 11, |g, x| g.mul(x, x)));

    // pooling
    let xp = uniform(&mut r, Shape::new(2, 3, 8, 8), -1.0, 1.0);
    // distinct values spaced wider than the step keep every window's argmax stable
    let xd = {
        let s = Shape::new(2, 3, 8, 8);
        let mut order: Vec<usize> = (0..s.numel()).collect();
        order.shuffle(&mut r);
        Tensor::new(s, order.iter().map(|&k| k as f32 * 0.01 - 1.9).collect()).unwrap()
    };
    push("max_pool/k2s2", fd_check(&xd, SAMPLES, 12, |g, x| g.pool2d(x, PoolKind::Max, 2, 2)));
    push("max_pool/k3s1", fd_check(&xd, SAMPLES, 13, |g, x| g.pool2d(x, PoolKind::Max, 3, 1)));
    push("avg_pool/k2s2", fd_check(&xp, SAMPLES, 14, |g, x| g.pool2d(x, PoolKind::Avg, 2, 2)));
    push("avg_pool/k3s2", fd_check(&xp, SAMPLES, 15, |g, x| g.pool2d(x, PoolKind::Avg, 3, 2)));

    // channel ops and resampling
    let xm = uniform(&mut r, Shape::new(2, 5, 5, 5), -2.0, 2.0);
    push("softmax_channels", fd_check(&xm, SAMPLES, 16, |g, x| g.softmax_channels(x)));
    push(
        "channel_affine",
        fd_check(&xm, SAMPLES, 17, |g, x| g.channel_affine(x, &[0.5, -1.0, 2.0, 1.5, 0.1], &[0.1, 0.2, -0.3, 0.0, 1.0])),
    );
    push("resize/up", fd_check(&xm, SAMPLES, 18, |g, x| g.resize_bilinear(x, 9, 7)));
    push("resize/down", fd_check(&xp, SAMPLES, 19, |g, x| g.resize_bilinear(x, 3, 5)));
    push("sum", fd_check(&xm, SAMPLES, 20, |g, x| g.sum(x)));
    push("mean", fd_check(&xm, SAMPLES, 21, |g, x| g.mean(x)));
    push(
        "chain/conv-relu-pool",
        fd_check(&x, SAMPLES, 22, |g, x| {
            let w = g.constant(w.clone())?;
            let b = g.constant(b.clone())?;
            let y = g.conv2d(x, w, Some(b), 1, 1)?;
            let y = g.relu(y)?;
            g.pool2d(y, PoolKind::Max, 2, 2)
        }),
    );

    // renderer
    let (gbuf, cam) = oblique_gbuffer(24);
    let tex = uniform(&mut r, Shape::new(1, 3, 12, 12), 0.1, 0.9);
    push("texture_gather", fd_check(&tex, SAMPLES, 23, |g, t| gather_texture(g, t, &gbuf)));
    let light = PointLight {
        position: [1.0, 2.0, 2.0],
        power: 2.0,
    };
    let material = Material {
        specular_exponent: 2.0,
        ambient: 0.2,
        diffuse: 1.0,
        specular: 0.3,
    };
    push(
        "phong_shade",
        fd_check(&tex, SAMPLES, 24, |g, t| shade(g, &gbuf, t, &light, &material, &cam)),
    );
    let img = uniform(&mut r, Shape::new(1, 3, 12, 12), 0.0, 1.0);
    let mask = Tensor::from_fn(Shape::new(1, 1, 12, 12), |_, _, y, x| ((x + y) % 2) as f32);
    let bg = uniform(&mut r, Shape::new(1, 3, 12, 12), 0.0, 1.0);
    push(
        "composite_background",
        fd_check(&img, SAMPLES, 25, |g, x| composite_background(g, x, &mask, &bg)),
    );

    // Losses are evaluated near a minimum so the f32 loss value is small
    // next to its gradient, then scaled so gradients clear the floor.
    let style_f = uniform(&mut r, Shape::new(1, 8, 8, 8), -1.0, 1.0);
    let picks: Vec<(usize, usize)> = (0..32).map(|_| (r.random_range(0..8), r.random_range(0..8))).collect();
    let noise = uniform(&mut r, Shape::new(1, 8, 4, 8), -0.05, 0.05);
    let render_f = Tensor::from_fn(Shape::new(1, 8, 4, 8), |_, c, y, x| {
        let (sy, sx) = picks[y * 8 + x];
        style_f.at(0, c, sy, sx) + noise.at(0, c, y, x)
    });
    let style_set = features("t", style_f);
    let bank = StyleBank::new(&style_set).unwrap();
    push(
        "nnfm_loss",
        fd_check(&render_f, SAMPLES, 26, |g, x| {
            let l = nnfm_loss(g, &[("t".to_string(), x)], &bank)?;
            g.scale(l, 32.0)
        }),
    );
    let gram_render = uniform(&mut r, Shape::new(1, 8, 4, 8), -1.0, 1.0);
    push(
        "gram_loss",
        fd_check(&gram_render, SAMPLES, 27, |g, x| {
            let l = gram_loss(g, &[("t".to_string(), x)], &style_set)?;
            g.scale(l, 32.0)
        }),
    );
    let shift = uniform(&mut r, Shape::new(1, 8, 4, 8), -0.05, 0.05);
    let content = features(
        "t",
        Tensor::from_fn(Shape::new(1, 8, 4, 8), |_, c, y, x| render_f.at(0, c, y, x) + shift.at(0, c, y, x)),
    );
    push(
        "content_loss",
        fd_check(&render_f, SAMPLES, 28, |g, x| {
            let l = content_loss(g, &[("t".to_string(), x)], &content)?;
            g.scale(l, 256.0)
        }),
    );
    let colors: Vec<[f32; 3]> = vec![
        [0.1, 0.1, 0.1],
        [0.9, 0.1, 0.1],
        [0.1, 0.9, 0.1],
        [0.1, 0.1, 0.9],
        [0.9, 0.9, 0.1],
        [0.9, 0.1, 0.9],
        [0.1, 0.9, 0.9],
        [0.9, 0.9, 0.9],
    ];
    let palette = Palette::new(colors.clone(), PaletteSource::Manual).unwrap();
    let owner: Vec<usize> = (0..100).map(|_| r.random_range(0..8)).collect();
    let jitter = uniform(&mut r, Shape::new(1, 3, 10, 10), -0.05, 0.05);
    let tex_c = Tensor::from_fn(Shape::new(1, 3, 10, 10), |_, c, y, x| {
        colors[owner[y * 10 + x]][c] + jitter.at(0, c, y, x)
    });
    push(
        "color_palette_loss",
        fd_check(&tex_c, SAMPLES, 29, |g, x| {
            let l = color_palette_loss(g, x, &palette)?;
            g.scale(l, 100.0)
        }),
    );

    // feature extraction through the toy backbone
    let toy = Backbone::toy(11);
    let image = uniform(&mut r, Shape::new(1, 3, 12, 12), 0.0, 1.0);
    push(
        "toy_backbone/tap_mean",
        fd_check(&image, SAMPLES, 30, |g, x| {
            let taps = toy.features(g, x, true)?;
            let means: Vec<NodeId> = taps.iter().map(|(_, n)| g.mean(*n)).collect::<texstyle::Result<_>>()?;
            let mut acc = means[0];
            for &m in &means[1..] {
                acc = g.add(acc, m)?;
            }
            g.scale(acc, 100.0)
        }),
    );
    out
}
