//! Acceptance checks. Each returns whether it held plus a one-line summary.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use texstyle::features::{FeatureSet, TapFeatures};
use texstyle::image_io;
use texstyle::losses::{
    color_palette_loss, concat_style_features, content_loss, gram_loss, nearest_matches, nnfm_loss, StyleBank,
};
use texstyle::palette::{kmeans_run, Palette, PaletteSource, Rgb};
use texstyle::features::Backbone;
use texstyle::pipeline::metrics::{autocorrelation_length, seam_discontinuity};
use texstyle::pipeline::{fixtures, OptimConfig, StyleAsset, Stylizer};
use texstyle::render::{composite_background, rasterize, shade, Camera, Material, Mesh, PointLight, Triangle};
use texstyle::tensor::{Graph, Shape, Tensor};

use super::{as_map, nnfm_reference, random_vectors, rng, rows, uniform};

pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Check {
            pass,
            detail: detail.into(),
        }
    }
}

fn single(map: Tensor) -> FeatureSet {
    FeatureSet {
        taps: vec![TapFeatures::single("t", map)],
    }
}

fn loss_value(f: impl FnOnce(&mut Graph, texstyle::NodeId) -> texstyle::Result<texstyle::NodeId>, x: &Tensor) -> f64 {
    let mut g = Graph::new();
    let n = g.constant(x.clone()).unwrap();
    let l = f(&mut g, n).unwrap();
    g.value(l).item() as f64
}

pub fn nnfm(render: &Tensor, style: &FeatureSet) -> f64 {
    let bank = StyleBank::new(style).unwrap();
    loss_value(|g, x| nnfm_loss(g, &[("t".into(), x)], &bank), render)
}

/// NNFM against an exhaustive double loop, plus the concatenation identity.
pub fn nnfm_oracle() -> Check {
    let mut r = rng(77);
    let mut worst = 0.0f64;
    let mut identity_ok = true;
    for _ in 0..100 {
        let m = r.random_range(1..=128);
        let n = r.random_range(1..=256);
        let c = r.random_range(1..=64);
        let rv = random_vectors(&mut r, m, c);
        let sv = random_vectors(&mut r, n, c);
        let (render, style) = (rows(&rv, c), rows(&sv, c));
        let got = nnfm(&as_map(&render), &single(as_map(&style)));
        worst = worst.max((got - nnfm_reference(&render, &style)).abs());

        let split = r.random_range(1..=n);
        let (s1, s2) = style.split_at(split);
        if s2.is_empty() {
            continue;
        }
        let f1 = single(as_map(s1));
        let f2 = single(as_map(s2));
        let joined = concat_style_features(&[f1.clone(), f2.clone()]).unwrap();
        let tap = |f: &FeatureSet| StyleBank::new(f).unwrap().tap("t").unwrap().clone();
        let rmap = as_map(&render);
        let d1 = nearest_matches(&rmap, &tap(&f1)).unwrap();
        let d2 = nearest_matches(&rmap, &tap(&f2)).unwrap();
        let d12 = nearest_matches(&rmap, &tap(&joined)).unwrap();
        let per_vector: Vec<f64> = d1.iter().zip(&d2).map(|(a, b)| a.1.min(b.1)).collect();
        identity_ok &= d12.iter().zip(&per_vector).all(|(j, &d)| j.1 == d);
        let mean = per_vector.iter().sum::<f64>() / m as f64;
        identity_ok &= nnfm(&rmap, &joined) == mean as f32 as f64;
    }
    Check::new(
        worst <= 1e-6 && identity_ok,
        format!("max |loss - brute force| = {worst:.2e} over 100 instances, concatenation identity exact: {identity_ok}"),
    )
}

pub fn gram_reference(map: &Tensor) -> Vec<f64> {
    let s = map.shape();
    let p = (s.n * s.h * s.w) as f64;
    let mut g = vec![0.0; s.c * s.c];
    for a in 0..s.c {
        for b in 0..s.c {
            let mut acc = 0.0;
            for n in 0..s.n {
                for y in 0..s.h {
                    for x in 0..s.w {
                        acc += map.at(n, a, y, x) as f64 * map.at(n, b, y, x) as f64;
                    }
                }
            }
            g[a * s.c + b] = acc / p;
        }
    }
    g
}

pub fn gram_loss_reference(render: &Tensor, style: &Tensor) -> f64 {
    let (gr, gs) = (gram_reference(render), gram_reference(style));
    gr.iter().zip(&gs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / gr.len() as f64
}

pub fn content_loss_reference(render: &Tensor, target: &Tensor) -> f64 {
    let n = render.numel() as f64;
    render
        .data()
        .iter()
        .zip(target.data())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum::<f64>()
        / n
}

pub fn color_loss_reference(texture: &Tensor, colors: &[Rgb]) -> f64 {
    let s = texture.shape();
    let mut total = 0.0;
    for y in 0..s.h {
        for x in 0..s.w {
            let best = colors
                .iter()
                .map(|p| (0..3).map(|c| (texture.at(0, c, y, x) as f64 - p[c] as f64).powi(2)).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            total += best;
        }
    }
    total / s.plane() as f64
}

pub fn color_loss(texture: &Tensor, palette: &Palette) -> f64 {
    loss_value(|g, x| color_palette_loss(g, x, palette), texture)
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

/// Self-match, union monotonicity, permutation invariance and the naive
/// Gram and content oracles.
pub fn loss_invariants() -> Check {
    let mut r = rng(91);
    let mut self_max = 0.0f64;
    let mut union_ok = true;
    let mut perm_ok = true;
    let mut gram_worst = 0.0f64;
    let mut content_worst = 0.0f64;
    for _ in 0..50 {
        let c = r.random_range(1..=16);
        let (h, w) = (r.random_range(1..6), r.random_range(1..6));
        let f = uniform(&mut r, Shape::new(1, c, h, w), -1.0, 1.0);
        self_max = self_max.max(nnfm(&f, &single(f.clone())));

        let render = uniform(&mut r, Shape::new(1, c, 4, 4), -1.0, 1.0);
        let s1 = single(uniform(&mut r, Shape::new(1, c, 3, 3), -1.0, 1.0));
        let s2 = single(uniform(&mut r, Shape::new(1, c, 2, 5), -1.0, 1.0));
        let joined = concat_style_features(&[s1.clone(), s2.clone()]).unwrap();
        let lu = nnfm(&render, &joined);
        union_ok &= lu <= nnfm(&render, &s1) && lu <= nnfm(&render, &s2);

        let mut colors: Vec<Rgb> = (0..r.random_range(1..=8))
            .map(|_| [r.random(), r.random(), r.random()])
            .collect();
        let tex = uniform(&mut r, Shape::new(1, 3, 6, 7), 0.0, 1.0);
        let base = color_loss(&tex, &Palette::new(colors.clone(), PaletteSource::Manual).unwrap());
        colors.shuffle(&mut r);
        let shuffled = color_loss(&tex, &Palette::new(colors, PaletteSource::Manual).unwrap());
        perm_ok &= base == shuffled;

        let style = uniform(&mut r, Shape::new(1, c, 5, 3), -1.0, 1.0);
        let got = loss_value(|g, x| gram_loss(g, &[("t".into(), x)], &single(style.clone())), &render);
        gram_worst = gram_worst.max(relative(got, gram_loss_reference(&render, &style)));

        let target = uniform(&mut r, render.shape(), -1.0, 1.0);
        let got = loss_value(|g, x| content_loss(g, &[("t".into(), x)], &single(target.clone())), &render);
        content_worst = content_worst.max(relative(got, content_loss_reference(&render, &target)));
    }
    let pass = self_max <= 1e-6 && union_ok && perm_ok && gram_worst <= 1e-5 && content_worst <= 1e-5;
    Check::new(
        pass,
        format!(
            "nnfm(F,F) max {self_max:.1e}, union monotone {union_ok}, palette permutation invariant {perm_ok}, \
             gram rel err {gram_worst:.1e}, content rel err {content_worst:.1e}"
        ),
    )
}

/// An image made of exactly `colors`, each used at least once.
pub fn quantized_image(r: &mut impl Rng, colors: &[Rgb], size: usize) -> Tensor {
    let mut owner: Vec<usize> = (0..size * size).map(|i| i % colors.len()).collect();
    owner.shuffle(r);
    Tensor::from_fn(Shape::new(1, 3, size, size), |_, c, y, x| colors[owner[y * size + x]][c])
}

fn sorted(mut v: Vec<Rgb>) -> Vec<Rgb> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

pub fn kmeans() -> Check {
    let mut r = rng(5);
    let mut monotone = 0;
    for i in 0..50 {
        let img = uniform(&mut r, Shape::new(1, 3, 16, 16), 0.0, 1.0);
        let q = 1 + i % 8;
        let run = kmeans_run(&img, q, i as u64, 50).unwrap();
        let mut objs = run.objectives.clone();
        objs.push(run.final_objective);
        if objs.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
    }
    let mut recovered = 0;
    for i in 0..20 {
        let q = 2 + i % 7;
        let colors: Vec<Rgb> = (0..q)
            .map(|k| {
                let level = |b: usize| if (k >> b) & 1 == 1 { 0.85 } else { 0.1 };
                [level(0), level(1), (level(2) + 0.05 * (k / 8) as f32).min(1.0)]
            })
            .collect();
        let img = quantized_image(&mut r, &colors, 12);
        let pal = kmeans_run(&img, q, 100 + i as u64, 50).unwrap().palette;
        if sorted(pal.colors().to_vec()) == sorted(colors) {
            recovered += 1;
        }
    }
    Check::new(
        monotone == 50 && recovered == 20,
        format!("objective monotone on {monotone}/50 images, exact recovery on {recovered}/20 quantized images"),
    )
}

fn quad(positions: [[f32; 3]; 4], uv: [[f32; 2]; 4], normal: [f32; 3]) -> Mesh {
    let t = |p: [u32; 3]| Triangle {
        position: p,
        uv: p,
        normal: [0; 3],
    };
    Mesh::new(positions.to_vec(), uv.to_vec(), vec![normal], vec![t([0, 1, 2]), t([0, 2, 3])]).unwrap()
}

pub fn merge(meshes: &[Mesh]) -> Mesh {
    let mut out = Mesh {
        positions: vec![],
        uvs: vec![],
        normals: vec![],
        triangles: vec![],
    };
    for m in meshes {
        let (p, u, n) = (out.positions.len() as u32, out.uvs.len() as u32, out.normals.len() as u32);
        out.positions.extend(&m.positions);
        out.uvs.extend(&m.uvs);
        out.normals.extend(&m.normals);
        out.triangles.extend(m.triangles.iter().map(|t| Triangle {
            position: t.position.map(|i| i + p),
            uv: t.uv.map(|i| i + u),
            normal: t.normal.map(|i| i + n),
        }));
    }
    Mesh::new(out.positions, out.uvs, out.normals, out.triangles).unwrap()
}

/// A large back square on the left half of the texture, and a smaller
/// square in front of it using the right half.
pub fn occlusion_scene() -> (Mesh, Camera) {
    let back = quad(
        [[-1.0, -1.0, 0.0], [1.0, -1.0, 0.0], [1.0, 1.0, 0.0], [-1.0, 1.0, 0.0]],
        [[0.0, 0.0], [0.5, 0.0], [0.5, 1.0], [0.0, 1.0]],
        [0.0, 0.0, 1.0],
    );
    let front = quad(
        [[-0.4, -0.4, 0.5], [0.4, -0.4, 0.5], [0.4, 0.4, 0.5], [-0.4, 0.4, 0.5]],
        [[0.5, 0.0], [1.0, 0.0], [1.0, 1.0], [0.5, 1.0]],
        [0.0, 0.0, 1.0],
    );
    let cam = Camera::orbit([0.0; 3], [0.0, 0.0, 1.0], 3.0, 45f64.to_radians(), 0.1, 100.0);
    (merge(&[back, front]), cam)
}

pub fn flat_material() -> Material {
    Material {
        specular_exponent: 2.0,
        ambient: 1.0,
        diffuse: 0.0,
        specular: 0.0,
    }
}

pub fn golden_texture() -> Tensor {
    Tensor::from_fn(Shape::new(1, 3, 16, 16), |_, c, y, x| {
        ((x * 37 + y * 11 + c * 53) % 97) as f32 / 96.0
    })
}

/// Render of the occlusion scene and the same render composited over a
/// gradient background.
pub fn golden_renders() -> (Tensor, Tensor) {
    let (mesh, cam) = occlusion_scene();
    let light = PointLight {
        position: [0.0, 0.0, 3.0],
        power: 2.0,
    };
    let gbuf = rasterize(&mesh, &cam, 48, 48);
    let mut g = Graph::new();
    let t = g.constant(golden_texture()).unwrap();
    let img = shade(&mut g, &gbuf, t, &light, &flat_material(), &cam).unwrap();
    let bg = Tensor::from_fn(Shape::new(1, 3, 48, 48), |_, c, y, x| [x as f32 / 47.0, y as f32 / 47.0, 0.5][c]);
    let comp = composite_background(&mut g, img, &gbuf.mask(), &bg).unwrap();
    (g.value(img).clone(), g.value(comp).clone())
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// Compares `img` with the stored golden PNG byte for byte. Setting
/// `TEXSTYLE_BLESS=1` rewrites the golden file instead.
pub fn matches_golden(name: &str, img: &Tensor) -> bool {
    let path = golden_dir().join(name);
    let bytes = image_io::to_rgb8(img).unwrap();
    if std::env::var_os("TEXSTYLE_BLESS").is_some() {
        std::fs::create_dir_all(golden_dir()).unwrap();
        bytes.save(&path).unwrap();
        return true;
    }
    match image::open(&path) {
        Ok(stored) => stored.to_rgb8().as_raw() == bytes.as_raw(),
        Err(_) => false,
    }
}

/// Texels of the back square hidden by the front square, by the center
/// of their bilinear footprint in world space seen from the camera.
pub fn occluded_gradients() -> (usize, usize, usize) {
    let (mesh, cam) = occlusion_scene();
    let light = PointLight {
        position: [0.0, 0.0, 3.0],
        power: 2.0,
    };
    let gbuf = rasterize(&mesh, &cam, 64, 64);
    let mut g = Graph::new();
    let t = g.param(golden_texture()).unwrap();
    let img = shade(&mut g, &gbuf, t, &light, &flat_material(), &cam).unwrap();
    let loss = g.sum(img).unwrap();
    let grad = g.backward(loss).unwrap().take(t).unwrap();
    // front square at z = 0.5 seen from z = 3 shadows |x|, |y| < 0.4 * 3 / 2.5 on z = 0
    let shadow = 0.4 * 3.0 / 2.5;
    let (mut hidden, mut hidden_zero, mut visible_nonzero) = (0, 0, 0);
    for j in 0..16 {
        for i in 0..8 {
            // texel footprint spans one texel either side of its center
            let x_lo = -1.0 + 2.0 * ((i as f64 - 0.5) / 8.0);
            let x_hi = -1.0 + 2.0 * ((i as f64 + 1.5) / 8.0);
            let y_hi = 1.0 - 2.0 * ((j as f64 - 0.5) / 16.0);
            let y_lo = 1.0 - 2.0 * ((j as f64 + 1.5) / 16.0);
            let g0 = (0..3).map(|c| grad.at(0, c, j, i).abs()).fold(0.0f32, f32::max);
            if x_lo > -shadow && x_hi < shadow && y_lo > -shadow && y_hi < shadow {
                hidden += 1;
                if g0 == 0.0 {
                    hidden_zero += 1;
                }
            } else if x_lo > -0.9 && x_hi < 0.9 && y_lo > -0.9 && y_hi < 0.9 && g0 > 0.0 {
                visible_nonzero += 1;
            }
        }
    }
    (hidden, hidden_zero, visible_nonzero)
}

/// Two coplanar squares over the same pixels: the earlier triangles must
/// win every pixel.
pub fn depth_tie_winner_is_first() -> bool {
    let pos = [[-1.0, -1.0, 0.0], [1.0, -1.0, 0.0], [1.0, 1.0, 0.0], [-1.0, 1.0, 0.0]];
    let a = quad(pos, [[0.0, 0.0], [0.5, 0.0], [0.5, 1.0], [0.0, 1.0]], [0.0, 0.0, 1.0]);
    let b = quad(pos, [[0.5, 0.0], [1.0, 0.0], [1.0, 1.0], [0.5, 1.0]], [0.0, 0.0, 1.0]);
    let cam = Camera::orbit([0.0; 3], [0.1, 0.2, 1.0], 2.5, 45f64.to_radians(), 0.1, 100.0);
    let gbuf = rasterize(&merge(&[a, b]), &cam, 40, 40);
    gbuf.coverage() > 0 && gbuf.pixels.iter().flatten().all(|f| f.triangle < 2)
}

pub fn uv_wrap_pinned() -> bool {
    let tex = golden_texture();
    let at = |u: f32, v: f32| texstyle::render::sample_texture(&tex, [u, v]);
    let close = |a: Vec<f32>, b: Vec<f32>| a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-4);
    close(at(0.3, 0.7), at(1.3, -0.3)) && close(at(0.3, 0.7), at(-1.7, 2.7)) && {
        // u = 0 is halfway between the last and first texel columns
        let v = at(0.0, 1.0 - 0.5 / 16.0);
        let expect: Vec<f32> = (0..3).map(|c| 0.5 * (tex.at(0, c, 0, 15) + tex.at(0, c, 0, 0))).collect();
        close(v, expect)
    }
}

pub fn renderer() -> Check {
    let (hidden, hidden_zero, visible) = occluded_gradients();
    let (a1, c1) = golden_renders();
    let (a2, c2) = golden_renders();
    let rerun = a1 == a2 && c1 == c2;
    let golden = matches_golden("depth.png", &a1) && matches_golden("composite.png", &c1);
    let tie = depth_tie_winner_is_first();
    let wrap = uv_wrap_pinned();
    Check::new(
        hidden > 0 && hidden_zero == hidden && visible > 0 && rerun && golden && tie && wrap,
        format!(
            "occluded texels with zero gradient {hidden_zero}/{hidden} (visible with gradient {visible}), \
             reruns identical {rerun}, golden match {golden}, depth tie {tie}, uv wrap {wrap}"
        ),
    )
}

pub fn defaults_audit() -> Check {
    let cfg = OptimConfig::default();
    let w = cfg.loss_weights();
    let text = cfg.to_text();
    let checks = [
        ("batch_size", cfg.batch_size == 8),
        ("learning_rate", cfg.learning_rate == 1e-2),
        ("light_power", cfg.light_power == 2.0),
        ("light_radius", cfg.light_radius == [3.0, 5.0]),
        ("specular_exponent", cfg.specular_exponent == 2.0),
        ("render_resolution", cfg.render_resolution == 512),
        ("texture_resolution", cfg.texture_resolution == 1024),
        ("lambda_nnfm", cfg.lambda_nnfm == 1e4),
        ("lambda_content", cfg.lambda_content == 22.0),
        ("lambda_color", cfg.lambda_color == 2000.0 && w.color_at(0) == 2000.0),
        (
            "color decay",
            w.color_at(cfg.iterations / 2) < 2000.0 && w.color_at(cfg.iterations) == 0.0,
        ),
        (
            "resolved text",
            OptimConfig::parse(&text).map(|c| c == cfg).unwrap_or(false),
        ),
    ];
    let bad: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Check::new(
        bad.is_empty(),
        if bad.is_empty() {
            "batch 8, lr 1e-2, light power 2 at radius [3,5], specular exponent 2, 512 render, 1024 texture, \
             weights 1e4/22/2000 with decay"
                .to_string()
        } else {
            format!("mismatched: {}", bad.join(", "))
        },
    )
}

pub const SMOKE_CONFIG: &str = "\
camera_distance = 3
batch_size = 2
render_resolution = 32
texture_resolution = 8
iterations = 200
style_backbone = toy
content_backbone = toy
seed = 7
";

/// The tiny end-to-end run: quad, 8x8 checkerboard, stripe style, K-means
/// palette, toy backbone.
pub fn smoke_run() -> Stylizer {
    let cfg = OptimConfig::parse(SMOKE_CONFIG).unwrap();
    let tex = fixtures::checkerboard(8, 2, [0.8, 0.2, 0.2], [0.2, 0.2, 0.8]);
    let style = fixtures::stripes(32, 4, [1.0, 0.9, 0.1], [0.1, 0.5, 0.2]);
    let mut asset = StyleAsset::new(fixtures::quad_mesh(), tex, vec![style]).unwrap();
    asset.extract_palette(cfg.palette_q, cfg.seed, cfg.kmeans_max_iters).unwrap();
    let bb = Arc::new(Backbone::toy(cfg.seed));
    let mut s = Stylizer::new(asset, cfg, bb.clone(), bb).unwrap();
    s.run().unwrap();
    s
}

pub fn smoke() -> Check {
    let start = Instant::now();
    let a = smoke_run();
    let secs = start.elapsed().as_secs_f64();
    let b = smoke_run();
    let r = a.reports();
    let mean = |xs: &[texstyle::losses::LossReport]| xs.iter().map(|x| x.total).sum::<f64>() / xs.len() as f64;
    let (first, last) = (mean(&r[..10]), mean(&r[r.len() - 10..]));
    let ratio = last / first;
    let same = a.loss_csv() == b.loss_csv();
    Check::new(
        r.len() == 200 && ratio <= 0.5 && same && secs < 300.0,
        format!(
            "last-10 mean / first-10 mean = {ratio:.3} ({first:.4} -> {last:.4}), CSV identical across reruns {same}, \
             {secs:.1}s per run"
        ),
    )
}

/// Style-only optimization of the tiny quad from a fixed camera distance.
fn distance_run(r: f64) -> Tensor {
    let cfg = OptimConfig::parse(&format!(
        "camera_distance = {r}\nbatch_size = 2\nrender_resolution = 112\ntexture_resolution = 64\n\
         iterations = 300\nstyle_backbone = toy\ncontent_backbone = toy\nseed = 0\n\
         lambda_nnfm = 1\nlambda_content = 0\nlambda_color = 0\nambient = 1\ndiffuse = 0\nspecular = 0\n\
         smooth_features = false\nstyle_vector_cap = 512\n"
    ))
    .unwrap();
    let tex = fixtures::checkerboard(64, 1, [0.5; 3], [0.5; 3]);
    let style = fixtures::stripes(112, 10, [1.0, 0.9, 0.1], [0.1, 0.2, 0.6]);
    let asset = StyleAsset::new(fixtures::quad_mesh(), tex, vec![style]).unwrap();
    let bb = Arc::new(Backbone::toy_with_width(cfg.seed, 16));
    let mut s = Stylizer::new(asset, cfg, bb.clone(), bb).unwrap();
    s.run().unwrap();
    s.asset().style_texture.clone()
}

pub fn camera_distance_trend() -> Check {
    let lengths: Vec<f64> = [1.0, 2.0, 4.0].iter().map(|&r| autocorrelation_length(&distance_run(r))).collect();
    Check::new(
        lengths[0] < lengths[1] && lengths[1] < lengths[2],
        format!("T_S autocorrelation length at r = 1, 2, 4: {lengths:.2?}"),
    )
}

fn seam_run(mode: &str) -> Stylizer {
    let cfg = OptimConfig::parse(&format!(
        "camera_distance = 3\nbatch_size = 2\nrender_resolution = 64\ntexture_resolution = 32\n\
         iterations = 200\nstyle_backbone = toy\ncontent_backbone = toy\nseed = 0\nmode = {mode}\n"
    ))
    .unwrap();
    let (mesh, _) = fixtures::seam_quad_pair();
    let tex = fixtures::checkerboard(32, 4, [0.8, 0.2, 0.2], [0.2, 0.2, 0.8]);
    let style = fixtures::stripes(64, 4, [1.0, 0.9, 0.1], [0.1, 0.5, 0.2]);
    let mut asset = StyleAsset::new(mesh, tex, vec![style]).unwrap();
    asset.extract_palette(cfg.palette_q, cfg.seed, cfg.kmeans_max_iters).unwrap();
    let bb = Arc::new(Backbone::toy(cfg.seed));
    let mut s = Stylizer::new(asset, cfg, bb.clone(), bb).unwrap();
    s.run().unwrap();
    s
}

pub fn direct_texture_seams() -> Check {
    let (_, seams) = fixtures::seam_quad_pair();
    let initial = seam_discontinuity(&fixtures::checkerboard(32, 4, [0.8, 0.2, 0.2], [0.2, 0.2, 0.8]), &seams, 64);
    let rendered = seam_discontinuity(&seam_run("rendered").asset().combined_texture(), &seams, 64);
    let direct = seam_discontinuity(&seam_run("direct_texture").asset().combined_texture(), &seams, 64);
    Check::new(
        direct > rendered,
        format!("seam discontinuity: initial {initial:.4}, rendered {rendered:.4}, direct_texture {direct:.4}"),
    )
}
