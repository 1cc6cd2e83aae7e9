//! The optimization loop: randomized views, two-branch losses, Adam on the
//! additive style texture, and run artifacts.

mod adam;
mod config;
pub mod fixtures;
pub mod metrics;
mod scene;

pub use adam::Adam;
pub use config::{Mode, OptimConfig, StyleLoss};
pub use scene::{eval_scenes, hemisphere_direction, sample_scene, sphere_direction, SceneSample};

use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{Backbone, FeatureSet, WeightArchive, TOY};
use crate::image_io;
use crate::losses::{self, LossReport, LossTerms, StyleBank};
use crate::palette::{self, Palette};
use crate::par;
use crate::render::{self, composite_background, rasterize, shade, Mesh};
use crate::tensor::{Graph, NodeId, Shape, Tensor};

/// Everything the optimization reads, plus the learned style texture.
#[derive(Clone, Debug)]
pub struct StyleAsset {
    pub mesh: Mesh,
    /// Original texture T, (1, 3, H, W). Never modified.
    pub texture: Tensor,
    /// Learned additive texture T_S, same extents as T.
    pub style_texture: Tensor,
    pub styles: Vec<Tensor>,
    /// Index of the style image used for palette extraction.
    pub primary: usize,
    pub palette: Option<Palette>,
}

impl StyleAsset {
    pub fn new(mesh: Mesh, texture: Tensor, styles: Vec<Tensor>) -> Result<Self> {
        let s = texture.shape();
        if s.n != 1 || s.c != 3 {
            return Err(Error::config(format!("texture must be (1, 3, H, W), got {s}")));
        }
        if styles.is_empty() {
            return Err(Error::config("at least one style image is required"));
        }
        if let Some(bad) = styles.iter().find(|t| t.shape().n != 1 || t.shape().c != 3) {
            return Err(Error::config(format!("style image must be (1, 3, H, W), got {}", bad.shape())));
        }
        Ok(StyleAsset {
            mesh,
            style_texture: Tensor::zeros(s),
            texture,
            styles,
            primary: 0,
            palette: None,
        })
    }

    pub fn with_palette(mut self, palette: Palette) -> Self {
        self.palette = Some(palette);
        self
    }

    /// Resamples T to `size` x `size` and resets T_S to zero.
    pub fn with_texture_resolution(mut self, size: usize) -> Self {
        let s = self.texture.shape();
        if s.h != size || s.w != size {
            self.texture = self.texture.resized(size, size);
        }
        self.style_texture = Tensor::zeros(self.texture.shape());
        self
    }

    /// K-means palette of the primary style image.
    pub fn extract_palette(&mut self, q: usize, seed: u64, max_iters: usize) -> Result<()> {
        self.palette = Some(palette::kmeans_extract(&self.styles[self.primary], q, seed, max_iters)?);
        Ok(())
    }

    /// `clamp01(T + T_S)`.
    pub fn combined_texture(&self) -> Tensor {
        let mut out = self.texture.clone();
        for (o, s) in out.data_mut().iter_mut().zip(self.style_texture.data()) {
            *o = (*o + s).clamp(0.0, 1.0);
        }
        out
    }
}

/// Builds the backbone named `id`. Pretrained backbones need an archive;
/// the toy backbone is generated from `seed`.
pub fn load_backbone(id: &str, archive: Option<&WeightArchive>, seed: u64, resize_to_native: bool) -> Result<Backbone> {
    let b = if id == TOY {
        Backbone::toy(seed)
    } else {
        let a = archive.ok_or_else(|| Error::config(format!("backbone `{id}` needs a weight archive (--weights)")))?;
        Backbone::from_archive(a, id)?
    };
    Ok(b.with_resize_to_native(resize_to_native))
}

/// The gradient and loss terms of one batch element.
struct ElementResult {
    terms: LossTerms,
    grad: Option<Tensor>,
}

/// Runs the optimization for one asset.
pub struct Stylizer {
    cfg: OptimConfig,
    asset: StyleAsset,
    style_backbone: Arc<Backbone>,
    content_backbone: Arc<Backbone>,
    style_bank: StyleBank,
    style_set: FeatureSet,
    style_background: Tensor,
    content_background: Tensor,
    adam: Adam,
    rng: ChaCha8Rng,
    reports: Vec<LossReport>,
    last_scenes: Vec<SceneSample>,
}

fn solid(shape: Shape, rgb: [f32; 3]) -> Tensor {
    Tensor::from_fn(shape, |_, c, _, _| rgb[c])
}

impl Stylizer {
    pub fn new(asset: StyleAsset, cfg: OptimConfig, style_backbone: Arc<Backbone>, content_backbone: Arc<Backbone>) -> Result<Self> {
        cfg.validate()?;
        cfg.material().validate()?;
        let asset = asset.with_texture_resolution(cfg.texture_resolution);
        if cfg.lambda_color > 0.0 && asset.palette.is_none() {
            return Err(Error::config("lambda_color > 0 needs a palette"));
        }
        let res = cfg.render_resolution;
        let image_shape = Shape::new(1, 3, res, res);
        let mut sets = Vec::with_capacity(asset.styles.len());
        for s in &asset.styles {
            let img = s.resized(res, res);
            sets.push(style_backbone.feature_set(&img, cfg.smooth_features)?);
        }
        let style_set = losses::concat_style_features(&sets)?;
        let mut style_bank = StyleBank::new(&style_set)?;
        if cfg.style_vector_cap > 0 {
            style_bank = style_bank.subsample(cfg.style_vector_cap, cfg.seed ^ 0x5eed);
        }
        info!(
            "style features: {} vectors over {} taps from {} image(s)",
            style_set.vector_count(),
            style_set.taps.len(),
            asset.styles.len()
        );
        let style_background = asset.styles[asset.primary].resized(res, res);
        let content_background = solid(image_shape, cfg.content_background);
        let adam = Adam::new(asset.style_texture.numel(), cfg.learning_rate);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Stylizer {
            cfg,
            asset,
            style_backbone,
            content_backbone,
            style_bank,
            style_set,
            style_background,
            content_background,
            adam,
            rng,
            reports: Vec::new(),
            last_scenes: Vec::new(),
        })
    }

    pub fn config(&self) -> &OptimConfig {
        &self.cfg
    }

    pub fn asset(&self) -> &StyleAsset {
        &self.asset
    }

    pub fn reports(&self) -> &[LossReport] {
        &self.reports
    }

    pub fn iteration(&self) -> usize {
        self.reports.len()
    }

    /// Scene samples of the most recent rendered iteration.
    pub fn last_scenes(&self) -> &[SceneSample] {
        &self.last_scenes
    }

    /// Style loss of `image` (a graph node) against the style features.
    fn style_term(&self, g: &mut Graph, image: NodeId) -> Result<NodeId> {
        let taps = self.style_backbone.features(g, image, self.cfg.smooth_features)?;
        match self.cfg.style_loss {
            StyleLoss::Nnfm => losses::nnfm_loss(g, &taps, &self.style_bank),
            StyleLoss::Gram => losses::gram_loss(g, &taps, &self.style_set),
        }
    }

    /// Content loss of `image` against fixed `reference` features.
    fn content_term(&self, g: &mut Graph, image: NodeId, reference: &Tensor) -> Result<NodeId> {
        let content = self.content_backbone.feature_set(reference, false)?;
        let taps = self.content_backbone.features(g, image, false)?;
        losses::content_loss(g, &taps, &content)
    }

    /// Finishes a graph: weighted total, backward, and the T_S gradient.
    fn finish(g: &mut Graph, ts: NodeId, parts: &[(NodeId, f64)], terms: LossTerms) -> Result<ElementResult> {
        let grad = match losses::weighted_sum(g, parts)? {
            Some(loss) => g.backward(loss)?.take(ts),
            None => None,
        };
        Ok(ElementResult { terms, grad })
    }

    fn element(&self, scene: &SceneSample) -> Result<ElementResult> {
        let cfg = &self.cfg;
        let res = cfg.render_resolution;
        let mut g = Graph::new();
        let ts = g.param(self.asset.style_texture.clone())?;
        let t = g.constant(self.asset.texture.clone())?;
        let sum = g.add(t, ts)?;
        let tex = g.clamp01(sum)?;
        let gbuffer = rasterize(&self.asset.mesh, &scene.camera, res, res);
        let material = cfg.material();
        let image = shade(&mut g, &gbuffer, tex, &scene.light, &material, &scene.camera)?;
        let mask = gbuffer.mask();
        let mut terms = LossTerms::default();
        let mut parts = Vec::new();

        if cfg.lambda_nnfm > 0.0 {
            let styled = if cfg.style_background {
                composite_background(&mut g, image, &mask, &self.style_background)?
            } else {
                image
            };
            let l = self.style_term(&mut g, styled)?;
            terms.style = g.value(l).item() as f64;
            parts.push((l, cfg.lambda_nnfm));
        }
        if cfg.lambda_content > 0.0 {
            let original = {
                let mut h = Graph::new();
                let t0 = h.constant(self.asset.texture.clone())?;
                let r = shade(&mut h, &gbuffer, t0, &scene.light, &material, &scene.camera)?;
                let r = composite_background(&mut h, r, &mask, &self.content_background)?;
                h.value(r).clone()
            };
            let composed = composite_background(&mut g, image, &mask, &self.content_background)?;
            let l = self.content_term(&mut g, composed, &original)?;
            terms.content = g.value(l).item() as f64;
            parts.push((l, cfg.lambda_content));
        }
        Self::finish(&mut g, ts, &parts, terms)
    }

    /// Palette loss on `clamp01(T + T_S)`; shared by both modes.
    fn color_element(&self, weight: f64) -> Result<ElementResult> {
        let mut g = Graph::new();
        let ts = g.param(self.asset.style_texture.clone())?;
        let t = g.constant(self.asset.texture.clone())?;
        let sum = g.add(t, ts)?;
        let tex = g.clamp01(sum)?;
        let palette = self.asset.palette.as_ref().ok_or_else(|| Error::config("color loss needs a palette"))?;
        let l = losses::color_palette_loss(&mut g, tex, palette)?;
        let terms = LossTerms {
            color: g.value(l).item() as f64,
            ..LossTerms::default()
        };
        Self::finish(&mut g, ts, &[(l, weight)], terms)
    }

    fn direct_element(&self) -> Result<ElementResult> {
        let cfg = &self.cfg;
        let mut g = Graph::new();
        let ts = g.param(self.asset.style_texture.clone())?;
        let t = g.constant(self.asset.texture.clone())?;
        let sum = g.add(t, ts)?;
        let tex = g.clamp01(sum)?;
        let mut terms = LossTerms::default();
        let mut parts = Vec::new();
        if cfg.lambda_nnfm > 0.0 {
            let l = self.style_term(&mut g, tex)?;
            terms.style = g.value(l).item() as f64;
            parts.push((l, cfg.lambda_nnfm));
        }
        if cfg.lambda_content > 0.0 {
            let l = self.content_term(&mut g, tex, &self.asset.texture)?;
            terms.content = g.value(l).item() as f64;
            parts.push((l, cfg.lambda_content));
        }
        Self::finish(&mut g, ts, &parts, terms)
    }

    /// Applies the batch-mean gradient and records the report.
    fn apply(&mut self, results: Vec<ElementResult>, color: Option<ElementResult>, scenes: &[SceneSample]) -> Result<LossReport> {
        let iter = self.reports.len();
        let n = results.len().max(1) as f64;
        let mut terms = LossTerms::default();
        let mut grad = vec![0.0f32; self.asset.style_texture.numel()];
        for r in &results {
            terms.style += r.terms.style / n;
            terms.content += r.terms.content / n;
            if let Some(gr) = &r.grad {
                for (a, b) in grad.iter_mut().zip(gr.data()) {
                    *a += b;
                }
            }
        }
        let inv = 1.0 / n as f32;
        grad.iter_mut().for_each(|v| *v *= inv);
        if let Some(c) = color {
            terms.color = c.terms.color;
            if let Some(gr) = &c.grad {
                for (a, b) in grad.iter_mut().zip(gr.data()) {
                    *a += b;
                }
            }
        }
        let report = losses::total_loss(terms, &self.cfg.loss_weights(), iter);
        if !report.total.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "iteration {iter}: loss {} is not finite; last scenes: {}",
                report.total,
                dump_scenes(scenes)
            )));
        }
        self.adam.step(self.asset.style_texture.data_mut(), &grad);
        debug!(
            "iter {iter}: total {:.6} style {:.6} content {:.6} color {:.6}",
            report.total, terms.style, terms.content, terms.color
        );
        self.reports.push(report);
        Ok(report)
    }

    fn color_result(&self, iter: usize) -> Result<Option<ElementResult>> {
        let w = self.cfg.loss_weights().color_at(iter);
        if w > 0.0 {
            self.color_element(w).map(Some)
        } else {
            Ok(None)
        }
    }

    /// One rendered-mode step: a batch of random views, two render branches
    /// per view, palette loss on the texture, and one Adam update.
    pub fn train_iteration(&mut self) -> Result<LossReport> {
        let iter = self.reports.len();
        let center = self.asset.mesh.centroid();
        let scenes: Vec<SceneSample> = (0..self.cfg.batch_size)
            .map(|_| sample_scene(&mut self.rng, &self.cfg, center))
            .collect();
        self.last_scenes = scenes.clone();
        let results = par::map_range(scenes.len(), |i| self.element(&scenes[i]));
        let results = results
            .into_iter()
            .collect::<Result<Vec<_>>>()
            .map_err(|e| annotate(e, &scenes))?;
        let color = self.color_result(iter)?;
        self.apply(results, color, &scenes)
    }

    /// One direct-mode step: the composited texture is itself the image.
    pub fn direct_texture_iteration(&mut self) -> Result<LossReport> {
        let iter = self.reports.len();
        let result = self.direct_element()?;
        let color = self.color_result(iter)?;
        self.apply(vec![result], color, &[])
    }

    pub fn step(&mut self) -> Result<LossReport> {
        match self.cfg.mode {
            Mode::Rendered => self.train_iteration(),
            Mode::DirectTexture => self.direct_texture_iteration(),
        }
    }

    /// Runs the configured number of iterations.
    pub fn run(&mut self) -> Result<()> {
        let total = self.cfg.iterations;
        for i in 0..total {
            let r = self.step()?;
            if i % 100 == 0 || i + 1 == total {
                info!("iteration {i}/{total}: loss {:.6}", r.total);
            }
        }
        Ok(())
    }

    /// Renders of the current combined texture from the evaluation views.
    pub fn snapshots(&self) -> Result<Vec<Tensor>> {
        let tex = self.asset.combined_texture();
        let res = self.cfg.render_resolution;
        let material = self.cfg.material();
        eval_scenes(&self.cfg, self.asset.mesh.centroid())
            .iter()
            .map(|s| render::render_image(&self.asset.mesh, &tex, &s.camera, &s.light, &material, res, res))
            .collect()
    }

    pub fn loss_csv(&self) -> String {
        losses::to_csv(&self.reports)
    }

    /// Writes `style_texture.png`, `combined_texture.png`, `renders/NN.png`,
    /// and `loss.csv` under `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<Artifacts> {
        let renders_dir = dir.join("renders");
        std::fs::create_dir_all(&renders_dir).map_err(|e| Error::io(&renders_dir, e))?;
        let art = Artifacts::in_dir(dir);
        image_io::save_rgb(&art.style_texture, &encode_signed(&self.asset.style_texture))?;
        image_io::save_rgb(&art.combined_texture, &self.asset.combined_texture())?;
        let mut renders = Vec::new();
        for (i, img) in self.snapshots()?.iter().enumerate() {
            let p = renders_dir.join(format!("{i:02}.png"));
            image_io::save_rgb(&p, img)?;
            renders.push(p);
        }
        image_io::write_atomic(&art.loss_csv, self.loss_csv().as_bytes())?;
        Ok(Artifacts { renders, ..art })
    }
}

/// Paths written by [`Stylizer::write_artifacts`].
#[derive(Clone, Debug, PartialEq)]
pub struct Artifacts {
    pub style_texture: PathBuf,
    pub combined_texture: PathBuf,
    pub renders: Vec<PathBuf>,
    pub loss_csv: PathBuf,
}

impl Artifacts {
    fn in_dir(dir: &Path) -> Self {
        Artifacts {
            style_texture: dir.join("style_texture.png"),
            combined_texture: dir.join("combined_texture.png"),
            renders: Vec::new(),
            loss_csv: dir.join("loss.csv"),
        }
    }
}

/// Maps a signed texture from [-1, 1] to [0, 1] for 8-bit storage.
pub fn encode_signed(t: &Tensor) -> Tensor {
    t.map(|v| ((v + 1.0) * 0.5).clamp(0.0, 1.0))
}

/// Inverse of [`encode_signed`].
pub fn decode_signed(t: &Tensor) -> Tensor {
    t.map(|v| v * 2.0 - 1.0)
}

fn dump_scenes(scenes: &[SceneSample]) -> String {
    let parts: Vec<String> = scenes
        .iter()
        .map(|s| {
            format!(
                "eye {:?} target {:?} light {:?} power {}",
                s.camera.eye, s.camera.target, s.light.position, s.light.power
            )
        })
        .collect();
    if parts.is_empty() {
        "none (direct texture mode)".into()
    } else {
        parts.join("; ")
    }
}

fn annotate(e: Error, scenes: &[SceneSample]) -> Error {
    match e {
        Error::NonFinite(m) => Error::NonFinite(format!("{m}; last scenes: {}", dump_scenes(scenes))),
        other => other,
    }
}
