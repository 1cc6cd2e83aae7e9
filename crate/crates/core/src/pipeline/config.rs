use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::{CLIP_RN50, TOY, VGG16};
use crate::losses::{ColorSchedule, LossWeights};
use crate::render::Material;

/// Where losses are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// On renders of the textured mesh.
    Rendered,
    /// On the composited texture image itself.
    DirectTexture,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Rendered => "rendered",
            Mode::DirectTexture => "direct_texture",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rendered" => Some(Mode::Rendered),
            "direct_texture" | "direct" => Some(Mode::DirectTexture),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StyleLoss {
    Nnfm,
    Gram,
}

impl StyleLoss {
    pub fn as_str(self) -> &'static str {
        match self {
            StyleLoss::Nnfm => "nnfm",
            StyleLoss::Gram => "gram",
        }
    }
}

/// Every knob of a stylization run.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub profile: String,
    pub mode: Mode,
    pub seed: u64,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub render_resolution: usize,
    /// Side of the square working texture; the input texture is resampled to it.
    pub texture_resolution: usize,
    /// Camera distance range from the mesh centroid. Required.
    pub camera_distance: Option<[f64; 2]>,
    pub fov_degrees: f64,
    pub near: f64,
    pub far: f64,
    pub light_radius: [f64; 2],
    pub light_power: f64,
    pub ambient: f64,
    pub diffuse: f64,
    pub specular: f64,
    pub specular_exponent: f64,
    pub lambda_nnfm: f64,
    pub lambda_content: f64,
    pub lambda_color: f64,
    pub color_schedule: ColorSchedule,
    pub style_loss: StyleLoss,
    pub style_backbone: String,
    pub content_backbone: String,
    pub smooth_features: bool,
    pub resize_to_native: bool,
    pub style_background: bool,
    pub content_background: [f32; 3],
    /// Per-tap cap on style vectors; 0 keeps all of them.
    pub style_vector_cap: usize,
    pub palette_q: usize,
    pub kmeans_max_iters: usize,
    pub eval_views: usize,
    pub eval_elevation_degrees: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            profile: "default".into(),
            mode: Mode::Rendered,
            seed: 0,
            iterations: 3000,
            batch_size: 8,
            learning_rate: 1e-2,
            render_resolution: 512,
            texture_resolution: 1024,
            camera_distance: None,
            fov_degrees: 45.0,
            near: 0.1,
            far: 100.0,
            light_radius: [3.0, 5.0],
            light_power: 2.0,
            ambient: 0.1,
            diffuse: 1.0,
            specular: 0.5,
            specular_exponent: 2.0,
            lambda_nnfm: 1e4,
            lambda_content: 22.0,
            lambda_color: 2000.0,
            color_schedule: ColorSchedule::Linear,
            style_loss: StyleLoss::Nnfm,
            style_backbone: CLIP_RN50.into(),
            content_backbone: VGG16.into(),
            smooth_features: true,
            resize_to_native: true,
            style_background: true,
            content_background: [0.0; 3],
            style_vector_cap: 0,
            palette_q: 8,
            kmeans_max_iters: 50,
            eval_views: 8,
            eval_elevation_degrees: 20.0,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("config key `{key}`: cannot parse `{v}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|p| parse_num(key, p.trim())).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(format!("config key `{key}`: expected true or false, got `{v}`"))),
    }
}

fn parse_range(key: &str, v: &str) -> Result<[f64; 2]> {
    match parse_list::<f64>(key, v)?.as_slice() {
        [r] => Ok([*r, *r]),
        [a, b] => Ok([*a, *b]),
        _ => Err(Error::config(format!("config key `{key}`: expected one or two numbers"))),
    }
}

fn fmt_range(r: [f64; 2]) -> String {
    if r[0] == r[1] {
        r[0].to_string()
    } else {
        format!("{}, {}", r[0], r[1])
    }
}

impl OptimConfig {
    /// The VGG16 style profile: NNFM on VGG16 features with its own weights.
    pub fn vgg16_profile() -> Self {
        OptimConfig {
            profile: VGG16.into(),
            style_backbone: VGG16.into(),
            lambda_nnfm: 200.0,
            lambda_content: 1.0,
            ..Self::default()
        }
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default()),
            VGG16 => Ok(Self::vgg16_profile()),
            _ => Err(Error::config(format!("config key `profile`: unknown profile `{name}`"))),
        }
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "profile" => {
                let fresh = Self::profile(v)?;
                *self = fresh;
            }
            "mode" => {
                self.mode = Mode::parse(v)
                    .ok_or_else(|| Error::config(format!("config key `mode`: unknown mode `{v}`")))?
            }
            "seed" => self.seed = parse_num(key, v)?,
            "iterations" => self.iterations = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "learning_rate" => self.learning_rate = parse_num(key, v)?,
            "render_resolution" => self.render_resolution = parse_num(key, v)?,
            "texture_resolution" => self.texture_resolution = parse_num(key, v)?,
            "camera_distance" => {
                self.camera_distance = if v.is_empty() { None } else { Some(parse_range(key, v)?) }
            }
            "fov_degrees" => self.fov_degrees = parse_num(key, v)?,
            "near" => self.near = parse_num(key, v)?,
            "far" => self.far = parse_num(key, v)?,
            "light_radius" => self.light_radius = parse_range(key, v)?,
            "light_power" => self.light_power = parse_num(key, v)?,
            "ambient" => self.ambient = parse_num(key, v)?,
            "diffuse" => self.diffuse = parse_num(key, v)?,
            "specular" => self.specular = parse_num(key, v)?,
            "specular_exponent" => self.specular_exponent = parse_num(key, v)?,
            "lambda_nnfm" => self.lambda_nnfm = parse_num(key, v)?,
            "lambda_content" => self.lambda_content = parse_num(key, v)?,
            "lambda_color" => self.lambda_color = parse_num(key, v)?,
            "color_schedule" => {
                self.color_schedule = ColorSchedule::parse(v)
                    .ok_or_else(|| Error::config(format!("config key `color_schedule`: unknown schedule `{v}`")))?
            }
            "style_loss" => {
                self.style_loss = match v {
                    "nnfm" => StyleLoss::Nnfm,
                    "gram" => StyleLoss::Gram,
                    _ => return Err(Error::config(format!("config key `style_loss`: unknown loss `{v}`"))),
                }
            }
            "style_backbone" => self.style_backbone = backbone_id(key, v)?,
            "content_backbone" => self.content_backbone = backbone_id(key, v)?,
            "smooth_features" => self.smooth_features = parse_bool(key, v)?,
            "resize_to_native" => self.resize_to_native = parse_bool(key, v)?,
            "style_background" => self.style_background = parse_bool(key, v)?,
            "content_background" => match parse_list::<f32>(key, v)?.as_slice() {
                [r, g, b] => self.content_background = [*r, *g, *b],
                _ => return Err(Error::config("config key `content_background`: expected three numbers")),
            },
            "style_vector_cap" => self.style_vector_cap = parse_num(key, v)?,
            "palette_q" => self.palette_q = parse_num(key, v)?,
            "kmeans_max_iters" => self.kmeans_max_iters = parse_num(key, v)?,
            "eval_views" => self.eval_views = parse_num(key, v)?,
            "eval_elevation_degrees" => self.eval_elevation_degrees = parse_num(key, v)?,
            _ => return Err(Error::config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment. A
    /// `profile` line is applied before every other key wherever it appears.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("config line {}: expected `key = value`", i + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        pairs.sort_by_key(|(k, _)| k != "profile");
        for (k, v) in pairs {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Every key with its effective value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let c = self.content_background;
        vec![
            ("profile", self.profile.clone()),
            ("mode", self.mode.as_str().into()),
            ("seed", self.seed.to_string()),
            ("iterations", self.iterations.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("render_resolution", self.render_resolution.to_string()),
            ("texture_resolution", self.texture_resolution.to_string()),
            ("camera_distance", self.camera_distance.map(fmt_range).unwrap_or_default()),
            ("fov_degrees", self.fov_degrees.to_string()),
            ("near", self.near.to_string()),
            ("far", self.far.to_string()),
            ("light_radius", fmt_range(self.light_radius)),
            ("light_power", self.light_power.to_string()),
            ("ambient", self.ambient.to_string()),
            ("diffuse", self.diffuse.to_string()),
            ("specular", self.specular.to_string()),
            ("specular_exponent", self.specular_exponent.to_string()),
            ("lambda_nnfm", self.lambda_nnfm.to_string()),
            ("lambda_content", self.lambda_content.to_string()),
            ("lambda_color", self.lambda_color.to_string()),
            ("color_schedule", self.color_schedule.as_str().into()),
            ("style_loss", self.style_loss.as_str().into()),
            ("style_backbone", self.style_backbone.clone()),
            ("content_backbone", self.content_backbone.clone()),
            ("smooth_features", self.smooth_features.to_string()),
            ("resize_to_native", self.resize_to_native.to_string()),
            ("style_background", self.style_background.to_string()),
            ("content_background", format!("{}, {}, {}", c[0], c[1], c[2])),
            ("style_vector_cap", self.style_vector_cap.to_string()),
            ("palette_q", self.palette_q.to_string()),
            ("kmeans_max_iters", self.kmeans_max_iters.to_string()),
            ("eval_views", self.eval_views.to_string()),
            ("eval_elevation_degrees", self.eval_elevation_degrees.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: &str| Err(Error::config(format!("config key `{key}`: {why}")));
        let Some(r) = self.camera_distance else {
            return bad("camera_distance", "required (one distance or a `min, max` range)");
        };
        if !(r[0] <= r[1]) || r[0] <= self.near {
            return bad("camera_distance", "range must be ordered and beyond the near plane");
        }
        for (k, v) in [("batch_size", self.batch_size), ("render_resolution", self.render_resolution)] {
            if v == 0 {
                return bad(k, "must be positive");
            }
        }
        if self.texture_resolution == 0 {
            return bad("texture_resolution", "must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if !(self.fov_degrees > 0.0 && self.fov_degrees < 180.0) {
            return bad("fov_degrees", "must lie in (0, 180)");
        }
        if !(self.near > 0.0 && self.far > self.near) {
            return bad("far", "need 0 < near < far");
        }
        if !(self.light_radius[0] > 0.0 && self.light_radius[0] <= self.light_radius[1]) {
            return bad("light_radius", "range must be positive and ordered");
        }
        for (k, v) in [
            ("light_power", self.light_power),
            ("ambient", self.ambient),
            ("diffuse", self.diffuse),
            ("specular", self.specular),
            ("specular_exponent", self.specular_exponent),
            ("lambda_nnfm", self.lambda_nnfm),
            ("lambda_content", self.lambda_content),
            ("lambda_color", self.lambda_color),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(k, "must be finite and non-negative");
            }
        }
        if self.palette_q == 0 {
            return bad("palette_q", "must be positive");
        }
        Ok(())
    }

    pub fn material(&self) -> Material {
        Material {
            specular_exponent: self.specular_exponent,
            ambient: self.ambient,
            diffuse: self.diffuse,
            specular: self.specular,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            nnfm: self.lambda_nnfm,
            content: self.lambda_content,
            color: self.lambda_color,
            color_schedule: self.color_schedule,
            total_iters: self.iterations,
        }
    }
}

fn backbone_id(key: &str, v: &str) -> Result<String> {
    match v {
        VGG16 | CLIP_RN50 | TOY => Ok(v.to_string()),
        _ => Err(Error::config(format!(
            "config key `{key}`: unknown backbone `{v}` (expected {VGG16}, {CLIP_RN50} or {TOY})"
        ))),
    }
}
