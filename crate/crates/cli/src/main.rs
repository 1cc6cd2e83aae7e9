//! `texstyle`: stylize a textured mesh from style images.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use texstyle::features::{Backbone, WeightArchive, TOY};
use texstyle::image_io;
use texstyle::palette::{self, Palette};
use texstyle::pipeline::{load_backbone, OptimConfig, StyleAsset, Stylizer};
use texstyle::render::Mesh;
use texstyle::{Error, Result, Shape, Tensor};

#[derive(Parser)]
#[command(name = "texstyle", version, about = "Neural style transfer onto mesh textures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a style texture and write textures, renders and the loss log.
    Stylize(JobArgs),
    /// Repeat a stylization over several values of one setting.
    Ablate {
        #[command(flatten)]
        job: JobArgs,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values, at least two.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Print the K-means palette of an image and write it as a palette file.
    ExtractPalette {
        image: PathBuf,
        #[arg(long = "palette-q", default_value_t = 8)]
        q: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Palette file to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Axis {
    CameraDistance,
    TextureResolution,
    StyleCount,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackboneArg {
    Vgg16,
    ClipRn50,
    Toy,
}

impl BackboneArg {
    fn id(self) -> &'static str {
        match self {
            BackboneArg::Vgg16 => texstyle::features::VGG16,
            BackboneArg::ClipRn50 => texstyle::features::CLIP_RN50,
            BackboneArg::Toy => TOY,
        }
    }
}

#[derive(Args, Clone)]
struct JobArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    texture: PathBuf,
    /// Style image; repeat for several. The first is the primary image.
    #[arg(long = "style", required = true)]
    styles: Vec<PathBuf>,
    /// `#RRGGBB` palette file; overrides K-means extraction.
    #[arg(long)]
    palette_file: Option<PathBuf>,
    #[arg(long)]
    palette_q: Option<usize>,
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// `rendered` or `direct_texture`.
    #[arg(long)]
    mode: Option<String>,
    /// Backbone for the style loss. `toy` also replaces the content backbone.
    #[arg(long, value_enum)]
    backbone: Option<BackboneArg>,
    /// Weight archive for the pretrained backbones.
    #[arg(long)]
    weights: Option<PathBuf>,
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        })
    }
}

impl JobArgs {
    fn check_inputs(&self) -> Result<()> {
        require(&self.mesh)?;
        require(&self.texture)?;
        for s in &self.styles {
            require(s)?;
        }
        for p in [&self.palette_file, &self.config, &self.weights].into_iter().flatten() {
            require(p)?;
        }
        Ok(())
    }

    /// Profile and file values first, then command-line overrides.
    fn resolve_config(&self) -> Result<OptimConfig> {
        let mut cfg = match &self.config {
            Some(p) => OptimConfig::load(p)?,
            None => OptimConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.set("seed", &seed.to_string())?;
        }
        if let Some(n) = self.iterations {
            cfg.set("iterations", &n.to_string())?;
        }
        if let Some(m) = &self.mode {
            cfg.set("mode", m)?;
        }
        if let Some(q) = self.palette_q {
            cfg.set("palette_q", &q.to_string())?;
        }
        if let Some(b) = self.backbone {
            cfg.set("style_backbone", b.id())?;
            if b == BackboneArg::Toy {
                cfg.set("content_backbone", TOY)?;
            }
        }
        Ok(cfg)
    }
}

struct Job {
    mesh: Mesh,
    texture: Tensor,
    styles: Vec<Tensor>,
    palette: Option<Palette>,
    archive: Option<WeightArchive>,
}

fn load_job(args: &JobArgs) -> Result<Job> {
    args.check_inputs()?;
    Ok(Job {
        mesh: Mesh::load_obj(&args.mesh)?,
        texture: image_io::load_rgb(&args.texture)?,
        styles: args.styles.iter().map(|p| image_io::load_rgb(p)).collect::<Result<_>>()?,
        palette: args.palette_file.as_deref().map(Palette::load).transpose()?,
        archive: args.weights.as_deref().map(WeightArchive::load).transpose()?,
    })
}

fn backbones(cfg: &OptimConfig, archive: Option<&WeightArchive>) -> Result<(Arc<Backbone>, Arc<Backbone>)> {
    let style = Arc::new(load_backbone(&cfg.style_backbone, archive, cfg.seed, cfg.resize_to_native)?);
    let content = if cfg.content_backbone == cfg.style_backbone {
        style.clone()
    } else {
        Arc::new(load_backbone(&cfg.content_backbone, archive, cfg.seed, cfg.resize_to_native)?)
    };
    Ok((style, content))
}

/// Runs one stylization into `out` and returns the first snapshot render.
fn stylize(job: &Job, styles: &[Tensor], cfg: OptimConfig, out: &Path) -> Result<Tensor> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    image_io::write_atomic(&out.join("resolved_config.txt"), cfg.to_text().as_bytes())?;
    let mut asset = StyleAsset::new(job.mesh.clone(), job.texture.clone(), styles.to_vec())?;
    match &job.palette {
        Some(p) => asset = asset.with_palette(p.clone()),
        None => asset.extract_palette(cfg.palette_q, cfg.seed, cfg.kmeans_max_iters)?,
    }
    let (style_bb, content_bb) = backbones(&cfg, job.archive.as_ref())?;
    let mut stylizer = Stylizer::new(asset, cfg, style_bb, content_bb)?;
    stylizer.run()?;
    let artifacts = stylizer.write_artifacts(out)?;
    info!("wrote {}", out.display());
    image_io::load_rgb(&artifacts.renders[0])
}

fn hconcat(images: &[Tensor]) -> Result<Tensor> {
    let h = images.iter().map(|t| t.shape().h).max().unwrap_or(0);
    let w: usize = images.iter().map(|t| t.shape().w).sum();
    let mut sheet = Tensor::zeros(Shape::new(1, 3, h, w));
    let mut x0 = 0;
    for img in images {
        let s = img.shape();
        for c in 0..3 {
            for y in 0..s.h {
                for x in 0..s.w {
                    let i = sheet.offset(0, c, y, x0 + x);
                    sheet.data_mut()[i] = img.at(0, c, y, x);
                }
            }
        }
        x0 += s.w;
    }
    Ok(sheet)
}

fn ablate(args: &JobArgs, axis: Axis, values: &[String]) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::Config(format!(
            "ablation needs at least two values, got {}",
            values.len()
        )));
    }
    let base = args.resolve_config()?;
    let job = load_job(args)?;
    let mut renders = Vec::new();
    for v in values {
        let mut cfg = base.clone();
        let mut styles = job.styles.clone();
        let key = match axis {
            Axis::CameraDistance => {
                cfg.set("camera_distance", v)?;
                "camera_distance"
            }
            Axis::TextureResolution => {
                cfg.set("texture_resolution", v)?;
                "texture_resolution"
            }
            Axis::StyleCount => {
                let k: usize = v
                    .parse()
                    .map_err(|_| Error::Config(format!("style_count: `{v}` is not a count")))?;
                if k == 0 || k > styles.len() {
                    return Err(Error::Config(format!(
                        "style_count: {k} is outside 1..={} given style images",
                        styles.len()
                    )));
                }
                styles.truncate(k);
                "style_count"
            }
        };
        let dir = args.out.join(format!("{key}_{v}"));
        renders.push(stylize(&job, &styles, cfg, &dir)?);
    }
    image_io::save_rgb(&args.out.join("contact_sheet.png"), &hconcat(&renders)?)
}

fn extract_palette(image: &Path, q: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let img = image_io::load_rgb(image)?;
    let pal = palette::kmeans_extract(&img, q, seed, OptimConfig::default().kmeans_max_iters)?;
    for line in pal.hex_lines() {
        println!("{line}");
    }
    if let Some(path) = out {
        image_io::write_atomic(path, pal.to_text().as_bytes())?;
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Io { .. } | Error::Image { .. } | Error::Format(_) | Error::IncompleteArchive(_) => 2,
        Error::NonFinite(_) => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Stylize(args) => args
            .resolve_config()
            .and_then(|cfg| load_job(args).map(|job| (cfg, job)))
            .and_then(|(cfg, job)| stylize(&job, &job.styles, cfg, &args.out).map(|_| ())),
        Command::Ablate { job, axis, values } => ablate(job, *axis, values),
        Command::ExtractPalette { image, q, seed, out } => extract_palette(image, *q, *seed, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
