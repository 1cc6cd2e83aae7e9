//! Color palettes: K-means extraction from an image, or a user-supplied list.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::Tensor;

pub type Rgb = [f32; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PaletteSource {
    KMeans,
    Manual,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Palette {
    colors: Vec<Rgb>,
    source: PaletteSource,
}

impl Palette {
    pub fn new(colors: Vec<Rgb>, source: PaletteSource) -> Result<Self> {
        if colors.is_empty() {
            return Err(Error::config("palette must contain at least one color"));
        }
        if let Some(c) = colors
            .iter()
            .find(|c| c.iter().any(|v| !(0.0..=1.0).contains(v)))
        {
            return Err(Error::config(format!("palette color {c:?} outside [0, 1]")));
        }
        Ok(Palette { colors, source })
    }

    pub fn colors(&self) -> &[Rgb] {
        &self.colors
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn source(&self) -> PaletteSource {
        self.source
    }

    /// Parses `#RRGGBB` lines; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut colors = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let hex = line
                .strip_prefix('#')
                .filter(|h| h.len() == 6 && h.chars().all(|c| c.is_ascii_hexdigit()))
                .ok_or_else(|| Error::config(format!("palette line {}: expected #RRGGBB, got `{line}`", i + 1)))?;
            let byte = |k: usize| u8::from_str_radix(&hex[k..k + 2], 16).expect("validated hex") as f32 / 255.0;
            colors.push([byte(0), byte(2), byte(4)]);
        }
        Palette::new(colors, PaletteSource::Manual)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn hex_lines(&self) -> Vec<String> {
        self.colors.iter().map(|c| to_hex(*c)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = self.hex_lines().join("\n");
        s.push('\n');
        s
    }
}

pub fn to_hex(c: Rgb) -> String {
    let b = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    format!("#{:02X}{:02X}{:02X}", b(c[0]), b(c[1]), b(c[2]))
}

#[inline]
pub fn squared_distance(a: Rgb, b: Rgb) -> f32 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// Index and squared distance of the closest color; ties go to the lowest index.
#[inline]
pub fn nearest_in(c: Rgb, colors: &[Rgb]) -> (usize, f32) {
    let mut best = (0, f32::INFINITY);
    for (i, p) in colors.iter().enumerate() {
        let d = squared_distance(c, *p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

pub fn nearest_color(c: Rgb, palette: &Palette) -> (usize, f32) {
    nearest_in(c, &palette.colors)
}

/// Outcome of a K-means run, including the objective after every assignment step.
#[derive(Clone, Debug)]
pub struct KMeansRun {
    pub palette: Palette,
    /// Sum of squared distances after each assignment step, in order.
    pub objectives: Vec<f64>,
    /// Objective of the returned centers.
    pub final_objective: f64,
    pub converged: bool,
}

pub fn image_pixels(image: &Tensor) -> Result<Vec<Rgb>> {
    let s = image.shape();
    if s.c != 3 {
        return Err(Error::config(format!("palette extraction needs 3 channels, got {s}")));
    }
    let mut out = Vec::with_capacity(s.n * s.plane());
    for n in 0..s.n {
        let base = n * 3 * s.plane();
        let d = image.data();
        for p in 0..s.plane() {
            out.push([d[base + p], d[base + s.plane() + p], d[base + 2 * s.plane() + p]]);
        }
    }
    Ok(out)
}

fn assign(pixels: &[Rgb], centers: &[Rgb]) -> Vec<(u32, f32)> {
    const CHUNK: usize = 4096;
    let chunks = par::map_range(pixels.len().div_ceil(CHUNK), |k| {
        pixels[k * CHUNK..((k + 1) * CHUNK).min(pixels.len())]
            .iter()
            .map(|&p| {
                let (i, d) = nearest_in(p, centers);
                (i as u32, d)
            })
            .collect::<Vec<_>>()
    });
    chunks.concat()
}

fn objective(assignment: &[(u32, f32)]) -> f64 {
    assignment.iter().map(|a| a.1 as f64).sum()
}

/// k-means++ seeding: the first center is uniform, the rest are drawn with
/// probability proportional to the squared distance to the nearest chosen center.
fn seed_centers(pixels: &[Rgb], q: usize, rng: &mut ChaCha8Rng) -> Vec<Rgb> {
    let mut centers = vec![pixels[rng.random_range(0..pixels.len())]];
    let mut d2: Vec<f64> = pixels
        .iter()
        .map(|&p| squared_distance(p, centers[0]) as f64)
        .collect();
    while centers.len() < q {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter()
                .position(|&d| {
                    acc += d;
                    acc > r
                })
                .unwrap_or(pixels.len() - 1)
        } else {
            rng.random_range(0..pixels.len())
        };
        let c = pixels[pick];
        centers.push(c);
        for (d, &p) in d2.iter_mut().zip(pixels) {
            *d = d.min(squared_distance(p, c) as f64);
        }
    }
    centers
}

/// Lloyd's algorithm on the RGB pixels of `image`, seeded k-means++-style.
///
/// Stops after `max_iters` assignment steps or once assignments repeat. An
/// empty cluster is moved onto the point farthest from its current center.
pub fn kmeans_run(image: &Tensor, q: usize, seed: u64, max_iters: usize) -> Result<KMeansRun> {
    let pixels = image_pixels(image)?;
    if q == 0 {
        return Err(Error::config("palette size must be at least 1"));
    }
    if q > pixels.len() {
        return Err(Error::config(format!(
            "palette size {q} exceeds pixel count {}",
            pixels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(&pixels, q, &mut rng);
    let mut objectives = Vec::new();
    let mut previous: Option<Vec<u32>> = None;
    let mut converged = false;

    for _ in 0..max_iters {
        let assignment = assign(&pixels, &centers);
        objectives.push(objective(&assignment));
        let labels: Vec<u32> = assignment.iter().map(|a| a.0).collect();
        if previous.as_ref() == Some(&labels) {
            converged = true;
            break;
        }

        let mut sums = vec![[0.0f64; 3]; q];
        let mut counts = vec![0usize; q];
        for (p, a) in pixels.iter().zip(&assignment) {
            let k = a.0 as usize;
            counts[k] += 1;
            for ch in 0..3 {
                sums[k][ch] += p[ch] as f64;
            }
        }
        let mut spare: Vec<f32> = assignment.iter().map(|a| a.1).collect();
        for k in 0..q {
            if counts[k] > 0 {
                let n = counts[k] as f64;
                centers[k] = [
                    (sums[k][0] / n) as f32,
                    (sums[k][1] / n) as f32,
                    (sums[k][2] / n) as f32,
                ];
            } else {
                // farthest point from its own center; first index on ties
                let mut far = 0;
                for (i, &d) in spare.iter().enumerate() {
                    if d > spare[far] {
                        far = i;
                    }
                }
                centers[k] = pixels[far];
                spare[far] = 0.0;
            }
        }
        previous = Some(labels);
    }

    let final_objective = objective(&assign(&pixels, &centers));
    Ok(KMeansRun {
        palette: Palette::new(centers, PaletteSource::KMeans)?,
        objectives,
        final_objective,
        converged,
    })
}

pub fn kmeans_extract(image: &Tensor, q: usize, seed: u64, max_iters: usize) -> Result<Palette> {
    Ok(kmeans_run(image, q, seed, max_iters)?.palette)
}
