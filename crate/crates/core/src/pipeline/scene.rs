use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::OptimConfig;
use crate::render::math::{self, Vec3};
use crate::render::{Camera, PointLight};

/// One randomized view of the asset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneSample {
    pub camera: Camera,
    pub light: PointLight,
}

fn unit_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v: Vec3 = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let len = math::length(v);
        if len > 1e-12 {
            return math::scale(v, 1.0 / len);
        }
    }
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..=range[1])
    }
}

/// Uniform direction on the sphere.
pub fn sphere_direction<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    unit_gaussian(rng)
}

/// Uniform direction on the upper (+Y) hemisphere.
pub fn hemisphere_direction<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let mut d = unit_gaussian(rng);
    d[1] = d[1].abs();
    d
}

/// Camera on a sphere around `center`, light in the upper hemisphere shell.
pub fn sample_scene<R: Rng + ?Sized>(rng: &mut R, cfg: &OptimConfig, center: Vec3) -> SceneSample {
    let range = cfg.camera_distance.unwrap_or([2.0, 2.0]);
    let dir = sphere_direction(rng);
    let r = uniform_in(rng, range);
    let light_dir = hemisphere_direction(rng);
    let lr = uniform_in(rng, cfg.light_radius);
    SceneSample {
        camera: Camera::orbit(center, dir, r, cfg.fov_degrees.to_radians(), cfg.near, cfg.far),
        light: PointLight {
            position: math::add(center, math::scale(light_dir, lr)),
            power: cfg.light_power,
        },
    }
}

/// Fixed views at evenly spaced azimuths and a shared elevation, each lit
/// from above the camera at the middle of the light radius range.
pub fn eval_scenes(cfg: &OptimConfig, center: Vec3) -> Vec<SceneSample> {
    let range = cfg.camera_distance.unwrap_or([2.0, 2.0]);
    let r = 0.5 * (range[0] + range[1]);
    let elev = cfg.eval_elevation_degrees.to_radians();
    let lr = 0.5 * (cfg.light_radius[0] + cfg.light_radius[1]);
    (0..cfg.eval_views)
        .map(|k| {
            let az = std::f64::consts::TAU * k as f64 / cfg.eval_views as f64;
            let dir = [elev.cos() * az.sin(), elev.sin(), elev.cos() * az.cos()];
            let light_dir = math::normalize([dir[0], dir[1] + 1.0, dir[2]]);
            SceneSample {
                camera: Camera::orbit(center, dir, r, cfg.fov_degrees.to_radians(), cfg.near, cfg.far),
                light: PointLight {
                    position: math::add(center, math::scale(light_dir, lr)),
                    power: cfg.light_power,
                },
            }
        })
        .collect()
}
