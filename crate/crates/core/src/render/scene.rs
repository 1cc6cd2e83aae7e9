use super::math::{self, Mat4, Vec3};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub eye: Vec3,
    pub target: Vec3,
    pub up: Vec3,
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    /// A camera at `target + distance * direction` looking back at `target`.
    /// The up vector is world +Y unless the view is nearly vertical.
    pub fn orbit(target: Vec3, direction: Vec3, distance: f64, fov_y: f64, near: f64, far: f64) -> Self {
        let dir = math::normalize(direction);
        let up = if dir[1].abs() > 0.999 {
            [0.0, 0.0, 1.0]
        } else {
            [0.0, 1.0, 0.0]
        };
        Camera {
            eye: math::add(target, math::scale(dir, distance)),
            target,
            up,
            fov_y,
            near,
            far,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = math::length(math::sub(self.eye, self.target));
        if !(self.near > 0.0 && self.far > self.near) {
            return Err(Error::config(format!(
                "camera planes must satisfy 0 < near < far (near {}, far {})",
                self.near, self.far
            )));
        }
        if r <= self.near {
            return Err(Error::config(format!(
                "camera distance {r} must exceed the near plane {}",
                self.near
            )));
        }
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(Error::config(format!("field of view {} outside (0, pi)", self.fov_y)));
        }
        Ok(())
    }

    pub fn view_projection(&self, aspect: f64) -> Mat4 {
        let view = Mat4::look_at(self.eye, self.target, self.up);
        Mat4::perspective(self.fov_y, aspect, self.near, self.far).mul(&view)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointLight {
    pub position: Vec3,
    pub power: f64,
}

/// Phong material. Radiance per covered pixel is
/// `albedo * (ambient + diffuse * power * max(0, n.l) / d^2)
///  + specular * power * max(0, r.v)^exponent / d^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Material {
    pub specular_exponent: f64,
    pub ambient: f64,
    pub diffuse: f64,
    pub specular: f64,
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        if self.ambient < 0.0 || self.diffuse < 0.0 || self.specular < 0.0 || self.specular_exponent < 0.0 {
            return Err(Error::config("material weights must be non-negative"));
        }
        Ok(())
    }
}
