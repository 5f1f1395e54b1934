use serde::{Deserialize, Serialize};

use super::RenderError;
use crate::math::{Pose, Vec3};

/// Pinhole camera. `c2w` follows the OpenGL convention: the camera looks
/// down its local −z axis with +y up.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub c2w: Pose,
}

impl Camera {
    pub fn new(width: usize, height: usize, focal: f64, c2w: Pose) -> Result<Self, RenderError> {
        if !(focal > 0.0) || width == 0 || height == 0 {
            return Err(RenderError::Camera(format!(
                "need positive size and focal, got {width}×{height} f={focal}"
            )));
        }
        let err = c2w.orthonormality_error();
        if err > 1e-6 {
            return Err(RenderError::Camera(format!(
                "rotation block is not orthonormal (error {err:.3e})"
            )));
        }
        Ok(Self {
            width,
            height,
            focal,
            c2w,
        })
    }

    /// Focal length in pixels from the horizontal field of view.
    pub fn from_fov(width: usize, height: usize, fov_x: f64, c2w: Pose) -> Result<Self, RenderError> {
        Self::new(width, height, 0.5 * width as f64 / (0.5 * fov_x).tan(), c2w)
    }

    pub fn fov_x(&self) -> f64 {
        2.0 * (0.5 * self.width as f64 / self.focal).atan()
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Ray through the centre of pixel (`col`, `row`).
    pub fn ray(&self, col: usize, row: usize, near: f64, far: f64) -> Ray {
        self.ray_through(col as f64 + 0.5, row as f64 + 0.5, near, far)
    }

    /// Ray through continuous image coordinates; pixel `(c, r)` covers
    /// `[c, c+1) × [r, r+1)`.
    pub fn ray_through(&self, px: f64, py: f64, near: f64, far: f64) -> Ray {
        let x = (px - 0.5 * self.width as f64) / self.focal;
        let y = -(py - 0.5 * self.height as f64) / self.focal;
        let dir = self.c2w.rotate(Vec3::new(x, y, -1.0)).normalized();
        Ray {
            origin: self.c2w.translation(),
            dir,
            near,
            far,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub dir: Vec3,
    pub near: f64,
    pub far: f64,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

/// Rays through the given pixels, indexed row-major (`row · width + col`).
pub fn generate_rays(cam: &Camera, pixels: &[usize], near: f64, far: f64) -> Result<Vec<Ray>, RenderError> {
    if !(near > 0.0 && near < far) {
        return Err(RenderError::Bounds { near, far });
    }
    pixels
        .iter()
        .map(|&p| {
            if p >= cam.pixel_count() {
                return Err(RenderError::PixelOutOfBounds {
                    index: p,
                    count: cam.pixel_count(),
                });
            }
            Ok(cam.ray(p % cam.width, p / cam.width, near, far))
        })
        .collect()
}
