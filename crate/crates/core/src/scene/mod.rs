//! Analytic ray tracer over spheres, rectangles and planar mirrors, used to
//! produce exact ground truth for posed image datasets.
//!
//! Shading is Lambertian under one directional light plus an ambient term,
//! with no shadows, so the colour of a surface point does not depend on the
//! viewing direction. A mirror seen from its front replaces the ray by its
//! reflection; the back of a one-sided mirror is a diffuse backing panel.

mod builtin;
mod dataset;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use builtin::{builtin_scene, builtin_scenes, BUILTIN_NAMES};
pub use dataset::{
    assign_splits, circle_poses, generate_dataset, render_view, split_counts, DatasetManifest, DatasetOptions, Frame,
    Split,
};

use crate::image::ImageError;
use crate::math::{Aabb, Vec3};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("unknown builtin scene {0:?} (available: toy_A, toy_B, two_mirror_facing, two_mirror_back)")]
    Unknown(String),
    #[error("invalid manifest {path}: {reason}")]
    Manifest { path: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Smallest hit distance accepted, to step off the surface just left.
const HIT_EPS: f64 = 1e-9;

/// `d − 2(d·n)n`.
pub fn reflect(d: Vec3, n: Vec3) -> Vec3 {
    d - n * (2.0 * d.dot(n))
}

/// Plane through `point` with unit `normal`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub point: Vec3,
    pub normal: Vec3,
}

impl Plane {
    pub fn reflect_point(&self, p: Vec3) -> Vec3 {
        p - self.normal * (2.0 * (p - self.point).dot(self.normal))
    }

    pub fn reflect_dir(&self, d: Vec3) -> Vec3 {
        reflect(d, self.normal)
    }

    pub fn signed_distance(&self, p: Vec3) -> f64 {
        (p - self.point).dot(self.normal)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Texture {
    Solid {
        rgb: [f64; 3],
    },
    /// Smooth stripes `a + (b − a)·(½ + ½ sin(f·(p − origin)·axis))`.
    Stripes {
        a: [f64; 3],
        b: [f64; 3],
        origin: Vec3,
        axis: Vec3,
        frequency: f64,
    },
}

impl Texture {
    pub fn albedo(&self, p: Vec3) -> [f64; 3] {
        match *self {
            Texture::Solid { rgb } => rgb,
            Texture::Stripes {
                a,
                b,
                origin,
                axis,
                frequency,
            } => {
                let s = 0.5 + 0.5 * (frequency * (p - origin).dot(axis)).sin();
                [0, 1, 2].map(|c| a[c] + (b[c] - a[c]) * s)
            }
        }
    }

    fn reflected(&self, plane: &Plane) -> Self {
        match *self {
            Texture::Stripes {
                a,
                b,
                origin,
                axis,
                frequency,
            } => Texture::Stripes {
                a,
                b,
                origin: plane.reflect_point(origin),
                axis: plane.reflect_dir(axis),
                frequency,
            },
            solid => solid,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    /// Parallelogram `corner + a·u + b·v`, `a, b ∈ [0, 1]`.
    Rectangle { corner: Vec3, u: Vec3, v: Vec3 },
}

struct Hit {
    t: f64,
    normal: Vec3,
}

impl Shape {
    fn intersect(&self, o: Vec3, d: Vec3) -> Option<Hit> {
        match *self {
            Shape::Sphere { center, radius } => {
                let oc = o - center;
                let b = oc.dot(d);
                let c = oc.dot(oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = if -b - sq > HIT_EPS { -b - sq } else { -b + sq };
                (t > HIT_EPS).then(|| Hit {
                    t,
                    normal: (o + d * t - center) / radius,
                })
            }
            Shape::Rectangle { corner, u, v } => {
                let (t, n) = intersect_parallelogram(corner, u, v, o, d)?;
                Some(Hit { t, normal: n })
            }
        }
    }

    fn corners(&self) -> Vec<Vec3> {
        match *self {
            Shape::Sphere { center, radius } => [-1.0, 1.0]
                .iter()
                .flat_map(|&s| {
                    [
                        center + Vec3::new(s * radius, 0.0, 0.0),
                        center + Vec3::new(0.0, s * radius, 0.0),
                        center + Vec3::new(0.0, 0.0, s * radius),
                    ]
                })
                .collect(),
            Shape::Rectangle { corner, u, v } => vec![corner, corner + u, corner + v, corner + u + v],
        }
    }

    fn reflected(&self, plane: &Plane) -> Self {
        match *self {
            Shape::Sphere { center, radius } => Shape::Sphere {
                center: plane.reflect_point(center),
                radius,
            },
            Shape::Rectangle { corner, u, v } => Shape::Rectangle {
                corner: plane.reflect_point(corner),
                u: plane.reflect_dir(u),
                v: plane.reflect_dir(v),
            },
        }
    }
}

/// Hit distance and geometric normal `u×v/|u×v|`.
fn intersect_parallelogram(corner: Vec3, u: Vec3, v: Vec3, o: Vec3, d: Vec3) -> Option<(f64, Vec3)> {
    let n = u.cross(v).normalized();
    let denom = d.dot(n);
    if denom.abs() < 1e-14 {
        return None;
    }
    let t = (corner - o).dot(n) / denom;
    if t <= HIT_EPS {
        return None;
    }
    let rel = o + d * t - corner;
    let (uu, uv, vv) = (u.dot(u), u.dot(v), v.dot(v));
    let (ru, rv) = (rel.dot(u), rel.dot(v));
    let det = uu * vv - uv * uv;
    let a = (ru * vv - rv * uv) / det;
    let b = (rv * uu - ru * uv) / det;
    ((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b)).then_some((t, n))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Primitive {
    pub shape: Shape,
    pub texture: Texture,
}

impl Primitive {
    /// Mirror-symmetric copy across `plane`, texture included.
    pub fn reflected(&self, plane: &Plane) -> Self {
        Self {
            shape: self.shape.reflected(plane),
            texture: self.texture.reflected(plane),
        }
    }
}

fn default_reflectance() -> f64 {
    1.0
}

fn default_backing() -> [f64; 3] {
    [0.35, 0.35, 0.38]
}

/// Planar rectangular mirror; reflective on the side its normal `u×v`
/// points to, and on both sides when `two_sided`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mirror {
    pub corner: Vec3,
    pub u: Vec3,
    pub v: Vec3,
    #[serde(default)]
    pub two_sided: bool,
    #[serde(default = "default_reflectance")]
    pub reflectance: f64,
    #[serde(default = "default_backing")]
    pub backing: [f64; 3],
}

impl Mirror {
    pub fn new(corner: Vec3, u: Vec3, v: Vec3) -> Self {
        Self {
            corner,
            u,
            v,
            two_sided: false,
            reflectance: 1.0,
            backing: default_backing(),
        }
    }

    pub fn normal(&self) -> Vec3 {
        self.u.cross(self.v).normalized()
    }

    pub fn plane(&self) -> Plane {
        Plane {
            point: self.corner,
            normal: self.normal(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Light {
    /// Direction towards the light.
    pub direction: Vec3,
    pub intensity: f64,
    pub ambient: f64,
}

/// Circle of cameras used when generating a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRig {
    pub radius: f64,
    pub height: f64,
    pub target: Vec3,
    /// Horizontal field of view, radians.
    pub fov_x: f64,
    pub near: f64,
    pub far: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub name: String,
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub mirrors: Vec<Mirror>,
    pub light: Light,
    pub background: [f64; 3],
    pub max_bounces: u32,
    pub bbox: Aabb,
    pub rig: CameraRig,
}

/// Outcome of tracing one ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceResult {
    pub rgb: [f64; 3],
    /// Mirror reflections followed.
    pub reflections: u32,
    /// Whether the path ended on a surface rather than the background.
    pub hit_surface: bool,
}

enum Nearest {
    Primitive(usize, Hit),
    Mirror(usize, Hit),
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        for (i, m) in self.mirrors.iter().enumerate() {
            let n = m.u.cross(m.v);
            if !(n.norm() > 1e-12) || !n.norm().is_finite() {
                return Err(SceneError::Invalid(format!("mirror {i} has degenerate edges")));
            }
            if !(0.0..=1.0).contains(&m.reflectance) {
                return Err(SceneError::Invalid(format!("mirror {i} reflectance outside [0, 1]")));
            }
        }
        let slack = 1e-9;
        let corners = self
            .primitives
            .iter()
            .map(|p| p.shape.corners())
            .chain(self.mirrors.iter().map(|m| Shape::Rectangle {
                corner: m.corner,
                u: m.u,
                v: m.v,
            }.corners()));
        for (i, cs) in corners.enumerate() {
            if cs.iter().any(|c| !self.bbox.contains(*c, slack)) {
                return Err(SceneError::Invalid(format!("object {i} leaves the scene bounding box")));
            }
        }
        if !(self.light.direction.norm() > 0.0) {
            return Err(SceneError::Invalid("light direction is zero".into()));
        }
        let r = &self.rig;
        if !(r.near > 0.0 && r.near < r.far && r.fov_x > 0.0 && r.fov_x < std::f64::consts::PI) {
            return Err(SceneError::Invalid("camera rig needs 0 < near < far and 0 < fov < π".into()));
        }
        Ok(())
    }

    fn shade(&self, albedo: [f64; 3], normal: Vec3) -> [f64; 3] {
        let l = self.light.direction.normalized();
        let k = self.light.ambient + self.light.intensity * normal.dot(l).max(0.0);
        albedo.map(|a| (a * k).clamp(0.0, 1.0))
    }

    fn nearest(&self, o: Vec3, d: Vec3, skip_mirror: Option<usize>) -> Option<Nearest> {
        let mut best: Option<Nearest> = None;
        let mut best_t = f64::INFINITY;
        for (i, p) in self.primitives.iter().enumerate() {
            if let Some(h) = p.shape.intersect(o, d) {
                if h.t < best_t {
                    best_t = h.t;
                    best = Some(Nearest::Primitive(i, h));
                }
            }
        }
        for (i, m) in self.mirrors.iter().enumerate() {
            if Some(i) == skip_mirror {
                continue;
            }
            if let Some((t, normal)) = intersect_parallelogram(m.corner, m.u, m.v, o, d) {
                if t < best_t {
                    best_t = t;
                    best = Some(Nearest::Mirror(i, Hit { t, normal }));
                }
            }
        }
        best
    }

    /// Colour seen along `o + t·d`, following at most `bounces_left` mirror
    /// reflections. A path that would need one more reflection sees the
    /// background.
    pub fn trace(&self, o: Vec3, d: Vec3, bounces_left: u32) -> TraceResult {
        let mut origin = o;
        let mut dir = d.normalized();
        let mut budget = bounces_left;
        let mut throughput = 1.0;
        let mut reflections = 0;
        let mut skip = None;
        loop {
            let finish = |rgb: [f64; 3], hit_surface| TraceResult {
                rgb: rgb.map(|c| (throughput * c).clamp(0.0, 1.0)),
                reflections,
                hit_surface,
            };
            match self.nearest(origin, dir, skip) {
                None => return finish(self.background, false),
                Some(Nearest::Primitive(i, h)) => {
                    let p = origin + dir * h.t;
                    let prim = &self.primitives[i];
                    let n = face_forward(h.normal, dir);
                    return finish(self.shade(prim.texture.albedo(p), n), true);
                }
                Some(Nearest::Mirror(i, h)) => {
                    let m = &self.mirrors[i];
                    let front = dir.dot(h.normal) < 0.0;
                    if !front && !m.two_sided {
                        return finish(self.shade(m.backing, -h.normal), true);
                    }
                    if budget == 0 {
                        return finish(self.background, false);
                    }
                    origin = origin + dir * h.t;
                    dir = reflect(dir, h.normal);
                    throughput *= m.reflectance;
                    budget -= 1;
                    reflections += 1;
                    skip = Some(i);
                }
            }
        }
    }
}

fn face_forward(n: Vec3, d: Vec3) -> Vec3 {
    if n.dot(d) > 0.0 {
        -n
    } else {
        n
    }
}

/// Colour along a ray with the scene's full bounce budget.
pub fn trace_ray(scene: &SceneSpec, origin: Vec3, dir: Vec3, bounces_left: u32) -> [f64; 3] {
    scene.trace(origin, dir, bounces_left.min(scene.max_bounces)).rgb
}

#[cfg(test)]
mod tests;
