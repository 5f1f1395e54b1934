//! Builtin scenes.
//!
//! The world is z-up. Every scene sits on a striped floor at `z = −0.7` and
//! is lit from a direction inside the `x = 0` plane, so shading is symmetric
//! under the reflection `x → −x`.

use super::{CameraRig, Light, Mirror, Plane, Primitive, SceneError, SceneSpec, Shape, Texture};
use crate::math::{Aabb, Vec3};

pub const BUILTIN_NAMES: [&str; 4] = ["toy_A", "toy_B", "two_mirror_facing", "two_mirror_back"];

const FLOOR_Z: f64 = -0.7;

pub fn builtin_scenes() -> Vec<SceneSpec> {
    vec![toy_a(), toy_b(), two_mirror_facing(), two_mirror_back()]
}

pub fn builtin_scene(name: &str) -> Result<SceneSpec, SceneError> {
    match name {
        "toy_A" | "toy_a" => Ok(toy_a()),
        "toy_B" | "toy_b" => Ok(toy_b()),
        "two_mirror_facing" => Ok(two_mirror_facing()),
        "two_mirror_back" => Ok(two_mirror_back()),
        other => Err(SceneError::Unknown(other.to_string())),
    }
}

fn stripes(a: [f64; 3], b: [f64; 3], origin: Vec3, axis: Vec3, frequency: f64) -> Texture {
    Texture::Stripes {
        a,
        b,
        origin,
        axis: axis.normalized(),
        frequency,
    }
}

/// Floor stripes run along x, so the floor is its own mirror image.
fn floor(half: f64) -> Primitive {
    Primitive {
        shape: Shape::Rectangle {
            corner: Vec3::new(-half, -half, FLOOR_Z),
            u: Vec3::new(2.0 * half, 0.0, 0.0),
            v: Vec3::new(0.0, 2.0 * half, 0.0),
        },
        texture: stripes(
            [0.55, 0.6, 0.7],
            [0.8, 0.82, 0.85],
            Vec3::ZERO,
            Vec3::new(0.0, 1.0, 0.0),
            9.0,
        ),
    }
}

fn light() -> Light {
    Light {
        direction: Vec3::new(0.0, -0.45, 1.0).normalized(),
        intensity: 0.75,
        ambient: 0.3,
    }
}

fn rig() -> CameraRig {
    CameraRig {
        radius: 4.0,
        height: 1.5,
        target: Vec3::new(0.0, 0.0, -0.1),
        fov_x: 0.8,
        near: 2.0,
        far: 6.0,
    }
}

fn bbox() -> Aabb {
    Aabb {
        min: [-1.5; 3],
        max: [1.5; 3],
    }
}

/// Objects on the reflective (+x) side of the single mirror.
fn toy_objects() -> Vec<Primitive> {
    vec![
        Primitive {
            shape: Shape::Sphere {
                center: Vec3::new(0.6, -0.25, -0.2),
                radius: 0.35,
            },
            texture: stripes(
                [0.85, 0.2, 0.15],
                [0.95, 0.8, 0.2],
                Vec3::new(0.6, -0.25, -0.2),
                Vec3::new(0.0, 0.6, 0.8),
                14.0,
            ),
        },
        Primitive {
            shape: Shape::Sphere {
                center: Vec3::new(0.45, 0.5, -0.45),
                radius: 0.22,
            },
            texture: stripes(
                [0.1, 0.45, 0.2],
                [0.3, 0.8, 0.9],
                Vec3::new(0.45, 0.5, -0.45),
                Vec3::new(1.0, 0.0, 0.3),
                18.0,
            ),
        },
    ]
}

/// Reflective on both faces so that from behind it shows the (empty) back
/// half-space rather than an opaque panel.
fn toy_mirror() -> Mirror {
    Mirror {
        two_sided: true,
        ..Mirror::new(
            Vec3::new(0.0, -0.9, FLOOR_Z),
            Vec3::new(0.0, 1.8, 0.0),
            Vec3::new(0.0, 0.0, 1.6),
        )
    }
}

/// Textured objects in front of a single mirror standing on the floor.
pub fn toy_a() -> SceneSpec {
    let mut primitives = vec![floor(1.2)];
    primitives.extend(toy_objects());
    SceneSpec {
        name: "toy_A".into(),
        primitives,
        mirrors: vec![toy_mirror()],
        light: light(),
        background: [1.0; 3],
        max_bounces: 2,
        bbox: bbox(),
        rig: rig(),
    }
}

/// `toy_A` plus a physical copy of every object at the position of its
/// virtual image, so every view agrees with a mirror-free symmetric scene.
pub fn toy_b() -> SceneSpec {
    let mut scene = toy_a();
    scene.name = "toy_B".into();
    let plane: Plane = toy_mirror().plane();
    scene.primitives.extend(toy_objects().iter().map(|p| p.reflected(&plane)));
    scene
}

/// Two one-sided mirrors facing each other across the objects, producing
/// chains of virtual images up to the bounce budget.
pub fn two_mirror_facing() -> SceneSpec {
    let inward_pos = Mirror::new(
        Vec3::new(1.0, 0.8, FLOOR_Z),
        Vec3::new(0.0, -1.6, 0.0),
        Vec3::new(0.0, 0.0, 1.4),
    );
    let inward_neg = Mirror::new(
        Vec3::new(-1.0, -0.8, FLOOR_Z),
        Vec3::new(0.0, 1.6, 0.0),
        Vec3::new(0.0, 0.0, 1.4),
    );
    SceneSpec {
        name: "two_mirror_facing".into(),
        primitives: vec![
            floor(1.2),
            Primitive {
                shape: Shape::Sphere {
                    center: Vec3::new(0.25, 0.2, -0.3),
                    radius: 0.3,
                },
                texture: stripes(
                    [0.85, 0.2, 0.15],
                    [0.95, 0.8, 0.2],
                    Vec3::new(0.25, 0.2, -0.3),
                    Vec3::new(0.0, 0.6, 0.8),
                    14.0,
                ),
            },
        ],
        mirrors: vec![inward_pos, inward_neg],
        light: light(),
        background: [1.0; 3],
        max_bounces: 4,
        bbox: bbox(),
        rig: rig(),
    }
}

/// Two one-sided mirrors back to back, each reflecting its own half of the
/// scene.
pub fn two_mirror_back() -> SceneSpec {
    let facing_pos = Mirror::new(
        Vec3::new(0.05, -0.8, FLOOR_Z),
        Vec3::new(0.0, 1.6, 0.0),
        Vec3::new(0.0, 0.0, 1.4),
    );
    let facing_neg = Mirror::new(
        Vec3::new(-0.05, 0.8, FLOOR_Z),
        Vec3::new(0.0, -1.6, 0.0),
        Vec3::new(0.0, 0.0, 1.4),
    );
    let mut primitives = vec![floor(1.2)];
    primitives.extend(toy_objects());
    primitives.push(Primitive {
        shape: Shape::Sphere {
            center: Vec3::new(-0.6, 0.3, -0.35),
            radius: 0.3,
        },
        texture: stripes(
            [0.2, 0.25, 0.8],
            [0.9, 0.9, 0.95],
            Vec3::new(-0.6, 0.3, -0.35),
            Vec3::new(0.3, 1.0, 0.0),
            16.0,
        ),
    });
    SceneSpec {
        name: "two_mirror_back".into(),
        primitives,
        mirrors: vec![facing_pos, facing_neg],
        light: light(),
        background: [1.0; 3],
        max_bounces: 4,
        bbox: bbox(),
        rig: rig(),
    }
}
