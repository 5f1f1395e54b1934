use std::f64::consts::FRAC_1_SQRT_2;

use proptest::prelude::*;

use super::*;
use crate::math::Pose;
use crate::rendering::Camera;

fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
    (a - b).norm() < tol
}

fn empty_scene() -> SceneSpec {
    let mut s = builtin_scene("toy_A").unwrap();
    s.primitives.clear();
    s.mirrors.clear();
    s
}

#[test]
fn reflect_examples() {
    let d = Vec3::new(FRAC_1_SQRT_2, -FRAC_1_SQRT_2, 0.0);
    let r = reflect(d, Vec3::new(0.0, 1.0, 0.0));
    assert!(close(r, Vec3::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0), 1e-15));
    let along = Vec3::new(1.0, 0.0, 0.0);
    assert_eq!(reflect(along, Vec3::new(0.0, 0.0, 1.0)), along);
}

#[test]
fn miss_returns_background() {
    let s = builtin_scene("toy_A").unwrap();
    let r = s.trace(Vec3::new(0.0, 0.0, 5.0), Vec3::new(0.0, 0.0, 1.0), 2);
    assert_eq!(r.rgb, s.background);
    assert!(!r.hit_surface);
}

#[test]
fn normal_incidence_reflects_straight_back() {
    let mut s = empty_scene();
    s.mirrors.push(Mirror::new(
        Vec3::new(0.0, -1.0, -1.0),
        Vec3::new(0.0, 2.0, 0.0),
        Vec3::new(0.0, 0.0, 2.0),
    ));
    // A target directly behind the camera: only visible via the mirror.
    s.primitives.push(Primitive {
        shape: Shape::Sphere {
            center: Vec3::new(1.4, 0.0, 0.0),
            radius: 0.05,
        },
        texture: Texture::Solid { rgb: [0.2, 0.9, 0.1] },
    });
    let r = s.trace(Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0), 1);
    assert_eq!(r.reflections, 1);
    assert!(r.hit_surface);
    assert!(r.rgb[1] > r.rgb[0]);
}

#[test]
fn facing_mirrors_respect_bounce_budget() {
    let mut s = builtin_scene("two_mirror_facing").unwrap();
    s.primitives.clear();
    // Bounce back and forth between the mirrors without ever escaping.
    let o = Vec3::new(0.0, 0.0, 0.0);
    let d = Vec3::new(1.0, 0.0, 0.0);
    for budget in 0..5 {
        let r = s.trace(o, d, budget);
        assert_eq!(r.reflections, budget);
        assert_eq!(r.rgb, s.background);
    }
}

#[test]
fn facing_mirrors_show_second_order_image_back_to_back_never() {
    // Virtual image of the sphere after two reflections: seen along a ray
    // that hits +x mirror, then −x mirror, then the sphere.
    let facing = builtin_scene("two_mirror_facing").unwrap();
    let back = builtin_scene("two_mirror_back").unwrap();
    let mut max_facing = 0;
    let mut max_back = 0;
    let eye = Vec3::new(0.0, -0.6, 0.2);
    for i in 0..64 {
        for j in 0..16 {
            let phi = std::f64::consts::TAU * i as f64 / 64.0;
            let z = -0.4 + 0.05 * j as f64;
            let d = Vec3::new(phi.cos(), phi.sin(), z).normalized();
            let rf = facing.trace(eye, d, 2);
            if rf.hit_surface {
                max_facing = max_facing.max(rf.reflections);
            }
            let rb = back.trace(Vec3::new(0.8, -0.6, 0.2), d, 2);
            if rb.hit_surface {
                max_back = max_back.max(rb.reflections);
            }
        }
    }
    assert_eq!(max_facing, 2);
    assert_eq!(max_back, 1);
}

#[test]
fn toy_b_shows_duplicate_from_behind_toy_a_does_not() {
    let a = builtin_scene("toy_A").unwrap();
    let b = builtin_scene("toy_B").unwrap();
    // From the back side, look at where the duplicate of the big sphere sits.
    let eye = Vec3::new(-3.0, -0.25, -0.2);
    let d = Vec3::new(1.0, 0.0, 0.0);
    let rb = b.trace(eye, d, 2);
    assert!(rb.hit_surface);
    assert_eq!(rb.reflections, 0);
    let ra = a.trace(eye, d, 2);
    assert_eq!(ra.reflections, 1);
    assert!(!ra.hit_surface);
    assert_eq!(ra.rgb, a.background);
}

/// Looking into the mirror from `x` sees exactly what the reflected camera
/// sees looking at the real objects.
#[test]
fn virtual_image_consistency() {
    let s = builtin_scene("toy_A").unwrap();
    let plane = s.mirrors[0].plane();
    let mut checked = 0;
    for i in 0..40 {
        for j in 0..40 {
            let eye = Vec3::new(3.0, -1.0 + 0.05 * i as f64, 0.8);
            let target = Vec3::new(0.0, -0.8 + 0.04 * j as f64, -0.6 + 0.035 * j as f64);
            let d = (target - eye).normalized();
            let seen = s.trace(eye, d, 1);
            if seen.reflections != 1 || !seen.hit_surface {
                continue;
            }
            let eye_v = plane.reflect_point(eye);
            let d_v = plane.reflect_dir(d);
            // Skip the mirror itself: the virtual camera looks from behind.
            let mut no_mirror = s.clone();
            no_mirror.mirrors.clear();
            let direct = no_mirror.trace(eye_v, d_v, 0);
            for c in 0..3 {
                assert!((seen.rgb[c] - direct.rgb[c]).abs() < 1e-9, "{i},{j}");
            }
            checked += 1;
        }
    }
    assert!(checked > 100, "{checked}");
}

/// toy_B matches the symmetric mirror-free scene from every viewpoint.
#[test]
fn toy_b_equals_symmetric_scene_without_mirror() {
    let b = builtin_scene("toy_B").unwrap();
    let mut sym = b.clone();
    sym.mirrors.clear();
    let poses = circle_poses(b.rig.radius, b.rig.height, b.rig.target, 8);
    for pose in poses {
        let cam = Camera::from_fov(16, 16, b.rig.fov_x, pose).unwrap();
        let x = render_view(&b, &cam, 1);
        let y = render_view(&sym, &cam, 1);
        for (p, q) in x.data().iter().zip(y.data()) {
            assert!((p - q).abs() < 1e-9);
        }
    }
}

#[test]
fn builtin_scenes_validate() {
    let all = builtin_scenes();
    assert_eq!(all.len(), 4);
    for s in &all {
        s.validate().unwrap();
        for m in &s.mirrors {
            assert!((m.normal().norm() - 1.0).abs() < 1e-12);
        }
    }
    assert!(matches!(builtin_scene("toy_C"), Err(SceneError::Unknown(_))));
}

#[test]
fn out_of_box_primitive_rejected() {
    let mut s = builtin_scene("toy_A").unwrap();
    s.primitives.push(Primitive {
        shape: Shape::Sphere {
            center: Vec3::new(1.4, 0.0, 0.0),
            radius: 0.5,
        },
        texture: Texture::Solid { rgb: [1.0; 3] },
    });
    assert!(s.validate().is_err());
}

#[test]
fn split_sizes() {
    assert_eq!(split_counts(120), [100, 10, 10]);
    assert_eq!(split_counts(12), [10, 1, 1]);
    assert_eq!(split_counts(72), [60, 6, 6]);
    assert_eq!(split_counts(3), [1, 1, 1]);
    let s = assign_splits(120, 4);
    assert_eq!(s.iter().filter(|x| **x == Split::Train).count(), 100);
    assert_eq!(s, assign_splits(120, 4));
    assert_ne!(s, assign_splits(120, 5));
}

#[test]
fn azimuths_are_evenly_spaced() {
    let n = 12;
    let poses = circle_poses(4.0, 1.5, Vec3::ZERO, n);
    let az: Vec<f64> = poses.iter().map(|p| p.translation().y.atan2(p.translation().x)).collect();
    for i in 0..n {
        let diff = (az[(i + 1) % n] - az[i]).rem_euclid(std::f64::consts::TAU);
        assert!((diff - std::f64::consts::TAU / n as f64).abs() < 1e-12);
    }
    for p in &poses {
        assert!(p.orthonormality_error() < 1e-12);
        assert!((p.translation().z - 1.5).abs() < 1e-15);
    }
}

#[test]
fn dataset_is_deterministic_and_readable() {
    let scene = builtin_scene("toy_A").unwrap();
    let opts = DatasetOptions::new(12, 12, 7);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = generate_dataset(&scene, &opts, a.path()).unwrap();
    generate_dataset(&scene, &opts, b.path()).unwrap();
    let names = ["manifest.json", "images/000.png", "images/011.png"];
    for n in names {
        assert_eq!(
            std::fs::read(a.path().join(n)).unwrap(),
            std::fs::read(b.path().join(n)).unwrap(),
            "{n}"
        );
    }
    let back = DatasetManifest::load(a.path()).unwrap();
    assert_eq!(back, ma);
    assert_eq!(back.frames.len(), 12);
    assert_eq!(back.frames_in(Split::Train).count(), 10);
    let img = crate::image::Image::load_png(&a.path().join("images/003.png")).unwrap();
    assert_eq!((img.width(), img.height()), (12, 12));
}

#[test]
fn manifest_rejects_skewed_rotation() {
    let scene = builtin_scene("toy_A").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut m = generate_dataset(&scene, &DatasetOptions::new(3, 4, 0), dir.path()).unwrap();
    m.frames[1].transform_matrix[0][0] *= 1.001;
    m.save(dir.path()).unwrap();
    let err = DatasetManifest::load(dir.path()).unwrap_err().to_string();
    assert!(err.contains("orthonormal"), "{err}");
}

#[test]
fn manifest_unknown_field_names_path() {
    let scene = builtin_scene("toy_A").unwrap();
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(&scene, &DatasetOptions::new(3, 4, 0), dir.path()).unwrap();
    let path = dir.path().join("manifest.json");
    let text = std::fs::read_to_string(&path).unwrap().replacen("\"split\"", "\"splitt\"", 1);
    std::fs::write(&path, text).unwrap();
    let err = DatasetManifest::load(dir.path()).unwrap_err().to_string();
    assert!(err.contains("frames[0]"), "{err}");
}

#[test]
fn too_few_views_rejected() {
    let scene = builtin_scene("toy_A").unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(generate_dataset(&scene, &DatasetOptions::new(2, 4, 0), dir.path()).is_err());
}

#[test]
fn scene_spec_roundtrips_through_json() {
    for s in builtin_scenes() {
        let text = serde_json::to_string(&s).unwrap();
        let back: SceneSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}

#[test]
fn identity_camera_pixel_traces() {
    let s = builtin_scene("toy_A").unwrap();
    let pose = Pose::look_at(Vec3::new(4.0, 0.0, 1.5), s.rig.target, Vec3::new(0.0, 0.0, 1.0));
    let cam = Camera::from_fov(32, 32, s.rig.fov_x, pose).unwrap();
    let img = render_view(&s, &cam, 2);
    // Some background, some surface.
    let white = img.data().chunks(3).filter(|p| p.iter().all(|v| *v == 1.0)).count();
    assert!(white > 0 && white < 32 * 32);
}

proptest! {
    #[test]
    fn reflection_is_an_involution(d in prop::array::uniform3(-1.0f64..1.0), n in prop::array::uniform3(-1.0f64..1.0)) {
        let (d, n) = (Vec3::from_array(d), Vec3::from_array(n));
        prop_assume!(d.norm() > 1e-3 && n.norm() > 1e-3);
        let (d, n) = (d.normalized(), n.normalized());
        let r = reflect(d, n);
        prop_assert!((r.norm() - 1.0).abs() < 1e-12);
        prop_assert!(close(reflect(r, n), d, 1e-12));
    }

    #[test]
    fn traced_colours_in_unit_cube(o in prop::array::uniform3(-3.0f64..3.0), d in prop::array::uniform3(-1.0f64..1.0), which in 0usize..4) {
        let d = Vec3::from_array(d);
        prop_assume!(d.norm() > 1e-3);
        let s = &builtin_scenes()[which];
        let r = s.trace(Vec3::from_array(o), d, s.max_bounces);
        prop_assert!(r.rgb.iter().all(|c| (0.0..=1.0).contains(c)));
        prop_assert!(r.reflections <= s.max_bounces);
    }
}
