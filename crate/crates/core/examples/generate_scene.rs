//! Renders a builtin mirror scene into a posed dataset and prints where the
//! mirror's virtual images show up.
//!
//! ```text
//! cargo run --release --example generate_scene -- [scene] [out_dir]
//! ```

use std::path::PathBuf;

use mirrorfield::math::Vec3;
use mirrorfield::scene::{builtin_scene, generate_dataset, DatasetOptions, Split, BUILTIN_NAMES};

fn main() -> anyhow::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "toy_A".into());
    let out: PathBuf = std::env::args()
        .nth(2)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join(format!("mirrorfield-{name}")));
    let scene = builtin_scene(&name).map_err(|e| anyhow::anyhow!("{e}; builtins are {}", BUILTIN_NAMES.join(", ")))?;

    // Aim at where the first sphere's mirror image would be: the ray lands
    // on the mirror and comes back with the sphere's colour.
    if let (Some(mirror), Some(mirrorfield::scene::Shape::Sphere { center, .. })) =
        (scene.mirrors.first(), scene.primitives.get(1).map(|p| p.shape))
    {
        let eye = Vec3::new(3.0, 2.0, 0.4);
        let virtual_center = mirror.plane().reflect_point(center);
        let hit = scene.trace(eye, virtual_center - eye, scene.max_bounces);
        println!(
            "ray towards the virtual image at {:.2?}: rgb {:.3?} after {} reflection(s)",
            virtual_center.to_array(),
            hit.rgb,
            hit.reflections
        );
    }

    let manifest = generate_dataset(&scene, &DatasetOptions::new(24, 48, 0), &out)?;
    for split in [Split::Train, Split::Val, Split::Test] {
        println!("{:5}: {} views", split.as_str(), manifest.frames_in(split).count());
    }
    println!("wrote {}", out.display());
    Ok(())
}
