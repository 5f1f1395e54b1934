//! PSNR and SSIM of a rendered view under increasing noise.

use mirrorfield::metrics::{psnr, ssim};
use mirrorfield::rendering::Camera;
use mirrorfield::scene::{builtin_scene, circle_poses, render_view};
use rand::{Rng, SeedableRng};

fn main() -> anyhow::Result<()> {
    let scene = builtin_scene("toy_A")?;
    let pose = circle_poses(scene.rig.radius, scene.rig.height, scene.rig.target, 4)[1];
    let cam = Camera::from_fov(64, 64, scene.rig.fov_x, pose)?;
    let clean = render_view(&scene, &cam, 2);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for amp in [0.0, 0.01, 0.03, 0.1] {
        let data = clean.data().iter().map(|v| v + amp * (rng.random::<f64>() * 2.0 - 1.0)).collect();
        let noisy = mirrorfield::image::Image::new(64, 64, data)?;
        println!("noise ±{amp:<5} PSNR {:6.2} dB  SSIM {:.4}", psnr(&clean, &noisy)?, ssim(&clean, &noisy)?);
    }
    Ok(())
}
