//! Renders an analytic density/colour field with the quadrature renderer and
//! compares it with a dense Riemann sum as the sample count grows.

use mirrorfield::rendering::{render_radiance, stratified_sample};

fn sigma(t: f64) -> f64 {
    1.5 * (-(t - 3.5).powi(2) / 0.1).exp() + 0.2
}

fn color(t: f64) -> [f64; 3] {
    [0.5 + 0.5 * (2.0 * t).sin(), (t - 2.0) / 4.0, 0.3]
}

/// Midpoint Riemann sum of the rendering integral with white background.
fn dense(near: f64, far: f64, steps: usize) -> [f64; 3] {
    let h = (far - near) / steps as f64;
    let (mut tau, mut out) = (0.0, [0.0; 3]);
    for i in 0..steps {
        let t = near + (i as f64 + 0.5) * h;
        let s = sigma(t);
        let trans = (-(tau + 0.5 * s * h)).exp();
        let c = color(t);
        for k in 0..3 {
            out[k] += trans * s * c[k] * h;
        }
        tau += s * h;
    }
    let t_end = (-tau).exp();
    out.map(|v| v + t_end)
}

fn main() -> anyhow::Result<()> {
    let (near, far) = (2.0, 6.0);
    let reference = dense(near, far, 100_000);
    println!("reference {reference:.6?}");
    for n in [8, 32, 128, 512] {
        let s = stratified_sample(near, far, n, None::<&mut rand_chacha::ChaCha8Rng>)?;
        let sig: Vec<f64> = s.t.iter().map(|&t| sigma(t)).collect();
        let col: Vec<[f64; 3]> = s.t.iter().map(|&t| color(t)).collect();
        let r = render_radiance(&s, &sig, &col, [1.0; 3])?;
        let err = (0..3).map(|k| (r.rgb[k] - reference[k]).abs()).fold(0.0, f64::max);
        println!("N = {n:4}: max channel error {err:.2e}");
    }
    Ok(())
}
