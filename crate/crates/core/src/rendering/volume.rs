//! Per-ray quadrature on plain `f64` slices.

use super::{RaySamples, RenderError};

/// Result of integrating one density profile along a ray.
#[derive(Clone, Debug, PartialEq)]
pub struct Integrated {
    /// `Σ T_i α_i v_i`, one entry per channel.
    pub value: Vec<f64>,
    /// Per-sample contribution `T_i α_i`.
    pub weights: Vec<f64>,
    /// Transmittance left after the last sample, `T_{N+1}`.
    pub transmittance: f64,
    /// Expected termination depth, normalised by accumulated opacity;
    /// `far` when nothing is hit.
    pub depth: f64,
}

impl Integrated {
    pub fn opacity(&self) -> f64 {
        1.0 - self.transmittance
    }
}

/// Integrates `values` (`N × channels`, sample-major) against the densities
/// `sigmas` (`N`).
pub fn integrate(
    samples: &RaySamples,
    sigmas: &[f64],
    values: &[f64],
    channels: usize,
) -> Result<Integrated, RenderError> {
    let n = samples.len();
    check_len("densities", n, sigmas.len())?;
    check_len("values", n * channels, values.len())?;
    let mut value = vec![0.0; channels];
    let mut weights = Vec::with_capacity(n);
    let mut optical_depth = 0.0f64;
    let mut depth_acc = 0.0;
    for i in 0..n {
        let tau = sigmas[i] * samples.delta[i];
        let w = (-optical_depth).exp() * -(-tau).exp_m1();
        for c in 0..channels {
            value[c] += w * values[i * channels + c];
        }
        depth_acc += w * samples.t[i];
        weights.push(w);
        optical_depth += tau;
    }
    let transmittance = (-optical_depth).exp();
    let opacity: f64 = weights.iter().sum();
    let depth = if opacity > 1e-12 {
        depth_acc / opacity
    } else {
        samples.far
    };
    Ok(Integrated {
        value,
        weights,
        transmittance,
        depth,
    })
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), RenderError> {
    if expected != got {
        return Err(RenderError::Length { what, expected, got });
    }
    Ok(())
}

/// One sub-space's contribution to a pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspacePixel {
    /// Integrated feature `F^k`.
    pub feature: Vec<f64>,
    /// Decoded colour `C^k`, background included.
    pub color: [f64; 3],
    /// Gate logit `w^k`.
    pub logit: f64,
    /// Softmax weight of this sub-space after composition.
    pub weight: f64,
    pub alpha_total: f64,
    pub depth: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderResult {
    pub rgb: [f64; 3],
    pub depth: f64,
    pub per_subspace: Vec<SubspacePixel>,
}

/// Single-space rendering with the leftover transmittance filled by
/// `background`.
pub fn render_radiance(
    samples: &RaySamples,
    sigmas: &[f64],
    colors: &[[f64; 3]],
    background: [f64; 3],
) -> Result<RenderResult, RenderError> {
    let flat: Vec<f64> = colors.iter().flatten().copied().collect();
    let r = integrate(samples, sigmas, &flat, 3)?;
    let mut rgb = [0.0; 3];
    for c in 0..3 {
        rgb[c] = r.value[c] + r.transmittance * background[c];
    }
    Ok(RenderResult {
        rgb,
        depth: r.depth,
        per_subspace: Vec::new(),
    })
}

/// Integrates `K` feature fields sharing the same samples. `sigmas` is
/// `N × K` and `features` is `N × K × d`, both sample-major.
pub fn render_features(
    samples: &RaySamples,
    sigmas: &[f64],
    features: &[f64],
    k: usize,
    d: usize,
) -> Result<Vec<SubspacePixel>, RenderError> {
    let n = samples.len();
    check_len("sub-space densities", n * k, sigmas.len())?;
    check_len("sub-space features", n * k * d, features.len())?;
    (0..k)
        .map(|s| {
            let sig: Vec<f64> = (0..n).map(|i| sigmas[i * k + s]).collect();
            let feat: Vec<f64> = (0..n)
                .flat_map(|i| features[(i * k + s) * d..(i * k + s + 1) * d].iter().copied())
                .collect();
            let r = integrate(samples, &sig, &feat, d)?;
            Ok(SubspacePixel {
                alpha_total: r.opacity(),
                feature: r.value,
                color: [0.0; 3],
                logit: 0.0,
                weight: 0.0,
                depth: r.depth,
            })
        })
        .collect()
}

/// Decodes each sub-space, blends it over `background` by its own opacity,
/// and mixes the results with softmax weights of the gate logits.
pub fn compose(
    mut pixels: Vec<SubspacePixel>,
    decode: impl Fn(&[f64]) -> [f64; 3],
    gate: impl Fn(&[f64]) -> f64,
    background: [f64; 3],
) -> RenderResult {
    for p in &mut pixels {
        let c = decode(&p.feature);
        for ch in 0..3 {
            p.color[ch] = p.alpha_total * c[ch] + (1.0 - p.alpha_total) * background[ch];
        }
        p.logit = gate(&p.feature);
    }
    let logits: Vec<f64> = pixels.iter().map(|p| p.logit).collect();
    let weights = softmax(&logits);
    let mut rgb = [0.0; 3];
    let mut depth = 0.0;
    for (p, w) in pixels.iter_mut().zip(weights) {
        p.weight = w;
        for ch in 0..3 {
            rgb[ch] += w * p.color[ch];
        }
        depth += w * p.depth;
    }
    RenderResult {
        rgb,
        depth,
        per_subspace: pixels,
    }
}

/// Plain mean of per-sub-space colours.
pub fn compose_avg(colors: &[[f64; 3]]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for c in colors {
        for ch in 0..3 {
            out[ch] += c[ch];
        }
    }
    out.map(|v| v / colors.len() as f64)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
