//! Differentiable rendering of a ray batch on the autodiff tape.

use super::{Ray, RaySamples, RenderError};
use crate::autodiff::{BoundParams, Graph, Scalar, Tensor, Var};
use crate::encoding::SceneNormalizer;
use crate::fields::{FieldNetwork, Head};

/// Per-sub-space diagnostics, detached from the tape.
#[derive(Clone, Debug, Default)]
pub struct SubspaceRender {
    /// `C^k` with background, `[R, K, 3]`.
    pub colors: Vec<f64>,
    /// Mixing weights, `[R, K]`: softmax of the gate logits, `1/K` for the
    /// averaging head, `1` for a single space.
    pub weights: Vec<f64>,
    /// Accumulated opacity of each sub-space, `[R, K]`.
    pub alpha: Vec<f64>,
    /// Expected depth of each sub-space, `[R, K]`.
    pub depth: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct BatchRender {
    /// Composed colour `[R, 3]`, on the tape.
    pub rgb: Var,
    pub rays: usize,
    pub samples_per_ray: usize,
    pub subspaces: usize,
    /// Per-interval weight for resampling, `[R, N]`: the maximum over
    /// sub-spaces of `T_i α_i`.
    pub sample_weights: Vec<f64>,
    /// Composed expected depth, `[R]`.
    pub depth: Vec<f64>,
    pub subspace: SubspaceRender,
}

impl BatchRender {
    pub fn ray_weights(&self, r: usize) -> &[f64] {
        &self.sample_weights[r * self.samples_per_ray..(r + 1) * self.samples_per_ray]
    }
}

/// Evaluates `net` at every sample of every ray and renders the batch.
/// All rays must carry the same number of samples.
pub fn render_batch<T: Scalar>(
    g: &mut Graph<T>,
    net: &FieldNetwork,
    params: &BoundParams,
    rays: &[Ray],
    samples: &[RaySamples],
    normalizer: &SceneNormalizer,
    background: [f64; 3],
) -> Result<BatchRender, RenderError> {
    render_batch_perturbed(g, net, params, rays, samples, normalizer, background, None)
}

/// [`render_batch`] with `density_noise` (`[R·N, K]`, sample-major) added to
/// the raw densities before activation.
#[allow(clippy::too_many_arguments)]
pub fn render_batch_perturbed<T: Scalar>(
    g: &mut Graph<T>,
    net: &FieldNetwork,
    params: &BoundParams,
    rays: &[Ray],
    samples: &[RaySamples],
    normalizer: &SceneNormalizer,
    background: [f64; 3],
    density_noise: Option<&[f64]>,
) -> Result<BatchRender, RenderError> {
    let r = rays.len();
    if r == 0 || samples.len() != r {
        return Err(RenderError::Length {
            what: "ray samples",
            expected: r,
            got: samples.len(),
        });
    }
    let n = samples[0].len();
    if samples.iter().any(|s| s.len() != n) {
        return Err(RenderError::Ragged);
    }
    let pos_cfg = net.config.position_encoding;
    let dir_cfg = net.config.direction_encoding;
    let (pd, dd) = (pos_cfg.output_dim(), dir_cfg.output_dim());
    let mut enc_pos = vec![0.0; r * n * pd];
    let mut enc_dir = vec![0.0; r * n * dd];
    let mut dir_buf = vec![0.0; dd];
    for (ri, (ray, s)) in rays.iter().zip(samples).enumerate() {
        dir_cfg.encode_into(ray.dir.to_array(), &mut dir_buf);
        for (i, &t) in s.t.iter().enumerate() {
            let row = ri * n + i;
            let p = normalizer.apply(ray.at(t).to_array());
            pos_cfg.encode_into(p, &mut enc_pos[row * pd..(row + 1) * pd]);
            enc_dir[row * dd..(row + 1) * dd].copy_from_slice(&dir_buf);
        }
    }
    let ep = g.constant(Tensor::from_f64([r * n, pd], &enc_pos)?);
    let ed = g.constant(Tensor::from_f64([r * n, dd], &enc_dir)?);
    let offset = match density_noise {
        Some(noise) => Some(g.constant(Tensor::from_f64([r * n, net.subspaces()], noise)?)),
        None => None,
    };
    let out = net.evaluate_offset(g, params, ep, ed, offset)?;
    let (k, ch) = (out.subspaces, out.channels);

    let deltas: Vec<f64> = samples.iter().flat_map(|s| s.delta.iter().copied()).collect();
    let delta = g.constant(Tensor::from_f64([r, n], &deltas)?);

    let mut integrated = Vec::with_capacity(k);
    let mut residual = Vec::with_capacity(k);
    let mut sample_weights = vec![0.0f64; r * n];
    let mut sub_alpha = vec![0.0; r * k];
    let mut sub_depth = vec![0.0; r * k];
    for s in 0..k {
        let sigma = g.narrow(out.densities, 1, s, 1)?;
        let sigma = g.reshape(sigma, [r, n])?;
        let tau = g.mul(sigma, delta)?;
        let cum = g.cumsum_exclusive(tau)?;
        let neg_cum = g.neg(cum);
        let trans = g.exp(neg_cum);
        let neg_tau = g.neg(tau);
        let keep = g.exp(neg_tau);
        let alpha = g.one_minus(keep);
        let w = g.mul(trans, alpha)?;
        let total = g.sum(tau, Some(1))?;
        let neg_total = g.neg(total);
        let t_last = g.exp(neg_total);

        let vals = g.narrow(out.values, 1, s * ch, ch)?;
        let vals = g.reshape(vals, [r, n, ch])?;
        let w3 = g.reshape(w, [r, 1, n])?;
        let f = g.bmm(w3, vals)?;
        integrated.push(g.reshape(f, [r, ch])?);
        residual.push(t_last);

        let wv = g.value(w).to_f64_vec();
        let tv = g.value(t_last).to_f64_vec();
        for ri in 0..r {
            let row = &wv[ri * n..(ri + 1) * n];
            let mut acc = 0.0f64;
            let mut dsum = 0.0;
            for (i, &x) in row.iter().enumerate() {
                let slot = &mut sample_weights[ri * n + i];
                *slot = slot.max(x);
                acc += x;
                dsum += x * samples[ri].t[i];
            }
            sub_alpha[ri * k + s] = 1.0 - tv[ri];
            sub_depth[ri * k + s] = if acc > 1e-12 { dsum / acc } else { samples[ri].far };
        }
    }

    let bg_rows: Vec<f64> = (0..r).flat_map(|_| background).collect();
    let bg = g.constant(Tensor::from_f64([r, 3], &bg_rows)?);
    let (rgb, colors, weights) = match &net.head {
        Head::Baseline { .. } => {
            let c = with_background(g, integrated[0], residual[0], bg)?;
            let cv = g.value(c).to_f64_vec();
            (c, cv, vec![1.0; r])
        }
        Head::Average { .. } => {
            let per: Vec<Var> = (0..k)
                .map(|s| with_background(g, integrated[s], residual[s], bg))
                .collect::<Result<_, _>>()?;
            let cat = g.concat(&per, 1)?;
            let stacked = g.reshape(cat, [r, k, 3])?;
            let mean = g.mean(stacked, Some(1))?;
            let cv = g.value(stacked).to_f64_vec();
            (mean, cv, vec![1.0 / k as f64; r * k])
        }
        Head::MultiSpace { decoder, gate, .. } => {
            let cat = g.concat(&integrated, 1)?;
            let feats = g.reshape(cat, [r * k, ch])?;
            let decoded = decoder.decode_color(g, params, feats)?;
            let logits = gate.gate_logit(g, params, feats)?;
            let logits = g.reshape(logits, [r, k])?;
            let soft = g.softmax_last(logits)?;

            let cols = residual
                .iter()
                .map(|&t| g.reshape(t, [r, 1]))
                .collect::<Result<Vec<_>, _>>()?;
            let res_cat = g.concat(&cols, 1)?;
            let res_flat = g.reshape(res_cat, [r * k])?;
            let alpha = g.one_minus(res_flat);
            let bg_row = g.constant(Tensor::from_f64([3], &background)?);
            let neg_bg = g.neg(bg_row);
            let shifted = g.add_row(decoded, neg_bg)?;
            let scaled = g.mul_rows(shifted, alpha)?;
            let c = g.add_row(scaled, bg_row)?;
            let c = g.reshape(c, [r, k, 3])?;
            let s3 = g.reshape(soft, [r, 1, k])?;
            let mixed = g.bmm(s3, c)?;
            let rgb = g.reshape(mixed, [r, 3])?;
            (rgb, g.value(c).to_f64_vec(), g.value(soft).to_f64_vec())
        }
    };

    let depth = (0..r)
        .map(|ri| (0..k).map(|s| weights[ri * k + s] * sub_depth[ri * k + s]).sum())
        .collect();
    Ok(BatchRender {
        rgb,
        rays: r,
        samples_per_ray: n,
        subspaces: k,
        sample_weights,
        depth,
        subspace: SubspaceRender {
            colors,
            weights,
            alpha: sub_alpha,
            depth: sub_depth,
        },
    })
}

/// `F + T_{N+1}·bg` for an RGB-valued field.
fn with_background<T: Scalar>(g: &mut Graph<T>, f: Var, t_last: Var, bg: Var) -> Result<Var, RenderError> {
    let b = g.mul_rows(bg, t_last)?;
    Ok(g.add(f, b)?)
}
