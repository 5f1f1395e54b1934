//! Coarse/fine network pair and rendering through it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TrainError;
use crate::autodiff::{BoundParams, Graph, ParamStore, Scalar};
use crate::encoding::{EncodingConfig, SceneNormalizer, DEFAULT_DIRECTION_LEVELS, DEFAULT_POSITION_LEVELS};
use crate::fields::{BackboneConfig, DensityActivation, FieldConfig, FieldNetwork, HeadConfig, MsHeadConfig, ParamBreakdown};
use crate::image::Image;
use crate::math::Aabb;
use crate::rendering::{
    hierarchical_sample, ray_rng, render_batch_perturbed, stratified_sample, BatchRender, Camera, Ray, RaySamples,
};

/// Everything that determines the shape of the networks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub head: HeadConfig,
    pub position_levels: usize,
    pub direction_levels: usize,
    pub density_activation: DensityActivation,
    /// Give the coarse network a plain single-space head.
    pub ms_fine_only: bool,
    /// Train a second network on hierarchically resampled points.
    pub hierarchical: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneConfig::default(),
            head: HeadConfig::Baseline,
            position_levels: DEFAULT_POSITION_LEVELS,
            direction_levels: DEFAULT_DIRECTION_LEVELS,
            density_activation: DensityActivation::Softplus,
            ms_fine_only: false,
            hierarchical: true,
        }
    }
}

impl ModelConfig {
    /// Named configurations: `baseline`, `ms-avg`, `ms-s`, `ms-m`, `ms-b`.
    pub fn preset(name: &str) -> Option<Self> {
        let head = match name {
            "baseline" | "nerf" => HeadConfig::Baseline,
            "ms-s" => HeadConfig::MultiSpace(MsHeadConfig::SMALL),
            "ms-m" => HeadConfig::MultiSpace(MsHeadConfig::MEDIUM),
            "ms-b" => HeadConfig::MultiSpace(MsHeadConfig::BIG),
            "ms-avg" => HeadConfig::MultiSpaceAvg { k: MsHeadConfig::SMALL.k },
            _ => return None,
        };
        Some(Self {
            head,
            ..Self::default()
        })
    }

    pub fn field_config(&self, fine: bool) -> Result<FieldConfig, TrainError> {
        let head = if self.ms_fine_only && !fine {
            HeadConfig::Baseline
        } else {
            self.head
        };
        let mut cfg = FieldConfig::new(self.backbone, head);
        cfg.position_encoding = EncodingConfig::new(self.position_levels)
            .map_err(|e| TrainError::Config(format!("position encoding: {e}")))?;
        cfg.direction_encoding = EncodingConfig::new(self.direction_levels)
            .map_err(|e| TrainError::Config(format!("direction encoding: {e}")))?;
        cfg.density_activation = self.density_activation;
        cfg.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Hex SHA-256 of the canonical JSON form; checkpoints record it.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(json))
    }
}

/// Sampling and compositing settings for one render pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderSettings {
    pub n_coarse: usize,
    pub n_fine: usize,
    /// Jittered stratified and random fine samples; off for evaluation.
    pub jitter: bool,
    pub terminal_padding: f64,
    pub background: [f64; 3],
    /// Std-dev of Gaussian noise on raw densities; 0 disables.
    pub density_noise: f64,
}

impl RenderSettings {
    pub fn eval(n_coarse: usize, n_fine: usize, background: [f64; 3]) -> Self {
        Self {
            n_coarse,
            n_fine,
            jitter: false,
            terminal_padding: 0.0,
            background,
            density_noise: 0.0,
        }
    }
}

/// Coarse pass and, for hierarchical models, the fine pass over the merged
/// samples.
pub struct PassOutput {
    pub coarse: BatchRender,
    pub fine: Option<BatchRender>,
}

impl PassOutput {
    /// The render used as the model's answer: fine when present.
    pub fn best(&self) -> &BatchRender {
        self.fine.as_ref().unwrap_or(&self.coarse)
    }
}

/// Parameters of both networks live in one store under the `coarse.` and
/// `fine.` prefixes.
#[derive(Clone, Debug)]
pub struct Model<T: Scalar> {
    pub config: ModelConfig,
    pub coarse: FieldNetwork,
    pub fine: Option<FieldNetwork>,
    pub params: ParamStore<T>,
    pub normalizer: SceneNormalizer,
    pub bbox: Aabb,
}

impl<T: Scalar> Model<T> {
    /// Initialises in `f64` from `seed` and converts, so both precisions
    /// start from the same weights.
    pub fn new(config: ModelConfig, bbox: Aabb, seed: u64) -> Result<Self, TrainError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::<f64>::new();
        let coarse = FieldNetwork::new(&mut store, "coarse", config.field_config(false)?, &mut rng)?;
        let fine = if config.hierarchical {
            Some(FieldNetwork::new(&mut store, "fine", config.field_config(true)?, &mut rng)?)
        } else {
            None
        };
        Ok(Self {
            config,
            coarse,
            fine,
            params: store.cast(),
            normalizer: SceneNormalizer::from_bounds(bbox.min, bbox.max),
            bbox,
        })
    }

    pub fn breakdown(&self) -> (ParamBreakdown, Option<ParamBreakdown>) {
        (self.coarse.breakdown(), self.fine.as_ref().map(|f| f.breakdown()))
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }

    /// The network whose output is reported (fine when present).
    pub fn output_network(&self) -> &FieldNetwork {
        self.fine.as_ref().unwrap_or(&self.coarse)
    }

    /// Renders `rays` on `g`. Random draws come from per-ray streams
    /// `ray_rng(seed, stream_base + r)`, so results do not depend on how a
    /// batch is split.
    pub fn render_rays(
        &self,
        g: &mut Graph<T>,
        bound: &BoundParams,
        rays: &[Ray],
        settings: &RenderSettings,
        seed: u64,
        stream_base: u64,
    ) -> Result<PassOutput, TrainError> {
        let mut rngs: Vec<ChaCha8Rng> = (0..rays.len())
            .map(|r| ray_rng(seed, stream_base + r as u64))
            .collect();
        let coarse_samples: Vec<RaySamples> = rays
            .iter()
            .zip(rngs.iter_mut())
            .map(|(ray, rng)| {
                let s = stratified_sample(ray.near, ray.far, settings.n_coarse, settings.jitter.then_some(rng))?;
                Ok(s.with_terminal_padding(settings.terminal_padding))
            })
            .collect::<Result<_, TrainError>>()?;
        let noise = |net: &FieldNetwork, n: usize, rngs: &mut [ChaCha8Rng]| -> Option<Vec<f64>> {
            (settings.density_noise > 0.0).then(|| {
                rngs.iter_mut()
                    .flat_map(|rng| {
                        (0..n * net.subspaces())
                            .map(|_| {
                                let z: f64 = StandardNormal.sample(rng);
                                settings.density_noise * z
                            })
                            .collect::<Vec<f64>>()
                    })
                    .collect()
            })
        };
        let cn = noise(&self.coarse, settings.n_coarse, &mut rngs);
        let coarse = render_batch_perturbed(
            g,
            &self.coarse,
            bound,
            rays,
            &coarse_samples,
            &self.normalizer,
            settings.background,
            cn.as_deref(),
        )?;
        let fine = match &self.fine {
            Some(net) if settings.n_fine > 0 => {
                let fine_samples: Vec<RaySamples> = coarse_samples
                    .iter()
                    .zip(rngs.iter_mut())
                    .enumerate()
                    .map(|(r, (cs, rng))| {
                        // Resample from the unpadded intervals.
                        let base = RaySamples::from_sorted(cs.t.clone(), cs.near, cs.far)?;
                        let s = hierarchical_sample(
                            &base,
                            coarse.ray_weights(r),
                            settings.n_fine,
                            settings.jitter.then_some(rng),
                        )?;
                        Ok(s.with_terminal_padding(settings.terminal_padding))
                    })
                    .collect::<Result<_, TrainError>>()?;
                let fnoise = noise(net, settings.n_coarse + settings.n_fine, &mut rngs);
                Some(render_batch_perturbed(
                    g,
                    net,
                    bound,
                    rays,
                    &fine_samples,
                    &self.normalizer,
                    settings.background,
                    fnoise.as_deref(),
                )?)
            }
            _ => None,
        };
        Ok(PassOutput { coarse, fine })
    }

    /// Renders every pixel of `camera` without gradients, `chunk` rays per
    /// graph.
    pub fn render_image(
        &self,
        camera: &Camera,
        near: f64,
        far: f64,
        settings: &RenderSettings,
        chunk: usize,
    ) -> Result<RenderedView, TrainError> {
        let n_pix = camera.pixel_count();
        let k = self.output_network().subspaces();
        let mut rgb = Vec::with_capacity(n_pix * 3);
        let mut depth = Vec::with_capacity(n_pix);
        let mut sub_colors = Vec::with_capacity(n_pix * k * 3);
        let mut sub_weights = Vec::with_capacity(n_pix * k);
        let pixels: Vec<usize> = (0..n_pix).collect();
        for block in pixels.chunks(chunk.max(1)) {
            let rays: Vec<Ray> = block
                .iter()
                .map(|&p| camera.ray(p % camera.width, p / camera.width, near, far))
                .collect();
            let mut g = Graph::<T>::new();
            let bound = self.params.bind(&mut g);
            let out = self.render_rays(&mut g, &bound, &rays, settings, 0, block[0] as u64)?;
            let best = out.best();
            rgb.extend(g.value(best.rgb).to_f64_vec());
            depth.extend_from_slice(&best.depth);
            sub_colors.extend_from_slice(&best.subspace.colors);
            sub_weights.extend_from_slice(&best.subspace.weights);
        }
        Ok(RenderedView {
            rgb: Image::new(camera.width, camera.height, rgb)?,
            depth,
            subspaces: k,
            subspace_colors: sub_colors,
            subspace_weights: sub_weights,
        })
    }
}

/// One rendered view with per-sub-space diagnostics.
#[derive(Clone, Debug)]
pub struct RenderedView {
    pub rgb: Image,
    /// Expected depth per pixel.
    pub depth: Vec<f64>,
    pub subspaces: usize,
    /// `[pixel, K, 3]`.
    pub subspace_colors: Vec<f64>,
    /// `[pixel, K]`.
    pub subspace_weights: Vec<f64>,
}

impl RenderedView {
    pub fn subspace_color_image(&self, k: usize) -> Image {
        let (w, h) = (self.rgb.width(), self.rgb.height());
        let data = (0..w * h)
            .flat_map(|p| {
                let i = (p * self.subspaces + k) * 3;
                [self.subspace_colors[i], self.subspace_colors[i + 1], self.subspace_colors[i + 2]]
            })
            .collect();
        Image::new(w, h, data).expect("sizes match")
    }

    /// Softmax weight of sub-space `k` as a grey image.
    pub fn subspace_weight_image(&self, k: usize) -> Image {
        let (w, h) = (self.rgb.width(), self.rgb.height());
        let data = (0..w * h).flat_map(|p| [self.subspace_weights[p * self.subspaces + k]; 3]).collect();
        Image::new(w, h, data).expect("sizes match")
    }

    /// Depth normalised to `[0, 1]` between `near` and `far`.
    pub fn depth_image(&self, near: f64, far: f64) -> Image {
        let (w, h) = (self.rgb.width(), self.rgb.height());
        let data = self
            .depth
            .iter()
            .flat_map(|d| [((d - near) / (far - near)).clamp(0.0, 1.0); 3])
            .collect();
        Image::new(w, h, data).expect("sizes match")
    }
}
