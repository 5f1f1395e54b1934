//! End-to-end gradient check: analytic gradients of a rendered-pixel loss
//! against central finite differences.
//!
//! The model is a single multi-space network without hierarchical
//! resampling. Fine sample positions depend on the coarse weights through a
//! non-differentiable draw, so finite differences across both passes would
//! measure something the analytic gradient deliberately ignores.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{GradFault, Graph};
use crate::fields::{BackboneConfig, HeadConfig, MsHeadConfig};
use crate::math::{Aabb, Vec3};
use crate::rendering::{Camera, Ray};
use crate::scene::circle_poses;
use crate::training::{scaled_sse, Model, ModelConfig, RenderSettings, TrainError};

pub const DEFAULT_PROBES: usize = 256;
pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-3;
/// Gradient magnitudes below this are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckConfig {
    pub probes: usize,
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
    pub model: ModelConfig,
    pub rays: usize,
    pub samples: usize,
    /// Test hook: corrupt the backward pass.
    pub fault: Option<GradFault>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            probes: DEFAULT_PROBES,
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            seed: 0,
            model: ModelConfig {
                backbone: BackboneConfig::default(),
                head: HeadConfig::MultiSpace(MsHeadConfig::new(4, 16, 16)),
                hierarchical: false,
                ..ModelConfig::default()
            },
            rays: 6,
            samples: 16,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub probes: Vec<Probe>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub warning: Option<String>,
}

/// `|a − n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Probes are spread round-robin over every parameter tensor in a shuffled
/// order, so each layer of the backbone, head, decoder and gate is hit
/// once `probes` reaches the tensor count.
pub fn gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport, TrainError> {
    if cfg.probes == 0 {
        return Ok(GradcheckReport {
            probes: Vec::new(),
            max_rel_err: 0.0,
            tolerance: cfg.tolerance,
            passed: true,
            warning: Some("no probes requested; nothing was checked".into()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bbox = Aabb {
        min: [-1.5; 3],
        max: [1.5; 3],
    };
    let mut model = Model::<f64>::new(cfg.model, bbox, cfg.seed)?;
    let poses = circle_poses(4.0, 1.2, Vec3::new(0.0, 0.0, 0.0), cfg.rays);
    let rays: Vec<Ray> = poses
        .iter()
        .map(|p| {
            let cam = Camera::from_fov(16, 16, 0.8, *p)?;
            Ok(cam.ray(rng.random_range(0..16), rng.random_range(0..16), 2.0, 6.0))
        })
        .collect::<Result<_, TrainError>>()?;
    let targets: Vec<f64> = (0..rays.len() * 3).map(|_| rng.random()).collect();
    let settings = RenderSettings::eval(cfg.samples, 0, [1.0; 3]);
    let denom = targets.len() as f64;

    let loss = |m: &Model<f64>, fault: Option<GradFault>, grads: bool| -> Result<(f64, Vec<Vec<f64>>), TrainError> {
        let mut g = Graph::<f64>::new();
        if let Some(f) = fault {
            g.inject_fault(f);
        }
        let bound = m.params.bind(&mut g);
        let out = m.render_rays(&mut g, &bound, &rays, &settings, 0, 0)?;
        let l = scaled_sse(&mut g, out.best().rgb, &targets, denom)?;
        let value = g.value(l).item().expect("scalar loss");
        if !grads {
            return Ok((value, Vec::new()));
        }
        g.backward(l)?;
        Ok((value, m.params.grads(&g, &bound).iter().map(|t| t.to_f64_vec()).collect()))
    };

    let (_, analytic) = loss(&model, cfg.fault, true)?;
    let mut ids: Vec<_> = model.params.ids().collect();
    ids.shuffle(&mut rng);
    let mut probes = Vec::with_capacity(cfg.probes);
    for p in 0..cfg.probes {
        let id = ids[p % ids.len()];
        let n = model.params.get(id).len();
        let index = *(0..n).collect::<Vec<_>>().choose(&mut rng).expect("non-empty tensor");
        let orig = model.params.get(id).data()[index];
        model.params.get_mut(id).data_mut()[index] = orig + cfg.step;
        let (hi, _) = loss(&model, None, false)?;
        model.params.get_mut(id).data_mut()[index] = orig - cfg.step;
        let (lo, _) = loss(&model, None, false)?;
        model.params.get_mut(id).data_mut()[index] = orig;
        let numeric = (hi - lo) / (2.0 * cfg.step);
        let a = analytic[id.index()][index];
        probes.push(Probe {
            param: model.params.name(id).to_string(),
            index,
            analytic: a,
            numeric,
            rel_err: relative_error(a, numeric),
        });
    }
    let max_rel_err = probes.iter().map(|p| p.rel_err).fold(0.0, f64::max);
    Ok(GradcheckReport {
        passed: max_rel_err < cfg.tolerance,
        max_rel_err,
        tolerance: cfg.tolerance,
        probes,
        warning: None,
    })
}
