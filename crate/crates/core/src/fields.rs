//! Radiance/feature field networks.
//!
//! A [`FieldNetwork`] is an MLP backbone followed by one of three
//! interchangeable output heads:
//!
//! * [`HeadConfig::Baseline`] — one density and one RGB colour per point;
//! * [`HeadConfig::MultiSpace`] — `K` densities and `K` raw `d`-dimensional
//!   features per point, plus the decoder and gate MLPs that turn integrated
//!   feature pixels into colours and visibility logits;
//! * [`HeadConfig::MultiSpaceAvg`] — `K` densities and `K` RGB colours whose
//!   rendered pixels are averaged.
//!
//! Every head reports its output through [`FieldOutput`]: `densities` is
//! `[P, K]` and `values` is `[P, K·C]` with sub-space `k` in columns
//! `k·C..(k+1)·C`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, BoundParams, Graph, ParamId, ParamStore, Scalar, Tensor, Var};
use crate::encoding::EncodingConfig;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid field config: {0}")]
    Config(String),
    #[error("input has {got} columns, network expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneConfig {
    pub depth: usize,
    pub width: usize,
    /// Layer index whose input is re-concatenated with the encoded position.
    pub skip_at: Option<usize>,
    pub view_dependent: bool,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            width: 64,
            skip_at: Some(2),
            view_dependent: true,
        }
    }
}

impl BackboneConfig {
    /// The original full-size network: 8 layers of 256 units, skip at 4.
    pub fn full_size() -> Self {
        Self {
            depth: 8,
            width: 256,
            skip_at: Some(4),
            view_dependent: true,
        }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.depth < 2 {
            return Err(FieldError::Config(format!("backbone depth {} < 2", self.depth)));
        }
        if self.width == 0 {
            return Err(FieldError::Config("backbone width must be positive".into()));
        }
        if let Some(s) = self.skip_at {
            if s == 0 || s >= self.depth {
                return Err(FieldError::Config(format!(
                    "skip_at {s} must lie in 1..{}",
                    self.depth
                )));
            }
        }
        Ok(())
    }
}

/// Sub-space count `K`, feature dimension `d`, and decoder/gate hidden
/// width `h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsHeadConfig {
    pub k: usize,
    pub d: usize,
    pub h: usize,
    /// Whether features read the view-conditioned branch of the backbone.
    #[serde(default = "default_true")]
    pub view_dependent: bool,
}

fn default_true() -> bool {
    true
}

impl MsHeadConfig {
    pub const fn new(k: usize, d: usize, h: usize) -> Self {
        Self {
            k,
            d,
            h,
            view_dependent: true,
        }
    }

    pub const SMALL: Self = Self::new(6, 24, 24);
    pub const MEDIUM: Self = Self::new(6, 48, 48);
    pub const BIG: Self = Self::new(8, 64, 64);
    pub const TINY: Self = Self::new(2, 128, 128);

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.k == 0 || self.d == 0 || self.h == 0 {
            return Err(FieldError::Config(format!(
                "multi-space head needs K, d, h ≥ 1, got K={} d={} h={}",
                self.k, self.d, self.h
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeadConfig {
    Baseline,
    MultiSpace(MsHeadConfig),
    MultiSpaceAvg { k: usize },
}

impl HeadConfig {
    pub fn subspaces(&self) -> usize {
        match self {
            HeadConfig::Baseline => 1,
            HeadConfig::MultiSpace(c) => c.k,
            HeadConfig::MultiSpaceAvg { k } => *k,
        }
    }

    /// Per-sub-space width of [`FieldOutput::values`].
    pub fn value_channels(&self) -> usize {
        match self {
            HeadConfig::MultiSpace(c) => c.d,
            _ => 3,
        }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        match self {
            HeadConfig::Baseline => Ok(()),
            HeadConfig::MultiSpace(c) => c.validate(),
            HeadConfig::MultiSpaceAvg { k } if *k == 0 => {
                Err(FieldError::Config("averaging head needs K ≥ 1".into()))
            }
            HeadConfig::MultiSpaceAvg { .. } => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityActivation {
    #[default]
    Softplus,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub backbone: BackboneConfig,
    pub head: HeadConfig,
    pub position_encoding: EncodingConfig,
    pub direction_encoding: EncodingConfig,
    pub density_activation: DensityActivation,
}

impl FieldConfig {
    pub fn new(backbone: BackboneConfig, head: HeadConfig) -> Self {
        Self {
            backbone,
            head,
            position_encoding: EncodingConfig::position(),
            direction_encoding: EncodingConfig::direction(),
            density_activation: DensityActivation::Softplus,
        }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        self.backbone.validate()?;
        self.head.validate()
    }
}

/// Fully connected layer `y = x·W + b` with `W` stored `[in, out]`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        let weight = store.add(
            format!("{name}.weight"),
            Tensor::from_f64(vec![fan_in, fan_out], &w).expect("weight shape"),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(vec![fan_out]));
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn param_count(&self) -> usize {
        (self.fan_in + 1) * self.fan_out
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        x: Var,
    ) -> Result<Var, FieldError> {
        let cols = g.shape(x).get(1).copied().unwrap_or(0);
        if cols != self.fan_in {
            return Err(FieldError::InputDim {
                expected: self.fan_in,
                got: cols,
            });
        }
        Ok(g.linear(x, p.var(self.weight), p.var(self.bias))?)
    }
}

/// Hidden representations produced by the backbone for a batch of points.
#[derive(Clone, Copy, Debug)]
pub struct BackboneOutput {
    /// `[P, width]`, a function of position only.
    pub position: Var,
    /// `[P, width]`, additionally conditioned on view direction (equal to
    /// `position` when the backbone is not view dependent).
    pub view: Var,
}

#[derive(Clone, Debug)]
pub struct Backbone {
    pub config: BackboneConfig,
    pub layers: Vec<Linear>,
    pub bottleneck: Option<Linear>,
    pub view_layer: Option<Linear>,
    pub position_dim: usize,
    pub direction_dim: usize,
}

impl Backbone {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        config: BackboneConfig,
        position_dim: usize,
        direction_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = config.width;
        let layers = (0..config.depth)
            .map(|i| {
                let fan_in = match i {
                    0 => position_dim,
                    i if Some(i) == config.skip_at => w + position_dim,
                    _ => w,
                };
                Linear::new(store, &format!("{prefix}.layer{i}"), fan_in, w, rng)
            })
            .collect();
        let (bottleneck, view_layer) = if config.view_dependent {
            (
                Some(Linear::new(store, &format!("{prefix}.bottleneck"), w, w, rng)),
                Some(Linear::new(store, &format!("{prefix}.view"), w + direction_dim, w, rng)),
            )
        } else {
            (None, None)
        };
        Self {
            config,
            layers,
            bottleneck,
            view_layer,
            position_dim,
            direction_dim,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Linear::param_count).sum::<usize>()
            + self.bottleneck.map_or(0, |l| l.param_count())
            + self.view_layer.map_or(0, |l| l.param_count())
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        encoded_pos: Var,
        encoded_dir: Var,
    ) -> Result<BackboneOutput, FieldError> {
        let pos_cols = g.shape(encoded_pos).get(1).copied().unwrap_or(0);
        if pos_cols != self.position_dim {
            return Err(FieldError::InputDim {
                expected: self.position_dim,
                got: pos_cols,
            });
        }
        let mut h = encoded_pos;
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 && Some(i) == self.config.skip_at {
                h = g.concat(&[h, encoded_pos], 1)?;
            }
            let z = layer.forward(g, p, h)?;
            h = g.relu(z);
        }
        let view = match (self.bottleneck, self.view_layer) {
            (Some(b), Some(v)) => {
                let dir_cols = g.shape(encoded_dir).get(1).copied().unwrap_or(0);
                if dir_cols != self.direction_dim {
                    return Err(FieldError::InputDim {
                        expected: self.direction_dim,
                        got: dir_cols,
                    });
                }
                let feat = b.forward(g, p, h)?;
                let cat = g.concat(&[feat, encoded_dir], 1)?;
                let z = v.forward(g, p, cat)?;
                g.relu(z)
            }
            _ => h,
        };
        Ok(BackboneOutput { position: h, view })
    }
}

/// One-hidden-layer MLP `F → relu → out`.
#[derive(Clone, Copy, Debug)]
pub struct SmallMlp {
    pub hidden: Linear,
    pub out: Linear,
}

impl SmallMlp {
    fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            hidden: Linear::new(store, &format!("{name}.hidden"), input, hidden, rng),
            out: Linear::new(store, &format!("{name}.out"), hidden, output, rng),
        }
    }

    pub fn param_count(&self) -> usize {
        self.hidden.param_count() + self.out.param_count()
    }

    fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &BoundParams, x: Var) -> Result<Var, FieldError> {
        let z = self.hidden.forward(g, p, x)?;
        let a = g.relu(z);
        self.out.forward(g, p, a)
    }
}

/// Decoder MLP: integrated feature pixel → RGB in (0, 1).
#[derive(Clone, Copy, Debug)]
pub struct Decoder(pub SmallMlp);

impl Decoder {
    /// `features`: `[R, d]` → `[R, 3]`.
    pub fn decode_color<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        features: Var,
    ) -> Result<Var, FieldError> {
        let raw = self.0.forward(g, p, features)?;
        Ok(g.sigmoid(raw))
    }
}

/// Gate MLP: integrated feature pixel → raw visibility logit.
#[derive(Clone, Copy, Debug)]
pub struct Gate(pub SmallMlp);

impl Gate {
    /// `features`: `[R, d]` → `[R, 1]`.
    pub fn gate_logit<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        features: Var,
    ) -> Result<Var, FieldError> {
        self.0.forward(g, p, features)
    }
}

#[derive(Clone, Debug)]
pub enum Head {
    Baseline {
        density: Linear,
        color: Linear,
    },
    MultiSpace {
        config: MsHeadConfig,
        density: Linear,
        features: Linear,
        decoder: Decoder,
        gate: Gate,
    },
    Average {
        k: usize,
        density: Linear,
        color: Linear,
    },
}

/// Per-point head output; see the module docs for the layout.
#[derive(Clone, Copy, Debug)]
pub struct FieldOutput {
    pub densities: Var,
    pub values: Var,
    pub subspaces: usize,
    pub channels: usize,
}

/// Exact parameter counts by component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ParamBreakdown {
    pub backbone: usize,
    /// Output layer(s) mapping backbone features to densities and
    /// colours/features.
    pub head_output: usize,
    pub decoder: usize,
    pub gate: usize,
}

impl ParamBreakdown {
    pub fn total(&self) -> usize {
        self.backbone + self.head_output + self.decoder + self.gate
    }
}

/// Parameters the multi-space head adds on top of a width-`width`
/// backbone: output layer `(width+1)·K·(d+1)`, decoder `d·h + h + 3h + 3`,
/// gate `d·h + h + h + 1`.
pub fn multispace_head_params(width: usize, cfg: &MsHeadConfig) -> ParamBreakdown {
    ParamBreakdown {
        backbone: 0,
        head_output: (width + 1) * cfg.k * (cfg.d + 1),
        decoder: cfg.d * cfg.h + cfg.h + cfg.h * 3 + 3,
        gate: cfg.d * cfg.h + cfg.h + cfg.h + 1,
    }
}

impl Head {
    fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        config: HeadConfig,
        width: usize,
        rng: &mut impl Rng,
    ) -> Self {
        match config {
            HeadConfig::Baseline => Head::Baseline {
                density: Linear::new(store, &format!("{prefix}.density"), width, 1, rng),
                color: Linear::new(store, &format!("{prefix}.color"), width, 3, rng),
            },
            HeadConfig::MultiSpace(c) => Head::MultiSpace {
                config: c,
                density: Linear::new(store, &format!("{prefix}.density"), width, c.k, rng),
                features: Linear::new(store, &format!("{prefix}.features"), width, c.k * c.d, rng),
                decoder: Decoder(SmallMlp::new(store, &format!("{prefix}.decoder"), c.d, c.h, 3, rng)),
                gate: Gate(SmallMlp::new(store, &format!("{prefix}.gate"), c.d, c.h, 1, rng)),
            },
            HeadConfig::MultiSpaceAvg { k } => Head::Average {
                k,
                density: Linear::new(store, &format!("{prefix}.density"), width, k, rng),
                color: Linear::new(store, &format!("{prefix}.color"), width, 3 * k, rng),
            },
        }
    }

    pub fn breakdown(&self) -> ParamBreakdown {
        match self {
            Head::Baseline { density, color } | Head::Average { density, color, .. } => ParamBreakdown {
                head_output: density.param_count() + color.param_count(),
                ..Default::default()
            },
            Head::MultiSpace {
                density,
                features,
                decoder,
                gate,
                ..
            } => ParamBreakdown {
                backbone: 0,
                head_output: density.param_count() + features.param_count(),
                decoder: decoder.0.param_count(),
                gate: gate.0.param_count(),
            },
        }
    }

    pub fn decoder_gate(&self) -> Option<(Decoder, Gate)> {
        match self {
            Head::MultiSpace { decoder, gate, .. } => Some((*decoder, *gate)),
            _ => None,
        }
    }
}

fn activate<T: Scalar>(
    g: &mut Graph<T>,
    act: DensityActivation,
    x: Var,
    offset: Option<Var>,
) -> Result<Var, FieldError> {
    let x = match offset {
        Some(o) => g.add(x, o)?,
        None => x,
    };
    Ok(match act {
        DensityActivation::Softplus => g.softplus(x),
        DensityActivation::Relu => g.relu(x),
    })
}

/// Backbone plus output head, with its parameters living in a
/// [`ParamStore`] under a common name prefix.
#[derive(Clone, Debug)]
pub struct FieldNetwork {
    pub config: FieldConfig,
    pub backbone: Backbone,
    pub head: Head,
}

impl FieldNetwork {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        config: FieldConfig,
        rng: &mut impl Rng,
    ) -> Result<Self, FieldError> {
        config.validate()?;
        let backbone = Backbone::new(
            store,
            &format!("{prefix}.backbone"),
            config.backbone,
            config.position_encoding.output_dim(),
            config.direction_encoding.output_dim(),
            rng,
        );
        let head = Head::new(
            store,
            &format!("{prefix}.head"),
            config.head,
            config.backbone.width,
            rng,
        );
        Ok(Self {
            config,
            backbone,
            head,
        })
    }

    pub fn subspaces(&self) -> usize {
        self.config.head.subspaces()
    }

    pub fn breakdown(&self) -> ParamBreakdown {
        ParamBreakdown {
            backbone: self.backbone.param_count(),
            ..self.head.breakdown()
        }
    }

    pub fn param_count(&self) -> usize {
        self.breakdown().total()
    }

    pub fn backbone_forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        encoded_pos: Var,
        encoded_dir: Var,
    ) -> Result<BackboneOutput, FieldError> {
        self.backbone.forward(g, p, encoded_pos, encoded_dir)
    }

    /// Maps backbone features to per-point densities and values.
    pub fn head_forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        hidden: BackboneOutput,
    ) -> Result<FieldOutput, FieldError> {
        self.head_forward_offset(g, p, hidden, None)
    }

    /// As [`Self::head_forward`], adding `density_offset` (`[P, K]`) to the
    /// raw densities before activation.
    pub fn head_forward_offset<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        hidden: BackboneOutput,
        density_offset: Option<Var>,
    ) -> Result<FieldOutput, FieldError> {
        let act = self.config.density_activation;
        match &self.head {
            Head::Baseline { density, color } => {
                let s = density.forward(g, p, hidden.position)?;
                let c = color.forward(g, p, hidden.view)?;
                Ok(FieldOutput {
                    densities: activate(g, act, s, density_offset)?,
                    values: g.sigmoid(c),
                    subspaces: 1,
                    channels: 3,
                })
            }
            Head::MultiSpace {
                config,
                density,
                features,
                ..
            } => {
                let s = density.forward(g, p, hidden.position)?;
                let src = if config.view_dependent {
                    hidden.view
                } else {
                    hidden.position
                };
                let f = features.forward(g, p, src)?;
                Ok(FieldOutput {
                    densities: activate(g, act, s, density_offset)?,
                    values: f,
                    subspaces: config.k,
                    channels: config.d,
                })
            }
            Head::Average { k, density, color } => {
                let s = density.forward(g, p, hidden.position)?;
                let c = color.forward(g, p, hidden.view)?;
                Ok(FieldOutput {
                    densities: activate(g, act, s, density_offset)?,
                    values: g.sigmoid(c),
                    subspaces: *k,
                    channels: 3,
                })
            }
        }
    }

    /// Backbone and head in one call: `[P, 6L_pos]`, `[P, 6L_dir]` →
    /// [`FieldOutput`].
    pub fn evaluate<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        encoded_pos: Var,
        encoded_dir: Var,
    ) -> Result<FieldOutput, FieldError> {
        self.evaluate_offset(g, p, encoded_pos, encoded_dir, None)
    }

    pub fn evaluate_offset<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        encoded_pos: Var,
        encoded_dir: Var,
        density_offset: Option<Var>,
    ) -> Result<FieldOutput, FieldError> {
        let hidden = self.backbone_forward(g, p, encoded_pos, encoded_dir)?;
        self.head_forward_offset(g, p, hidden, density_offset)
    }
}
