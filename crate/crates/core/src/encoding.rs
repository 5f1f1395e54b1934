//! Frequency positional encoding.
//!
//! `γ(p) = [sin(p), cos(p), sin(2p), cos(2p), …, sin(2^{L-1}p), cos(2^{L-1}p)]`
//! with every block applied to the three components of `p`. The raw input is
//! not appended. Positions are expected to be normalised into `[-1, 1]³`
//! first (see [`SceneNormalizer`]); view directions are
//! encoded the same way with fewer levels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_POSITION_LEVELS: usize = 10;
pub const DEFAULT_DIRECTION_LEVELS: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum EncodingError {
    #[error("encoding needs at least one frequency level")]
    ZeroLevels,
    #[error("encoding input must be finite, got {0:?}")]
    NonFinite([f64; 3]),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingConfig {
    levels: usize,
}

impl EncodingConfig {
    pub fn new(levels: usize) -> Result<Self, EncodingError> {
        if levels == 0 {
            return Err(EncodingError::ZeroLevels);
        }
        Ok(Self { levels })
    }

    pub fn position() -> Self {
        Self {
            levels: DEFAULT_POSITION_LEVELS,
        }
    }

    pub fn direction() -> Self {
        Self {
            levels: DEFAULT_DIRECTION_LEVELS,
        }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// `2 · 3 · L`.
    pub fn output_dim(&self) -> usize {
        6 * self.levels
    }

    /// Writes the encoding of `p` into `out` (length [`Self::output_dim`]).
    pub fn encode_into(&self, p: [f64; 3], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.output_dim());
        // One sin_cos per axis, then double-angle steps. The rounding error
        // roughly doubles per level, staying near 1e-13 at L = 10.
        let mut sc = p.map(f64::sin_cos);
        for block in out.chunks_exact_mut(6) {
            for c in 0..3 {
                let (s, co) = sc[c];
                block[c] = s;
                block[3 + c] = co;
                sc[c] = ((2.0 * s * co).clamp(-1.0, 1.0), ((co - s) * (co + s)).clamp(-1.0, 1.0));
            }
        }
    }
}

/// Affine map taking the scene bounding box onto `[-1, 1]³`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneNormalizer {
    center: [f64; 3],
    inv_half_extent: [f64; 3],
}

impl SceneNormalizer {
    pub fn from_bounds(min: [f64; 3], max: [f64; 3]) -> Self {
        let mut center = [0.0; 3];
        let mut inv = [0.0; 3];
        for i in 0..3 {
            center[i] = 0.5 * (min[i] + max[i]);
            let half = 0.5 * (max[i] - min[i]);
            inv[i] = if half > 0.0 { 1.0 / half } else { 1.0 };
        }
        Self {
            center,
            inv_half_extent: inv,
        }
    }

    pub fn identity() -> Self {
        Self {
            center: [0.0; 3],
            inv_half_extent: [1.0; 3],
        }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        [
            (p[0] - self.center[0]) * self.inv_half_extent[0],
            (p[1] - self.center[1]) * self.inv_half_extent[1],
            (p[2] - self.center[2]) * self.inv_half_extent[2],
        ]
    }
}

pub fn positional_encode(p: [f64; 3], cfg: &EncodingConfig) -> Result<Vec<f64>, EncodingError> {
    if p.iter().any(|v| !v.is_finite()) {
        return Err(EncodingError::NonFinite(p));
    }
    let mut out = vec![0.0; cfg.output_dim()];
    cfg.encode_into(p, &mut out);
    Ok(out)
}

/// Jacobian `∂γ/∂p`, row-major `[6L × 3]`.
pub fn encoding_jacobian(p: [f64; 3], cfg: &EncodingConfig) -> Vec<f64> {
    let mut jac = vec![0.0; cfg.output_dim() * 3];
    let mut freq = 1.0;
    for l in 0..cfg.levels {
        for c in 0..3 {
            let (s, co) = (freq * p[c]).sin_cos();
            jac[(l * 6 + c) * 3 + c] = freq * co;
            jac[(l * 6 + 3 + c) * 3 + c] = -freq * s;
        }
        freq *= 2.0;
    }
    jac
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use proptest::prelude::*;

    use super::*;

    #[test]
    fn origin_two_levels() {
        let cfg = EncodingConfig::new(2).unwrap();
        let e = positional_encode([0.0; 3], &cfg).unwrap();
        assert_eq!(e, vec![0., 0., 0., 1., 1., 1., 0., 0., 0., 1., 1., 1.]);
    }

    #[test]
    fn quarter_turn_single_level() {
        let cfg = EncodingConfig::new(1).unwrap();
        let e = positional_encode([FRAC_PI_2, 0.0, 0.0], &cfg).unwrap();
        let expected = [1.0, 0.0, 0.0, 0.0, 1.0, 1.0];
        for (a, b) in e.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{e:?}");
        }
    }

    #[test]
    fn defaults_and_dims() {
        assert_eq!(EncodingConfig::position().levels(), 10);
        assert_eq!(EncodingConfig::direction().levels(), 4);
        assert_eq!(EncodingConfig::position().output_dim(), 60);
        assert_eq!(EncodingConfig::direction().output_dim(), 24);
    }

    #[test]
    fn zero_levels_rejected() {
        assert_eq!(EncodingConfig::new(0), Err(EncodingError::ZeroLevels));
    }

    #[test]
    fn normalizer_maps_box_corners() {
        let n = SceneNormalizer::from_bounds([-2.0, 0.0, 1.0], [2.0, 4.0, 2.0]);
        assert_eq!(n.apply([-2.0, 0.0, 1.0]), [-1.0, -1.0, -1.0]);
        assert_eq!(n.apply([2.0, 4.0, 2.0]), [1.0, 1.0, 1.0]);
        assert_eq!(n.apply([0.0, 2.0, 1.5]), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn non_finite_rejected() {
        let cfg = EncodingConfig::position();
        assert!(positional_encode([f64::NAN, 0.0, 0.0], &cfg).is_err());
    }

    proptest! {
        #[test]
        fn matches_direct_evaluation(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let e = positional_encode([x, y, z], &EncodingConfig::position()).unwrap();
            for l in 0..10 {
                for (c, v) in [x, y, z].into_iter().enumerate() {
                    let a = 2f64.powi(l) * v;
                    prop_assert!((e[6 * l as usize + c] - a.sin()).abs() < 1e-12);
                    prop_assert!((e[6 * l as usize + 3 + c] - a.cos()).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn components_bounded(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let e = positional_encode([x, y, z], &EncodingConfig::position()).unwrap();
            prop_assert!(e.iter().all(|v| (-1.0..=1.0).contains(v)));
        }

        #[test]
        fn deterministic(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let cfg = EncodingConfig::position();
            let a = positional_encode([x, y, z], &cfg).unwrap();
            let b = positional_encode([x, y, z], &cfg).unwrap();
            prop_assert_eq!(
                a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }

        #[test]
        fn jacobian_matches_central_differences(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let cfg = EncodingConfig::new(6).unwrap();
            let p = [x, y, z];
            let jac = encoding_jacobian(p, &cfg);
            let h = 1e-5;
            for c in 0..3 {
                let mut hi = p;
                let mut lo = p;
                hi[c] += h;
                lo[c] -= h;
                let (eh, el) = (positional_encode(hi, &cfg).unwrap(), positional_encode(lo, &cfg).unwrap());
                for r in 0..cfg.output_dim() {
                    let numeric = (eh[r] - el[r]) / (2.0 * h);
                    let analytic = jac[r * 3 + c];
                    let err = (numeric - analytic).abs() / analytic.abs().max(numeric.abs()).max(1.0);
                    prop_assert!(err < 1e-4, "row {} comp {}: {} vs {}", r, c, analytic, numeric);
                }
            }
        }
    }
}
