use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::RenderError;

/// Floor added to every coarse weight before building the fine-sampling pdf.
pub const PDF_FLOOR: f64 = 1e-5;

/// Independent, reproducible random stream for one ray.
pub fn ray_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sorted sample depths along a ray with their interval lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySamples {
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
    pub near: f64,
    pub far: f64,
}

impl RaySamples {
    /// Builds intervals from strictly ascending depths inside `[near, far]`.
    pub fn from_sorted(t: Vec<f64>, near: f64, far: f64) -> Result<Self, RenderError> {
        if !(near < far) {
            return Err(RenderError::Bounds { near, far });
        }
        if t.is_empty() {
            return Err(RenderError::NoSamples);
        }
        if t.windows(2).any(|w| !(w[0] < w[1])) || t[0] < near || t[t.len() - 1] > far {
            return Err(RenderError::Unsorted);
        }
        let mut s = Self {
            t,
            delta: Vec::new(),
            near,
            far,
        };
        let edges = s.edges();
        s.delta = edges.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// `N + 1` interval boundaries: `near`, the midpoints, `far`.
    pub fn edges(&self) -> Vec<f64> {
        let mut e = Vec::with_capacity(self.t.len() + 1);
        e.push(self.near);
        e.extend(self.t.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        e.push(self.far);
        e
    }

    /// Stretches the last interval by `pad` (the classic `1e10` trick makes
    /// the final sample absorb everything left on the ray).
    pub fn with_terminal_padding(mut self, pad: f64) -> Self {
        if let Some(d) = self.delta.last_mut() {
            *d += pad;
        }
        self
    }
}

/// `N` depths, one per equal bin of `[near, far]`: the bin centre, or a
/// uniform draw inside the bin when `rng` is given.
pub fn stratified_sample(
    near: f64,
    far: f64,
    n: usize,
    rng: Option<&mut impl Rng>,
) -> Result<RaySamples, RenderError> {
    if n == 0 {
        return Err(RenderError::NoSamples);
    }
    if !(near < far) {
        return Err(RenderError::Bounds { near, far });
    }
    let step = (far - near) / n as f64;
    let t: Vec<f64> = match rng {
        Some(rng) => (0..n)
            .map(|i| near + (i as f64 + rng.random::<f64>()) * step)
            .collect(),
        None => (0..n).map(|i| near + (i as f64 + 0.5) * step).collect(),
    };
    RaySamples::from_sorted(strictly_ascending(t, near, far), near, far)
}

/// Draws `n_fine` depths from the piecewise-constant pdf given by `weights`
/// over the coarse intervals and returns the sorted union with the coarse
/// depths. Without `rng` the draws sit at evenly spaced quantiles.
pub fn hierarchical_sample(
    coarse: &RaySamples,
    weights: &[f64],
    n_fine: usize,
    rng: Option<&mut impl Rng>,
) -> Result<RaySamples, RenderError> {
    if weights.len() != coarse.len() {
        return Err(RenderError::Length {
            what: "coarse weights",
            expected: coarse.len(),
            got: weights.len(),
        });
    }
    let fine = sample_pdf(&coarse.edges(), weights, n_fine, rng);
    let mut merged = coarse.t.clone();
    merged.extend(fine);
    merged.sort_by(f64::total_cmp);
    RaySamples::from_sorted(strictly_ascending(merged, coarse.near, coarse.far), coarse.near, coarse.far)
}

/// Inverse-CDF sampling of a piecewise-constant density on `edges`.
pub fn sample_pdf(edges: &[f64], weights: &[f64], n: usize, rng: Option<&mut impl Rng>) -> Vec<f64> {
    debug_assert_eq!(edges.len(), weights.len() + 1);
    let w: Vec<f64> = weights
        .iter()
        .map(|&x| if x.is_finite() { x.max(0.0) } else { 0.0 } + PDF_FLOOR)
        .collect();
    let total: f64 = w.iter().sum();
    let mut cdf = Vec::with_capacity(w.len() + 1);
    cdf.push(0.0);
    let mut acc = 0.0;
    for x in &w {
        acc += x / total;
        cdf.push(acc);
    }
    let last = cdf.len() - 1;
    cdf[last] = 1.0;

    let us: Vec<f64> = match rng {
        Some(rng) => (0..n).map(|_| rng.random::<f64>()).collect(),
        None => (0..n).map(|j| (j as f64 + 0.5) / n as f64).collect(),
    };
    us.into_iter()
        .map(|u| {
            let i = cdf.partition_point(|&c| c <= u).clamp(1, w.len()) - 1;
            let width = cdf[i + 1] - cdf[i];
            let frac = if width > 0.0 { (u - cdf[i]) / width } else { 0.0 };
            edges[i] + frac.clamp(0.0, 1.0) * (edges[i + 1] - edges[i])
        })
        .collect()
}

/// Nudges ties apart so depths are strictly increasing and stay in range.
fn strictly_ascending(mut t: Vec<f64>, near: f64, far: f64) -> Vec<f64> {
    for i in 0..t.len() {
        t[i] = t[i].clamp(near, far);
        if i > 0 && t[i] <= t[i - 1] {
            t[i] = t[i - 1].next_up();
        }
    }
    // Overflowing past `far` can only happen after a pile-up at the end; walk
    // back down from `far` in that case.
    let n = t.len();
    if n > 0 && t[n - 1] > far {
        t[n - 1] = far;
        for i in (0..n - 1).rev() {
            if t[i] >= t[i + 1] {
                t[i] = t[i + 1].next_down();
            }
        }
    }
    t
}
