//! Adam, the learning-rate schedule and the photometric loss.

use crate::autodiff::{AutodiffError, Graph, ParamStore, Scalar, Tensor, Var};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Bias-corrected Adam. Moments are kept in `f64` whatever the parameter
/// precision.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<T: Scalar>(params: &ParamStore<T>) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One update of every parameter with its gradient.
    pub fn update<T: Scalar>(&mut self, params: &mut ParamStore<T>, grads: &[Vec<f64>], lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
        let ids: Vec<_> = params.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads[k]);
            let data = params.get_mut(id).data_mut();
            debug_assert_eq!(data.len(), g.len());
            for i in 0..data.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let step = lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + ADAM_EPS);
                data[i] = T::from_f64_lossy(data[i].to_f64_lossy() - step);
            }
        }
    }
}

/// Exponential decay from `lr_init` at step 0 to `lr_final` at `total`.
pub fn learning_rate(step: u64, total: u64, lr_init: f64, lr_final: f64) -> f64 {
    let frac = if total == 0 { 1.0 } else { (step as f64 / total as f64).min(1.0) };
    lr_init * (lr_final / lr_init).powf(frac)
}

/// Mean squared error over every element.
pub fn mse_loss<T: Scalar>(g: &mut Graph<T>, pred: Var, target: Var) -> Result<Var, AutodiffError> {
    let diff = g.sub(pred, target)?;
    let sq = g.mul(diff, diff)?;
    g.mean(sq, None)
}

/// Sum of squared errors divided by `denom`; summing this over disjoint
/// chunks of a batch gives the batch MSE.
pub fn scaled_sse<T: Scalar>(g: &mut Graph<T>, pred: Var, target: &[f64], denom: f64) -> Result<Var, AutodiffError> {
    let shape = g.shape(pred).to_vec();
    let t = g.constant(Tensor::from_f64(shape, target)?);
    let diff = g.sub(pred, t)?;
    let sq = g.mul(diff, diff)?;
    let s = g.sum(sq, None)?;
    Ok(g.mul_scalar(s, T::from_f64_lossy(1.0 / denom)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_examples() {
        let mut g = Graph::<f64>::new();
        let a = g.param(Tensor::new([2, 3], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap());
        let b = g.constant(Tensor::new([2, 3], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap());
        let l = mse_loss(&mut g, a, b).unwrap();
        assert_eq!(g.value(l).item(), Some(0.0));

        let mut g = Graph::<f64>::new();
        let pred = vec![0.3, 0.5, 0.7, 0.2, 0.9, 0.4];
        let target: Vec<f64> = pred.iter().map(|p| p - 0.1).collect();
        let a = g.param(Tensor::new([2, 3], pred.clone()).unwrap());
        let b = g.constant(Tensor::new([2, 3], target.clone()).unwrap());
        let l = mse_loss(&mut g, a, b).unwrap();
        assert!((g.value(l).item().unwrap() - 0.01).abs() < 1e-15);
        g.backward(l).unwrap();
        for (i, d) in g.grad(a).unwrap().data().iter().enumerate() {
            assert!((d - 2.0 * (pred[i] - target[i]) / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut g = Graph::<f64>::new();
        let a = g.param(Tensor::zeros([2, 3]));
        let b = g.constant(Tensor::zeros([3, 2]));
        assert!(mse_loss(&mut g, a, b).is_err());
    }

    #[test]
    fn chunked_sse_sums_to_mse() {
        let pred = [0.1, 0.9, 0.4, 0.3, 0.2, 0.8];
        let target = [0.0, 1.0, 0.5, 0.5, 0.5, 0.5];
        let mut g = Graph::<f64>::new();
        let a = g.param(Tensor::new([2, 3], pred.to_vec()).unwrap());
        let b = g.constant(Tensor::new([2, 3], target.to_vec()).unwrap());
        let full = mse_loss(&mut g, a, b).unwrap();
        let full = g.value(full).item().unwrap();
        let mut total = 0.0;
        for r in 0..2 {
            let mut g = Graph::<f64>::new();
            let a = g.param(Tensor::new([1, 3], pred[r * 3..r * 3 + 3].to_vec()).unwrap());
            let l = scaled_sse(&mut g, a, &target[r * 3..r * 3 + 3], 6.0).unwrap();
            total += g.value(l).item().unwrap();
        }
        assert!((total - full).abs() < 1e-15);
    }

    fn single_param(x: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("x", Tensor::new([2], vec![x, -x]).unwrap());
        s
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = single_param(1.0);
        let mut adam = Adam::new(&p);
        adam.update(&mut p, &[vec![3.7, -0.02]], 0.01);
        let d = p.iter().next().unwrap().1.data().to_vec();
        assert!((d[0] - (1.0 - 0.01)).abs() < 1e-8);
        assert!((d[1] - (-1.0 + 0.01)).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_does_not_move() {
        let mut p = single_param(0.5);
        let mut adam = Adam::new(&p);
        for _ in 0..10 {
            adam.update(&mut p, &[vec![0.0, 0.0]], 0.1);
        }
        assert_eq!(p.iter().next().unwrap().1.data(), &[0.5, -0.5]);
    }

    /// Simulated descent on `(x − 3)²`.
    #[test]
    fn converges_on_quadratic() {
        let mut p = ParamStore::<f64>::new();
        let id = p.add("x", Tensor::new([1], vec![-2.0]).unwrap());
        let mut adam = Adam::new(&p);
        let mut steps = 0;
        while steps < 5000 {
            let x = p.get(id).data()[0];
            if (x - 3.0).abs() < 1e-6 {
                break;
            }
            adam.update(&mut p, &[vec![2.0 * (x - 3.0)]], 1e-2);
            steps += 1;
        }
        assert!((p.get(id).data()[0] - 3.0).abs() < 1e-6, "stalled after {steps}");
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(learning_rate(0, 100, 5e-4, 5e-6), 5e-4);
        assert!((learning_rate(100, 100, 5e-4, 5e-6) - 5e-6).abs() < 1e-18);
        assert!((learning_rate(50, 100, 5e-4, 5e-6) - 5e-5).abs() < 1e-15);
    }
}
