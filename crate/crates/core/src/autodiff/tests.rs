use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    t(shape, &(0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())
}

/// Central finite difference of `f` at every coordinate of `inputs[which]`.
fn numeric_grad(
    inputs: &[Tensor<f64>],
    which: usize,
    step: f64,
    f: &dyn Fn(&[Tensor<f64>]) -> f64,
) -> Vec<f64> {
    let mut work = inputs.to_vec();
    (0..inputs[which].len())
        .map(|j| {
            let x = inputs[which].data()[j];
            work[which].data_mut()[j] = x + step;
            let hi = f(&work);
            work[which].data_mut()[j] = x - step;
            let lo = f(&work);
            work[which].data_mut()[j] = x;
            (hi - lo) / (2.0 * step)
        })
        .collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Builds `build` on fresh leaves, backprops, and compares against central
/// differences. Returns the worst relative error.
fn check_gradients(
    inputs: &[Tensor<f64>],
    build: &dyn Fn(&mut Graph<f64>, &[Var]) -> Var,
) -> f64 {
    let eval = |xs: &[Tensor<f64>]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.constant(x.clone())).collect();
        let out = build(&mut g, &vars);
        g.value(out).item().unwrap()
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.param(x.clone())).collect();
    let out = build(&mut g, &vars);
    g.backward(out).unwrap();
    let mut worst: f64 = 0.0;
    for (i, &v) in vars.iter().enumerate() {
        let analytic = g.grad(v).unwrap();
        let numeric = numeric_grad(inputs, i, 1e-5, &eval);
        for (a, n) in analytic.data().iter().zip(&numeric) {
            worst = worst.max(rel_err(*a, *n));
        }
    }
    worst
}

#[test]
fn matmul_identity_and_zero_cases() {
    let mut g = Graph::<f64>::new();
    let i2 = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let m = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let p = g.matmul(i2, m).unwrap();
    assert_eq!(g.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);

    let a = g.constant(t(&[1, 2], &[1.0, 0.0]));
    let b = g.constant(t(&[2, 1], &[0.0, 5.0]));
    let c = g.matmul(a, b).unwrap();
    assert_eq!(g.value(c).shape(), &[1, 1]);
    assert_eq!(g.value(c).data(), &[0.0]);
}

#[test]
fn matmul_shape_mismatch_reports_both_shapes() {
    let mut g = Graph::<f64>::new();
    let a = g.constant(Tensor::zeros(vec![2, 3]));
    let b = g.constant(Tensor::zeros(vec![2, 3]));
    let err = g.matmul(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]"), "{msg}");
    assert!(matches!(err, AutodiffError::ShapeMismatch { .. }));
}

#[test]
fn matmul_sum_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = random(&[3, 3], &mut rng);
    let b = random(&[3, 3], &mut rng);
    let worst = check_gradients(&[a, b], &|g, v| {
        let c = g.matmul(v[0], v[1]).unwrap();
        g.sum(c, None).unwrap()
    });
    assert!(worst < 1e-6, "worst relative error {worst}");
}

#[test]
fn elementwise_values() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(t(&[3], &[-1.0, 0.0, 2.0]));
    let r = g.relu(x);
    assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
    let z = g.constant(t(&[1], &[0.0]));
    let e = g.exp(z);
    assert_eq!(g.value(e).data(), &[1.0]);
    let s = g.sigmoid(z);
    assert_eq!(g.value(s).data(), &[0.5]);
}

#[test]
fn softplus_derivative_at_zero_is_half() {
    let mut g = Graph::<f64>::new();
    let x = g.param(t(&[1], &[0.0]));
    let y = g.softplus(x);
    let l = g.sum(y, None).unwrap();
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[0.5]);
    assert!((g.value(y).data()[0] - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn relu_subgradient_at_zero_is_zero() {
    let mut g = Graph::<f64>::new();
    let x = g.param(t(&[3], &[-1.0, 0.0, 1.0]));
    let y = g.relu(x);
    let l = g.sum(y, None).unwrap();
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[0.0, 0.0, 1.0]);
}

#[test]
fn non_broadcastable_shapes_rejected() {
    let mut g = Graph::<f64>::new();
    let a = g.constant(Tensor::zeros(vec![2, 3]));
    let b = g.constant(Tensor::zeros(vec![3, 2]));
    assert!(g.add(a, b).is_err());
    assert!(g.mul(a, b).is_err());
    let s = g.constant(Tensor::scalar(2.0));
    assert!(g.mul(a, s).is_ok());
}

#[test]
fn reductions() {
    let mut g = Graph::<f64>::new();
    let x = g.param(t(&[3], &[1.0, 2.0, 3.0]));
    let s = g.sum(x, None).unwrap();
    assert_eq!(g.value(s).item(), Some(6.0));
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);

    let ones = g.constant(Tensor::ones(vec![4, 4]));
    let m = g.mean(ones, None).unwrap();
    assert_eq!(g.value(m).item(), Some(1.0));

    let y = g.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let rows = g.sum(y, Some(1)).unwrap();
    assert_eq!(g.value(rows).data(), &[6.0, 15.0]);
    let cols = g.mean(y, Some(0)).unwrap();
    assert_eq!(g.value(cols).data(), &[2.5, 3.5, 4.5]);
    assert!(matches!(
        g.sum(y, Some(2)),
        Err(AutodiffError::InvalidAxis { .. })
    ));
}

#[test]
fn square_has_gradient_six_at_three() {
    let mut g = Graph::<f64>::new();
    let x = g.param(t(&[], &[3.0]));
    let y = g.mul(x, x).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[6.0]);
}

#[test]
fn weight_vector_product_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = random(&[4, 3], &mut rng);
    let v = random(&[3, 1], &mut rng);
    let worst = check_gradients(&[w, v], &|g, x| {
        let p = g.matmul(x[0], x[1]).unwrap();
        g.sum(p, None).unwrap()
    });
    assert!(worst < 1e-6, "worst relative error {worst}");
}

#[test]
fn repeated_backward_accumulates() {
    let mut g = Graph::<f64>::new();
    let x = g.param(t(&[], &[3.0]));
    let y = g.mul(x, x).unwrap();
    g.backward(y).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[12.0]);
    g.zero_grad();
    assert!(g.grad(x).is_none());
}

#[test]
fn non_scalar_loss_rejected() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::zeros(vec![2]));
    assert!(matches!(g.backward(x), Err(AutodiffError::NonScalarLoss(_))));
}

#[test]
fn two_consumers_sum_path_gradients() {
    // l = sum(exp(x)) + sum(3x) → dl/dx = exp(x) + 3
    let mut g = Graph::<f64>::new();
    let x = g.param(t(&[2], &[0.0, 1.0]));
    let e = g.exp(x);
    let s = g.mul_scalar(x, 3.0);
    let a = g.sum(e, None).unwrap();
    let b = g.sum(s, None).unwrap();
    let l = g.add(a, b).unwrap();
    g.backward(l).unwrap();
    let gx = g.grad(x).unwrap();
    assert!((gx.data()[0] - 4.0).abs() < 1e-15);
    assert!((gx.data()[1] - (1f64.exp() + 3.0)).abs() < 1e-15);
}

#[test]
fn ops_do_not_mutate_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = random(&[3, 4], &mut rng);
    let b = random(&[4, 2], &mut rng);
    let mut g = Graph::new();
    let va = g.param(a.clone());
    let vb = g.param(b.clone());
    let m = g.matmul(va, vb).unwrap();
    let s = g.softplus(m);
    let c = g.cumsum_exclusive(s).unwrap();
    let l = g.sum(c, None).unwrap();
    g.backward(l).unwrap();
    assert_eq!(g.value(va), &a);
    assert_eq!(g.value(vb), &b);
}

#[test]
fn structural_ops_values() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let c = g.cumsum_exclusive(x).unwrap();
    assert_eq!(g.value(c).data(), &[0.0, 1.0, 3.0, 0.0, 4.0, 9.0]);
    let n = g.narrow(x, 1, 1, 2).unwrap();
    assert_eq!(g.value(n).data(), &[2.0, 3.0, 5.0, 6.0]);
    let cat = g.concat(&[n, x], 1).unwrap();
    assert_eq!(g.value(cat).shape(), &[2, 5]);
    assert_eq!(g.value(cat).data(), &[2.0, 3.0, 1.0, 2.0, 3.0, 5.0, 6.0, 4.0, 5.0, 6.0]);
    let rows = g.concat(&[x, x], 0).unwrap();
    assert_eq!(g.value(rows).shape(), &[4, 3]);
    let sm = g.softmax_last(x).unwrap();
    let total: f64 = g.value(sm).data()[..3].iter().sum();
    assert!((total - 1.0).abs() < 1e-15);
    assert!(g.narrow(x, 1, 2, 2).is_err());
}

/// A composite touching every op the renderer and networks use.
fn composite(g: &mut Graph<f64>, v: &[Var]) -> Var {
    // v: x[4,3], w[3,6], b[6], s[4]
    let h = g.linear(v[0], v[1], v[2]).unwrap();
    let a = g.softplus(h);
    let left = g.narrow(a, 1, 0, 3).unwrap();
    let right = g.narrow(h, 1, 3, 3).unwrap();
    let sig = g.sigmoid(right);
    let r = g.relu(right);
    let sr = g.add(sig, r).unwrap();
    let cs = g.cumsum_exclusive(left).unwrap();
    let ncs = g.neg(cs);
    let tr = g.exp(ncs);
    let prod = g.mul(tr, sr).unwrap();
    let scaled = g.mul_rows(prod, v[3]).unwrap();
    let sm = g.softmax_last(scaled).unwrap();
    let cat = g.concat(&[sm, left], 1).unwrap();
    let w = g.reshape(cat, vec![4, 1, 6]).unwrap();
    let col = g.reshape(h, vec![4, 6, 1]).unwrap();
    let bm = g.bmm(w, col).unwrap();
    let flat = g.reshape(bm, vec![4]).unwrap();
    let sq = g.mul(flat, flat).unwrap();
    let om = g.one_minus(sq);
    let half = g.mul_scalar(om, 0.5);
    let rs = g.mean(half, Some(0)).unwrap();
    let sub = g.sub(rs, v[3]).unwrap_or(rs);
    let tot = g.sum(sub, None).unwrap();
    let sh = g.add_scalar(tot, 0.25);
    g.mul(sh, sh).unwrap()
}

#[test]
fn composite_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inputs = vec![
        random(&[4, 3], &mut rng),
        random(&[3, 6], &mut rng),
        random(&[6], &mut rng),
        random(&[4], &mut rng),
    ];
    let worst = check_gradients(&inputs, &composite);
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn f32_matches_f64_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = random(&[5, 7], &mut rng);
    let b = random(&[7, 3], &mut rng);
    let mut g64 = Graph::new();
    let (x, y) = (g64.constant(a.clone()), g64.constant(b.clone()));
    let p64 = g64.matmul(x, y).unwrap();
    let mut g32 = Graph::<f32>::new();
    let (x, y) = (g32.constant(a.cast()), g32.constant(b.cast()));
    let p32 = g32.matmul(x, y).unwrap();
    for (u, v) in g64.value(p64).data().iter().zip(g32.value(p32).data()) {
        assert!((u - *v as f64).abs() < 1e-5);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// Analytic vs central differences at random points, 64-bit, step 1e-5.
    #[test]
    fn composite_gradients_at_random_points(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = vec![
            random(&[4, 3], &mut rng),
            random(&[3, 6], &mut rng),
            random(&[6], &mut rng),
            random(&[4], &mut rng),
        ];
        // Skip draws that land within FD reach of a relu kink.
        let mut g = Graph::new();
        let (x, w, b) = (g.constant(inputs[0].clone()), g.constant(inputs[1].clone()), g.constant(inputs[2].clone()));
        let h = g.linear(x, w, b).unwrap();
        prop_assume!(g.value(h).data().iter().all(|v| v.abs() > 1e-3));
        let worst = check_gradients(&inputs, &composite);
        prop_assert!(worst < 1e-4, "worst relative error {}", worst);
    }

    #[test]
    fn reshape_roundtrip_keeps_values(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[rows, cols], &mut rng);
        let mut g = Graph::new();
        let v = g.constant(x.clone());
        let r = g.reshape(v, vec![rows * cols]).unwrap();
        let back = g.reshape(r, vec![rows, cols]).unwrap();
        prop_assert_eq!(g.value(back), &x);
    }
}
