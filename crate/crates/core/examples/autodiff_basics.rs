//! Builds a tiny two-layer network on the tape, backpropagates a loss and
//! checks one gradient entry against a finite difference.

use mirrorfield::autodiff::{Graph, Tensor};

fn loss(w1: &[f64], w2: &[f64], x: &[f64]) -> anyhow::Result<(f64, Vec<f64>)> {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::new([2, 3], x.to_vec())?);
    let w1v = g.param(Tensor::new([3, 4], w1.to_vec())?);
    let w2v = g.param(Tensor::new([4, 1], w2.to_vec())?);
    let h = g.matmul(x, w1v)?;
    let h = g.softplus(h);
    let y = g.matmul(h, w2v)?;
    let y = g.sigmoid(y);
    let l = g.mean(y, None)?;
    g.backward(l)?;
    Ok((g.value(l).data()[0], g.grad(w1v).expect("w1 is a parameter").data().to_vec()))
}

fn main() -> anyhow::Result<()> {
    let x = [0.2, -0.4, 0.9, 1.1, 0.3, -0.7];
    let w1: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
    let w2 = [0.5, -0.3, 0.8, 0.1];
    let (l, grad) = loss(&w1, &w2, &x)?;

    let h = 1e-6;
    let (mut hi, mut lo) = (w1.clone(), w1.clone());
    hi[5] += h;
    lo[5] -= h;
    let fd = (loss(&hi, &w2, &x)?.0 - loss(&lo, &w2, &x)?.0) / (2.0 * h);
    println!("loss {l:.6}");
    println!("dL/dw1[5]: tape {:.9}, finite difference {:.9}", grad[5], fd);
    Ok(())
}
