use super::tensor::{Scalar, Tensor};
use super::AutodiffError;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    LhsScalar,
    RhsScalar,
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Bmm(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    AddScalar(Var),
    MulScalar(Var, T),
    Neg(Var),
    Exp(Var),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Sum(Var, Option<usize>),
    Mean(Var, Option<usize>),
    Reshape(Var),
    Concat(Vec<Var>, usize),
    Narrow(Var, usize, usize),
    CumsumExclusive(Var),
    SoftmaxLast(Var),
    MulRows(Var, Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Deliberate backward-rule corruption, used as a negative control by the
/// gradient checker.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradFault {
    /// Scales the sigmoid derivative by the given factor.
    SigmoidScale(f64),
}

/// Tape of operations recorded in evaluation order.
///
/// Values are computed eagerly as ops are recorded. [`Graph::backward`]
/// walks the tape in reverse and accumulates gradients into every node that
/// requires one; repeated calls add to the stored gradients.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    fault: Option<GradFault>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            fault: None,
        }
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: GradFault) {
        self.fault = Some(fault);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated by previous [`Graph::backward`] calls.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        self.grads[v.0]
            .as_ref()
            .map(|g| Tensor::from_parts(self.nodes[v.0].value.shape().to_vec(), g.clone()))
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    fn mat_dims(&self, v: Var, op: &'static str) -> Result<(usize, usize), AutodiffError> {
        match *self.shape(v) {
            [m, n] => Ok((m, n)),
            ref s => Err(AutodiffError::Rank {
                op,
                expected: 2,
                shape: s.to_vec(),
            }),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (m, k) = self.mat_dims(a, "matmul")?;
        let (k2, n) = self.mat_dims(b, "matmul")?;
        if k != k2 {
            return Err(self.mismatch("matmul", a, b));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            T::zero(),
            &mut out,
        );
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), rg))
    }

    /// Batched matmul `[B,m,k] × [B,k,n] → [B,m,n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 {
            return Err(AutodiffError::Rank {
                op: "bmm",
                expected: 3,
                shape: if sa.len() != 3 { sa } else { sb },
            });
        }
        if sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(self.mismatch("bmm", a, b));
        }
        let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![T::zero(); bs * m * n];
        {
            let (av, bv) = (self.value(a).data(), self.value(b).data());
            for i in 0..bs {
                T::gemm(
                    m,
                    k,
                    n,
                    &av[i * m * k..(i + 1) * m * k],
                    false,
                    &bv[i * k * n..(i + 1) * k * n],
                    false,
                    T::zero(),
                    &mut out[i * m * n..(i + 1) * m * n],
                );
            }
        }
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::from_parts(vec![bs, m, n], out), Op::Bmm(a, b), rg))
    }

    /// Adds a length-`n` row vector to every row of an `[m, n]` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, AutodiffError> {
        let (m, n) = self.mat_dims(a, "add_row")?;
        if self.value(row).len() != n {
            return Err(self.mismatch("add_row", a, row));
        }
        let mut out = self.value(a).data().to_vec();
        let r = self.value(row).data();
        for chunk in out.chunks_exact_mut(n) {
            for (o, &b) in chunk.iter_mut().zip(r) {
                *o = *o + b;
            }
        }
        let rg = self.any_grad(&[a, row]);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::AddRow(a, row), rg))
    }

    /// `x · W + b`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var, AutodiffError> {
        let xw = self.matmul(x, weight)?;
        self.add_row(xw, bias)
    }

    fn broadcast(&self, op: &'static str, a: Var, b: Var) -> Result<Broadcast, AutodiffError> {
        let (sa, sb) = (self.value(a), self.value(b));
        if sa.shape() == sb.shape() {
            Ok(Broadcast::Same)
        } else if sa.len() == 1 {
            Ok(Broadcast::LhsScalar)
        } else if sb.len() == 1 {
            Ok(Broadcast::RhsScalar)
        } else {
            Err(self.mismatch(op, a, b))
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: fn(Var, Var, Broadcast) -> Op<T>,
    ) -> Result<Var, AutodiffError> {
        let bc = self.broadcast(name, a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let (shape, data) = match bc {
            Broadcast::Same => (
                va.shape().to_vec(),
                va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect(),
            ),
            Broadcast::LhsScalar => {
                let x = va.data()[0];
                (vb.shape().to_vec(), vb.data().iter().map(|&y| f(x, y)).collect())
            }
            Broadcast::RhsScalar => {
                let y = vb.data()[0];
                (va.shape().to_vec(), va.data().iter().map(|&x| f(x, y)).collect())
            }
        };
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::from_parts(shape, data), op(a, b, bc), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let value = self.value(a).map(f);
        let rg = self.requires_grad(a);
        self.push(value, op, rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        self.unary(a, |x| x + c, Op::AddScalar(a))
    }

    pub fn mul_scalar(&mut self, a: Var, c: T) -> Var {
        self.unary(a, |x| x * c, Op::MulScalar(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, |x| -x, Op::Neg(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.exp(), Op::Exp(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > T::zero() { x } else { T::zero() }, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let n = self.neg(a);
        self.add_scalar(n, T::one())
    }

    fn check_axis(&self, op: &'static str, a: Var, axis: usize) -> Result<(), AutodiffError> {
        if axis >= self.shape(a).len() {
            return Err(AutodiffError::InvalidAxis {
                op,
                axis,
                shape: self.shape(a).to_vec(),
            });
        }
        Ok(())
    }

    fn reduce(&mut self, a: Var, axis: Option<usize>, mean: bool) -> Result<Var, AutodiffError> {
        let name = if mean { "mean" } else { "sum" };
        let (shape, data) = match axis {
            None => {
                let v = self.value(a);
                let mut s: T = v.data().iter().copied().sum();
                if mean {
                    s = s / T::from_usize(v.len().max(1)).unwrap_or_else(T::one);
                }
                (Vec::new(), vec![s])
            }
            Some(ax) => {
                self.check_axis(name, a, ax)?;
                let v = self.value(a);
                let (outer, n, inner) = axis_split(v.shape(), ax);
                let mut out = vec![T::zero(); outer * inner];
                let d = v.data();
                for o in 0..outer {
                    for j in 0..n {
                        let base = (o * n + j) * inner;
                        for i in 0..inner {
                            out[o * inner + i] = out[o * inner + i] + d[base + i];
                        }
                    }
                }
                if mean {
                    let c = T::from_usize(n.max(1)).unwrap_or_else(T::one);
                    out.iter_mut().for_each(|x| *x = *x / c);
                }
                let mut shape = v.shape().to_vec();
                shape.remove(ax);
                (shape, out)
            }
        };
        let rg = self.requires_grad(a);
        let op = if mean { Op::Mean(a, axis) } else { Op::Sum(a, axis) };
        Ok(self.push(Tensor::from_parts(shape, data), op, rg))
    }

    /// Sum over one axis, or over everything when `axis` is `None`.
    pub fn sum(&mut self, a: Var, axis: Option<usize>) -> Result<Var, AutodiffError> {
        self.reduce(a, axis, false)
    }

    pub fn mean(&mut self, a: Var, axis: Option<usize>) -> Result<Var, AutodiffError> {
        self.reduce(a, axis, true)
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var, AutodiffError> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.value(a).len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(a).to_vec(),
                rhs: shape,
            });
        }
        let data = self.value(a).data().to_vec();
        let rg = self.requires_grad(a);
        Ok(self.push(Tensor::from_parts(shape, data), Op::Reshape(a), rg))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, AutodiffError> {
        let first = *parts.first().ok_or(AutodiffError::Empty { op: "concat" })?;
        self.check_axis("concat", first, axis)?;
        let base = self.shape(first).to_vec();
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(self.mismatch("concat", first, p));
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_split(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let v = self.value(p);
                let span = v.shape()[axis] * inner;
                out.extend_from_slice(&v.data()[o * span..(o + 1) * span]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = self.any_grad(parts);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Concat(parts.to_vec(), axis), rg))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var, AutodiffError> {
        self.check_axis("narrow", a, axis)?;
        let v = self.value(a);
        let (outer, n, inner) = axis_split(v.shape(), axis);
        if start + len > n {
            return Err(AutodiffError::OutOfRange {
                op: "narrow",
                start,
                len,
                extent: n,
            });
        }
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let off = (o * n + start) * inner;
            out.extend_from_slice(&v.data()[off..off + len * inner]);
        }
        let mut shape = v.shape().to_vec();
        shape[axis] = len;
        let rg = self.requires_grad(a);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Narrow(a, axis, start), rg))
    }

    /// `y_j = Σ_{i<j} x_i` along the last axis.
    pub fn cumsum_exclusive(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let v = self.value(a);
        let n = *v.shape().last().ok_or(AutodiffError::InvalidAxis {
            op: "cumsum_exclusive",
            axis: 0,
            shape: Vec::new(),
        })?;
        let mut out = vec![T::zero(); v.len()];
        if n > 0 {
            for (src, dst) in v.data().chunks_exact(n).zip(out.chunks_exact_mut(n)) {
                let mut acc = T::zero();
                for (s, d) in src.iter().zip(dst.iter_mut()) {
                    *d = acc;
                    acc = acc + *s;
                }
            }
        }
        let shape = v.shape().to_vec();
        let rg = self.requires_grad(a);
        Ok(self.push(Tensor::from_parts(shape, out), Op::CumsumExclusive(a), rg))
    }

    /// Numerically stable softmax along the last axis.
    pub fn softmax_last(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let v = self.value(a);
        let n = *v.shape().last().ok_or(AutodiffError::InvalidAxis {
            op: "softmax_last",
            axis: 0,
            shape: Vec::new(),
        })?;
        let mut out = vec![T::zero(); v.len()];
        if n > 0 {
            for (src, dst) in v.data().chunks_exact(n).zip(out.chunks_exact_mut(n)) {
                let m = src.iter().copied().fold(T::neg_infinity(), T::max);
                let mut z = T::zero();
                for (s, d) in src.iter().zip(dst.iter_mut()) {
                    *d = (*s - m).exp();
                    z = z + *d;
                }
                dst.iter_mut().for_each(|d| *d = *d / z);
            }
        }
        let shape = v.shape().to_vec();
        let rg = self.requires_grad(a);
        Ok(self.push(Tensor::from_parts(shape, out), Op::SoftmaxLast(a), rg))
    }

    /// Scales row `r` of `a` (leading axis) by `scale[r]`.
    pub fn mul_rows(&mut self, a: Var, scale: Var) -> Result<Var, AutodiffError> {
        let rows = self.shape(a).first().copied().unwrap_or(0);
        if self.value(scale).len() != rows || rows == 0 {
            return Err(self.mismatch("mul_rows", a, scale));
        }
        let v = self.value(a);
        let width = v.len() / rows;
        let s = self.value(scale).data();
        let mut out = v.data().to_vec();
        for (chunk, &f) in out.chunks_exact_mut(width.max(1)).zip(s) {
            chunk.iter_mut().for_each(|x| *x = *x * f);
        }
        let shape = v.shape().to_vec();
        let rg = self.any_grad(&[a, scale]);
        Ok(self.push(Tensor::from_parts(shape, out), Op::MulRows(a, scale), rg))
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> AutodiffError {
        AutodiffError::ShapeMismatch {
            op,
            lhs: self.shape(a).to_vec(),
            rhs: self.shape(b).to_vec(),
        }
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutodiffError> {
        if self.value(loss).len() != 1 {
            return Err(AutodiffError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let mut pass: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        pass[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = pass[i].take() else { continue };
            self.backprop_node(i, &g, &mut pass);
            match &mut self.grads[i] {
                slot @ None => *slot = Some(g),
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a = *a + *b),
            }
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[T], pass: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        // Returns the accumulation buffer of an input, or None when it needs
        // no gradient.
        macro_rules! slot {
            ($v:expr) => {{
                let v: Var = $v;
                if self.nodes[v.0].requires_grad {
                    Some(
                        pass[v.0]
                            .get_or_insert_with(|| vec![T::zero(); self.nodes[v.0].value.len()]),
                    )
                } else {
                    None
                }
            }};
        }
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if let Some(ga) = slot!(*a) {
                    T::gemm(m, n, k, g, false, self.value(*b).data(), true, T::one(), ga);
                }
                if let Some(gb) = slot!(*b) {
                    T::gemm(k, m, n, self.value(*a).data(), true, g, false, T::one(), gb);
                }
            }
            Op::Bmm(a, b) => {
                let sa = self.shape(*a);
                let (bs, m, k) = (sa[0], sa[1], sa[2]);
                let n = self.shape(*b)[2];
                if let Some(ga) = slot!(*a) {
                    let bv = self.value(*b).data();
                    for j in 0..bs {
                        T::gemm(
                            m,
                            n,
                            k,
                            &g[j * m * n..(j + 1) * m * n],
                            false,
                            &bv[j * k * n..(j + 1) * k * n],
                            true,
                            T::one(),
                            &mut ga[j * m * k..(j + 1) * m * k],
                        );
                    }
                }
                if let Some(gb) = slot!(*b) {
                    let av = self.value(*a).data();
                    for j in 0..bs {
                        T::gemm(
                            k,
                            m,
                            n,
                            &av[j * m * k..(j + 1) * m * k],
                            true,
                            &g[j * m * n..(j + 1) * m * n],
                            false,
                            T::one(),
                            &mut gb[j * k * n..(j + 1) * k * n],
                        );
                    }
                }
            }
            Op::AddRow(a, row) => {
                let n = self.value(*row).len();
                if let Some(ga) = slot!(*a) {
                    add_into(ga, g);
                }
                if let Some(gr) = slot!(*row) {
                    for chunk in g.chunks_exact(n) {
                        add_into(gr, chunk);
                    }
                }
            }
            Op::Add(a, b, bc) | Op::Sub(a, b, bc) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -T::one() } else { T::one() };
                if let Some(ga) = slot!(*a) {
                    reduce_into(ga, g, *bc == Broadcast::LhsScalar, |x| x);
                }
                if let Some(gb) = slot!(*b) {
                    reduce_into(gb, g, *bc == Broadcast::RhsScalar, |x| x * sign);
                }
            }
            Op::Mul(a, b, bc) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let at = |d: &[T], j: usize| if d.len() == 1 { d[0] } else { d[j] };
                if let Some(ga) = slot!(*a) {
                    if *bc == Broadcast::LhsScalar {
                        ga[0] = ga[0] + g.iter().zip(vb).map(|(&x, &y)| x * y).sum();
                    } else {
                        for (j, (o, &x)) in ga.iter_mut().zip(g).enumerate() {
                            *o = *o + x * at(vb, j);
                        }
                    }
                }
                if let Some(gb) = slot!(*b) {
                    if *bc == Broadcast::RhsScalar {
                        gb[0] = gb[0] + g.iter().zip(va).map(|(&x, &y)| x * y).sum();
                    } else {
                        for (j, (o, &x)) in gb.iter_mut().zip(g).enumerate() {
                            *o = *o + x * at(va, j);
                        }
                    }
                }
            }
            Op::AddScalar(a) | Op::Reshape(a) => {
                if let Some(ga) = slot!(*a) {
                    add_into(ga, g);
                }
            }
            Op::MulScalar(a, c) => {
                if let Some(ga) = slot!(*a) {
                    ga.iter_mut().zip(g).for_each(|(o, &x)| *o = *o + x * *c);
                }
            }
            Op::Neg(a) => {
                if let Some(ga) = slot!(*a) {
                    ga.iter_mut().zip(g).for_each(|(o, &x)| *o = *o - x);
                }
            }
            Op::Exp(a) => {
                if let Some(ga) = slot!(*a) {
                    for ((o, &x), &e) in ga.iter_mut().zip(g).zip(y) {
                        *o = *o + x * e;
                    }
                }
            }
            Op::Relu(a) => {
                if let Some(ga) = slot!(*a) {
                    // Subgradient 0 at the kink.
                    for ((o, &x), &out) in ga.iter_mut().zip(g).zip(y) {
                        if out > T::zero() {
                            *o = *o + x;
                        }
                    }
                }
            }
            Op::Sigmoid(a) => {
                let scale = match self.fault {
                    Some(GradFault::SigmoidScale(s)) => T::from_f64_lossy(s),
                    None => T::one(),
                };
                if let Some(ga) = slot!(*a) {
                    for ((o, &x), &s) in ga.iter_mut().zip(g).zip(y) {
                        *o = *o + x * s * (T::one() - s) * scale;
                    }
                }
            }
            Op::Softplus(a) => {
                let input = self.value(*a).data();
                if let Some(ga) = slot!(*a) {
                    for ((o, &x), &u) in ga.iter_mut().zip(g).zip(input) {
                        *o = *o + x * sigmoid(u);
                    }
                }
            }
            Op::Sum(a, axis) | Op::Mean(a, axis) => {
                let shape = self.shape(*a).to_vec();
                let mean = matches!(node.op, Op::Mean(..));
                if let Some(ga) = slot!(*a) {
                    match axis {
                        None => {
                            let mut v = g[0];
                            if mean {
                                v = v / T::from_usize(ga.len().max(1)).unwrap_or_else(T::one);
                            }
                            ga.iter_mut().for_each(|o| *o = *o + v);
                        }
                        Some(ax) => {
                            let (outer, n, inner) = axis_split(&shape, *ax);
                            let c = if mean {
                                T::one() / T::from_usize(n.max(1)).unwrap_or_else(T::one)
                            } else {
                                T::one()
                            };
                            for o in 0..outer {
                                for j in 0..n {
                                    let base = (o * n + j) * inner;
                                    for k in 0..inner {
                                        ga[base + k] = ga[base + k] + g[o * inner + k] * c;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Op::Concat(parts, axis) => {
                let shape = node.value.shape();
                let (outer, total, inner) = axis_split(shape, *axis);
                let mut offset = 0;
                for &p in parts {
                    let span = self.shape(p)[*axis] * inner;
                    if let Some(gp) = slot!(p) {
                        for o in 0..outer {
                            let src = &g[o * total * inner + offset..o * total * inner + offset + span];
                            add_into(&mut gp[o * span..(o + 1) * span], src);
                        }
                    }
                    offset += span;
                }
            }
            Op::Narrow(a, axis, start) => {
                let full = self.shape(*a).to_vec();
                let (outer, n, inner) = axis_split(&full, *axis);
                let len = node.value.shape()[*axis];
                if let Some(ga) = slot!(*a) {
                    for o in 0..outer {
                        let off = (o * n + start) * inner;
                        add_into(
                            &mut ga[off..off + len * inner],
                            &g[o * len * inner..(o + 1) * len * inner],
                        );
                    }
                }
            }
            Op::CumsumExclusive(a) => {
                let n = *node.value.shape().last().unwrap_or(&0);
                if let Some(ga) = slot!(*a) {
                    if n > 0 {
                        for (src, dst) in g.chunks_exact(n).zip(ga.chunks_exact_mut(n)) {
                            // dx_i = Σ_{j>i} g_j
                            let mut acc = T::zero();
                            for j in (0..n).rev() {
                                dst[j] = dst[j] + acc;
                                acc = acc + src[j];
                            }
                        }
                    }
                }
            }
            Op::SoftmaxLast(a) => {
                let n = *node.value.shape().last().unwrap_or(&0);
                if let Some(ga) = slot!(*a) {
                    if n > 0 {
                        for ((gs, ys), dst) in g.chunks_exact(n).zip(y.chunks_exact(n)).zip(ga.chunks_exact_mut(n)) {
                            let dot: T = gs.iter().zip(ys).map(|(&u, &v)| u * v).sum();
                            for ((d, &u), &v) in dst.iter_mut().zip(gs).zip(ys) {
                                *d = *d + v * (u - dot);
                            }
                        }
                    }
                }
            }
            Op::MulRows(a, s) => {
                let va = self.value(*a).data();
                let vs = self.value(*s).data();
                let width = va.len() / vs.len();
                if let Some(ga) = slot!(*a) {
                    for ((dst, gs), &f) in ga.chunks_exact_mut(width).zip(g.chunks_exact(width)).zip(vs) {
                        dst.iter_mut().zip(gs).for_each(|(d, &u)| *d = *d + u * f);
                    }
                }
                if let Some(gsc) = slot!(*s) {
                    for ((d, gs), xs) in gsc.iter_mut().zip(g.chunks_exact(width)).zip(va.chunks_exact(width)) {
                        *d = *d + gs.iter().zip(xs).map(|(&u, &x)| u * x).sum();
                    }
                }
            }
        }
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s);
}

fn reduce_into<T: Scalar>(dst: &mut [T], g: &[T], to_scalar: bool, f: impl Fn(T) -> T) {
    if to_scalar {
        dst[0] = dst[0] + f(g.iter().copied().sum());
    } else {
        dst.iter_mut().zip(g).for_each(|(d, &x)| *d = *d + f(x));
    }
}
