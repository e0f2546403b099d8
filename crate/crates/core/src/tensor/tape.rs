//! Recording tape for reverse-mode automatic differentiation.
//!
//! Every operation appends one node holding its output value and whatever
//! forward context the backward rule needs. Nodes are appended in evaluation
//! order, so the node list is topologically sorted by construction and the
//! backward pass is a single reverse sweep.

use super::conv::{self, ConvShape};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        shape: ConvShape,
    },
    ConvTranspose2d {
        input: Var,
        kernel: Var,
        bias: Var,
        shape: ConvShape,
    },
    Relu(Var),
    Sigmoid(Var),
    Affine {
        input: Var,
        weight: Var,
        bias: Var,
    },
    GlobalAvgPool(Var),
    Add(Var, Var),
    Scale(Var, T),
    Mse(Var, Var),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
}

/// Ordered record of a forward computation.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

fn check_finite<T: Scalar>(op: &'static str, values: &[T]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    /// Drops every recorded node so the tape can be reused.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.consumed = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Its `requires_grad` flag decides whether it receives a gradient.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value: Tensor { grad: None, ..tensor },
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_requires_grad(true))
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    /// Gradient accumulated by the last backward pass, if `var` takes part in it.
    pub fn grad(&self, var: Var) -> Option<&[T]> {
        self.nodes[var.0].value.grad()
    }

    fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].value.requires_grad
    }

    fn push(&mut self, op: Op<T>, shape: Vec<usize>, data: Vec<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|&v| self.requires_grad(v));
        self.nodes.push(Node {
            op,
            value: Tensor {
                shape,
                data,
                grad: None,
                requires_grad,
            },
        });
        Var(self.nodes.len() - 1)
    }

    /// 2-D cross-correlation of `[N,C,H,W]` with a `[O,C,kH,kW]` kernel and zero padding.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let shape = conv::conv2d_shape(
            self.value(input).shape(),
            self.value(kernel).shape(),
            self.value(bias).shape(),
            stride,
            padding,
        )?;
        let out = conv::conv2d_forward(
            &shape,
            self.value(input).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
        );
        check_finite("conv2d", &out)?;
        let out_shape = shape.conv_output_shape();
        Ok(self.push(
            Op::Conv2d {
                input,
                kernel,
                bias,
                shape,
            },
            out_shape,
            out,
            &[input, kernel, bias],
        ))
    }

    /// Transposed convolution of `[N,C,H,W]` with a `[C,O,kH,kW]` kernel; the adjoint of [`Tape::conv2d`].
    pub fn conv_transpose2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let shape = conv::conv_transpose2d_shape(
            self.value(input).shape(),
            self.value(kernel).shape(),
            self.value(bias).shape(),
            stride,
            padding,
        )?;
        let out = conv::conv_transpose2d_forward(
            &shape,
            self.value(input).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
        );
        check_finite("conv_transpose2d", &out)?;
        let out_shape = shape.transpose_output_shape();
        Ok(self.push(
            Op::ConvTranspose2d {
                input,
                kernel,
                bias,
                shape,
            },
            out_shape,
            out,
            &[input, kernel, bias],
        ))
    }

    /// Elementwise `max(x, 0)`. The gradient at exactly zero is taken as 0.
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let out: Vec<T> = v.data().iter().map(|&a| a.max(T::zero())).collect();
        check_finite("relu", &out)?;
        let shape = v.shape().to_vec();
        Ok(self.push(Op::Relu(x), shape, out, &[x]))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let out: Vec<T> = v.data().iter().map(|&a| sigmoid(a)).collect();
        check_finite("sigmoid", &out)?;
        let shape = v.shape().to_vec();
        Ok(self.push(Op::Sigmoid(x), shape, out, &[x]))
    }

    /// `x · weightᵀ + bias` for `x: [N,F]`, `weight: [G,F]`, `bias: [G]`.
    pub fn affine(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (xs, ws, bs) = (
            self.value(input).shape(),
            self.value(weight).shape(),
            self.value(bias).shape(),
        );
        let (&[n, f], &[g, wf]) = (xs, ws) else {
            return Err(Error::shape("affine", format!("input {xs:?}, weight {ws:?}")));
        };
        if wf != f || bs != [g] {
            return Err(Error::shape(
                "affine",
                format!("input {xs:?}, weight {ws:?}, bias {bs:?}"),
            ));
        }
        let mut out = vec![T::zero(); n * g];
        super::gemm(
            false,
            true,
            n,
            g,
            f,
            self.value(input).data(),
            self.value(weight).data(),
            T::zero(),
            &mut out,
        );
        for row in out.chunks_mut(g) {
            for (o, &b) in row.iter_mut().zip(self.value(bias).data()) {
                *o += b;
            }
        }
        check_finite("affine", &out)?;
        Ok(self.push(
            Op::Affine { input, weight, bias },
            vec![n, g],
            out,
            &[input, weight, bias],
        ))
    }

    /// Per-channel spatial mean, `[N,C,H,W] -> [N,C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let &[n, c, h, w] = v.shape() else {
            return Err(Error::shape(
                "global_avg_pool",
                format!("expected rank 4, got {:?}", v.shape()),
            ));
        };
        let inv = T::from_f64(1.0 / (h * w) as f64);
        let out: Vec<T> = v
            .data()
            .chunks(h * w)
            .map(|plane| plane.iter().copied().sum::<T>() * inv)
            .collect();
        check_finite("global_avg_pool", &out)?;
        Ok(self.push(Op::GlobalAvgPool(x), vec![n, c], out, &[x]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape("add", format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let out: Vec<T> = va.data().iter().zip(vb.data()).map(|(&p, &q)| p + q).collect();
        check_finite("add", &out)?;
        let shape = va.shape().to_vec();
        Ok(self.push(Op::Add(a, b), shape, out, &[a, b]))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var> {
        let v = self.value(x);
        let out: Vec<T> = v.data().iter().map(|&a| a * factor).collect();
        check_finite("scale", &out)?;
        let shape = v.shape().to_vec();
        Ok(self.push(Op::Scale(x, factor), shape, out, &[x]))
    }

    /// Mean over all elements of `(a - b)²`.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape("mse", format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let n = T::from_f64(va.numel() as f64);
        let sum: T = va.data().iter().zip(vb.data()).map(|(&p, &q)| (p - q) * (p - q)).sum();
        let out = vec![sum / n];
        check_finite("mse", &out)?;
        Ok(self.push(Op::Mse(a, b), Vec::new(), out, &[a, b]))
    }

    /// Batch mean of `-log softmax(logits)[label]`, evaluated through log-sum-exp.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let v = self.value(logits);
        let &[n, k] = v.shape() else {
            return Err(Error::shape("softmax_cross_entropy", format!("logits {:?}", v.shape())));
        };
        if labels.len() != n {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("{} labels for {n} rows", labels.len()),
            ));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::LabelOutOfRange { label, classes: k });
        }
        let mut probs = vec![T::zero(); n * k];
        let mut total = T::zero();
        for ((row, p), &label) in v.data().chunks(k).zip(probs.chunks_mut(k)).zip(labels) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for (pi, &l) in p.iter_mut().zip(row) {
                *pi = (l - max).exp();
                sum += *pi;
            }
            p.iter_mut().for_each(|pi| *pi = *pi / sum);
            total += max + sum.ln() - row[label];
        }
        let out = vec![total / T::from_f64(n as f64)];
        check_finite("softmax_cross_entropy", &out)?;
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            Vec::new(),
            out,
            &[logits],
        ))
    }

    /// Propagates `d loss / d node` to every node that requires a gradient.
    ///
    /// Gradients accumulate across all uses of a value. A tape can be swept
    /// once; call [`Tape::reset`] before recording the next computation.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.numel() != 1 {
            return Err(Error::NotScalar(loss_value.shape().to_vec()));
        }
        self.consumed = true;
        for node in &mut self.nodes {
            node.value.grad = None;
        }
        if !self.requires_grad(loss) {
            return Ok(());
        }
        self.nodes[loss.0].value.grad = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(grad) = self.nodes[i].value.take_grad() else {
                continue;
            };
            let contributions = self.node_backward(i, &grad);
            self.nodes[i].value.grad = Some(grad);
            for (var, g) in contributions {
                let target = &mut self.nodes[var.0].value;
                match target.grad.as_mut() {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                    None => target.grad = Some(g),
                }
            }
        }
        for node in &self.nodes {
            if let Some(g) = node.value.grad() {
                check_finite("backward", g)?;
            }
        }
        Ok(())
    }

    fn node_backward(&self, i: usize, grad: &[T]) -> Vec<(Var, Vec<T>)> {
        let node = &self.nodes[i];
        let wants = |v: Var| self.requires_grad(v);
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernel,
                bias,
                shape,
            }
            | Op::ConvTranspose2d {
                input,
                kernel,
                bias,
                shape,
            } => {
                let want = [wants(*input), wants(*kernel), wants(*bias)];
                let backward = match node.op {
                    Op::Conv2d { .. } => conv::conv2d_backward,
                    _ => conv::conv_transpose2d_backward,
                };
                let grads = backward(shape, self.value(*input).data(), self.value(*kernel).data(), grad, want);
                for (var, g) in [(*input, grads.input), (*kernel, grads.kernel), (*bias, grads.bias)] {
                    if let Some(g) = g {
                        out.push((var, g));
                    }
                }
            }
            Op::Relu(x) => {
                let g = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(grad)
                    .map(|(&a, &d)| if a > T::zero() { d } else { T::zero() })
                    .collect();
                out.push((*x, g));
            }
            Op::Sigmoid(x) => {
                let g = node
                    .value
                    .data()
                    .iter()
                    .zip(grad)
                    .map(|(&s, &d)| d * s * (T::one() - s))
                    .collect();
                out.push((*x, g));
            }
            Op::Affine { input, weight, bias } => {
                let &[n, f] = self.value(*input).shape() else {
                    unreachable!()
                };
                let g_out = node.value.shape()[1];
                if wants(*input) {
                    let mut dx = vec![T::zero(); n * f];
                    super::gemm(
                        false,
                        false,
                        n,
                        f,
                        g_out,
                        grad,
                        self.value(*weight).data(),
                        T::zero(),
                        &mut dx,
                    );
                    out.push((*input, dx));
                }
                if wants(*weight) {
                    let mut dw = vec![T::zero(); g_out * f];
                    super::gemm(
                        true,
                        false,
                        g_out,
                        f,
                        n,
                        grad,
                        self.value(*input).data(),
                        T::zero(),
                        &mut dw,
                    );
                    out.push((*weight, dw));
                }
                if wants(*bias) {
                    let mut db = vec![T::zero(); g_out];
                    for row in grad.chunks(g_out) {
                        db.iter_mut().zip(row).for_each(|(a, &b)| *a += b);
                    }
                    out.push((*bias, db));
                }
            }
            Op::GlobalAvgPool(x) => {
                let s = self.value(*x).shape();
                let plane = s[2] * s[3];
                let inv = T::from_f64(1.0 / plane as f64);
                let g = grad.iter().flat_map(|&d| std::iter::repeat_n(d * inv, plane)).collect();
                out.push((*x, g));
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if wants(v) {
                        out.push((v, grad.to_vec()));
                    }
                }
            }
            Op::Scale(x, factor) => {
                out.push((*x, grad.iter().map(|&d| d * *factor).collect()));
            }
            Op::Mse(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let coef = grad[0] * T::from_f64(2.0 / va.len() as f64);
                let da: Vec<T> = va.iter().zip(vb).map(|(&p, &q)| coef * (p - q)).collect();
                if wants(*b) {
                    out.push((*b, da.iter().map(|&d| -d).collect()));
                }
                if wants(*a) {
                    out.push((*a, da));
                }
            }
            Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                let k = self.value(*logits).shape()[1];
                let coef = grad[0] / T::from_f64(labels.len() as f64);
                let mut g: Vec<T> = probs.iter().map(|&p| p * coef).collect();
                for (row, &label) in g.chunks_mut(k).zip(labels) {
                    row[label] -= coef;
                }
                out.push((*logits, g));
            }
        }
        out
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn relu_values_and_zero_convention() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[3], &[-1.0, 0.0, 2.0]));
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
        let zero = tape.constant(Tensor::zeros([3]));
        let loss = tape.mse(y, zero).unwrap();
        tape.backward(loss).unwrap();
        // d/dx of mean(relu(x)^2) = 2 relu(x)/3 * 1{x>0}
        assert_eq!(tape.grad(x).unwrap(), &[0.0, 0.0, 4.0 / 3.0]);
    }

    #[test]
    fn relu_all_negative_has_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[4], &[-1.0, -0.5, -3.0, -2.0]));
        let y = tape.relu(x).unwrap();
        let target = tape.constant(t(&[4], &[1.0; 4]));
        let loss = tape.mse(y, target).unwrap();
        tape.backward(loss).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
        assert!(tape.grad(x).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sigmoid_values() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[5], &[0.0, 1.5, -2.0, 30.0, -30.0]));
        let nx = tape.scale(x, -1.0).unwrap();
        let s = tape.sigmoid(x).unwrap();
        let sn = tape.sigmoid(nx).unwrap();
        assert_eq!(tape.value(s).data()[0], 0.5);
        for (&a, &b) in tape.value(s).data().iter().zip(tape.value(sn).data()) {
            assert!((a - (1.0 - b)).abs() < 1e-12);
            assert!(a > 0.0 && a < 1.0);
        }
    }

    #[test]
    fn affine_arithmetic() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1, 2], &[1.0, 2.0]));
        let w = tape.leaf(t(&[1, 2], &[3.0, 4.0]));
        let b = tape.leaf(t(&[1], &[5.0]));
        let y = tape.affine(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[16.0]);

        let eye = tape.leaf(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let zb = tape.leaf(Tensor::zeros([2]));
        let y = tape.affine(x, eye, zb).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0]);

        let bad = tape.leaf(Tensor::zeros([2, 3]));
        assert!(matches!(tape.affine(x, bad, zb), Err(Error::Shape { .. })));
    }

    #[test]
    fn global_avg_pool_values() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1, 2, 2, 2], &[1.0, 2.0, 3.0, 4.0, 7.0, 7.0, 7.0, 7.0]));
        let y = tape.global_avg_pool(x).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 2]);
        assert_eq!(tape.value(y).data(), &[2.5, 7.0]);
    }

    #[test]
    fn cross_entropy_uniform_and_shift() {
        let mut tape = Tape::new();
        let logits = tape.leaf(t(&[1, 4], &[0.3; 4]));
        let l = tape.softmax_cross_entropy(logits, &[2]).unwrap();
        assert!((tape.value(l).data()[0] - 4f64.ln()).abs() < 1e-12);

        let a = tape.leaf(t(&[2, 3], &[1.0, -2.0, 0.5, 3.0, 0.0, 0.1]));
        let b = tape.leaf(t(&[2, 3], &[101.0, 98.0, 100.5, -997.0, -1000.0, -999.9]));
        let la = tape.softmax_cross_entropy(a, &[0, 2]).unwrap();
        let lb = tape.softmax_cross_entropy(b, &[0, 2]).unwrap();
        let (va, vb) = (tape.value(la).data()[0], tape.value(lb).data()[0]);
        assert!((va - vb).abs() < 1e-10);
        assert!(va >= 0.0);

        assert!(matches!(
            tape.softmax_cross_entropy(a, &[0, 3]),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn mse_values() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[2, 2], &[0.1, 0.2, 0.3, 0.4]));
        let b = tape.leaf(t(&[2, 2], &[0.2, 0.3, 0.4, 0.5]));
        let same = tape.mse(a, a).unwrap();
        assert_eq!(tape.value(same).data()[0], 0.0);
        let d = tape.mse(a, b).unwrap();
        assert!((tape.value(d).data()[0] - 0.01).abs() < 1e-15);
        let c = tape.leaf(Tensor::zeros([4]));
        assert!(tape.mse(a, c).is_err());
    }

    #[test]
    fn backward_scalar_mse() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[1], &[3.0]));
        let zero = tape.constant(t(&[1], &[0.0]));
        let loss = tape.mse(x, zero).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[6.0]);
        assert!(tape.grad(zero).is_none());
    }

    #[test]
    fn backward_accumulates_reuse() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[1], &[0.7]));
        let y = tape.add(x, x).unwrap();
        let target = tape.constant(t(&[1], &[0.0]));
        let loss = tape.mse(y, target).unwrap();
        tape.backward(loss).unwrap();
        // d/dx (2x)^2 = 8x
        assert!((tape.grad(x).unwrap()[0] - 8.0 * 0.7).abs() < 1e-12);
        assert_eq!(tape.grad(y).unwrap(), &[2.0 * 1.4]);
    }

    #[test]
    fn backward_of_sum_gives_two() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[1], &[5.0]));
        let y = tape.add(x, x).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0]);
    }

    #[test]
    fn backward_errors() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::NotScalar(_))));
        let zero = tape.constant(Tensor::zeros([2]));
        let loss = tape.mse(x, zero).unwrap();
        tape.backward(loss).unwrap();
        assert!(matches!(tape.backward(loss), Err(Error::TapeConsumed)));
        tape.reset();
        assert!(tape.is_empty());
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1.0, f64::MAX]));
        assert!(matches!(tape.add(x, x), Err(Error::NonFinite("add"))));
    }

    #[test]
    fn conv_identity_kernel() {
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..18).map(|i| i as f64 * 0.25 - 1.0).collect();
        let x = tape.leaf(t(&[2, 1, 3, 3], &data));
        let k = tape.leaf(t(&[1, 1, 1, 1], &[1.0]));
        let b = tape.leaf(Tensor::zeros([1]));
        let y = tape.conv2d(x, k, b, 1, 0).unwrap();
        assert_eq!(tape.value(y).data(), &data[..]);
        let y = tape.conv_transpose2d(x, k, b, 1, 0).unwrap();
        assert_eq!(tape.value(y).data(), &data[..]);
    }

    #[test]
    fn conv_constant_field() {
        let a = 0.3;
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full([1, 1, 5, 6], a));
        let k = tape.leaf(Tensor::full([1, 1, 3, 3], 1.0));
        let b = tape.leaf(Tensor::zeros([1]));
        let y = tape.conv2d(x, k, b, 1, 1).unwrap();
        let out = tape.value(y);
        assert_eq!(out.shape(), &[1, 1, 5, 6]);
        for r in 0..5 {
            for c in 0..6 {
                let edge_r = r == 0 || r == 4;
                let edge_c = c == 0 || c == 5;
                let expected: f64 = match (edge_r, edge_c) {
                    (true, true) => 4.0 * a,
                    (true, false) | (false, true) => 6.0 * a,
                    (false, false) => 9.0 * a,
                };
                assert!((out.data()[r * 6 + c] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_shape_errors() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::<f64>::zeros([1, 2, 4, 4]));
        let k = tape.leaf(Tensor::zeros([1, 3, 3, 3]));
        let b = tape.leaf(Tensor::zeros([1]));
        assert!(matches!(tape.conv2d(x, k, b, 1, 1), Err(Error::Shape { .. })));
        let k = tape.leaf(Tensor::zeros([1, 2, 3, 3]));
        assert!(matches!(tape.conv2d(x, k, b, 0, 1), Err(Error::InvalidArgument(_))));
        let big = tape.leaf(Tensor::zeros([1, 2, 7, 7]));
        assert!(matches!(tape.conv2d(x, big, b, 1, 1), Err(Error::Shape { .. })));
    }

    #[test]
    fn conv_transpose_shape_formula() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::<f64>::zeros([1, 1, 4, 4]));
        let k = tape.leaf(Tensor::zeros([1, 1, 2, 2]));
        let b = tape.leaf(Tensor::zeros([1]));
        let y = tape.conv_transpose2d(x, k, b, 2, 0).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 1, 8, 8]);
    }

    #[test]
    fn frozen_leaves_get_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::full([1, 1, 4, 4], 0.5));
        let k = tape.constant(Tensor::full([2, 1, 3, 3], 0.1));
        let b = tape.constant(Tensor::zeros([2]));
        let y = tape.conv2d(x, k, b, 1, 1).unwrap();
        let p = tape.global_avg_pool(y).unwrap();
        let target = tape.constant(Tensor::zeros([1, 2]));
        let loss = tape.mse(p, target).unwrap();
        tape.backward(loss).unwrap();
        assert!(tape.grad(x).is_some());
        assert!(tape.grad(k).is_none());
        assert!(tape.grad(b).is_none());
    }
}
