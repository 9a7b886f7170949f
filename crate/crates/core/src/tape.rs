//! Reverse-mode differentiation tape over the primitive kernels.
//!
//! Nodes are appended in evaluation order, so the tape is already
//! topologically sorted; backward walks it once in reverse. Values are
//! immutable tensors; gradients accumulate per node.

use crate::metrics::{sd_sdr_parts, SdSdrParts, SDR_DENOM_FLOOR};
use crate::ops::{self, Activation, LayerNormCtx, LstmCtx};
use crate::scalar::Scalar;
use crate::segment::{merge_adjoint, merge_with_meta, segment_adjoint, segment_with_meta, SegMeta};
use crate::tensor::{invert_perm, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<S: Scalar> {
    Leaf,
    Conv1d { x: usize, k: usize, stride: usize },
    ConvT1d { y: usize, k: usize, stride: usize },
    Lstm { x: usize, w_ih: usize, w_hh: usize, b: usize, ctx: Box<LstmCtx<S>> },
    Linear { x: usize, w: usize, b: usize },
    LayerNorm { x: usize, gain: usize, bias: usize, ctx: LayerNormCtx<S> },
    Pointwise { x: usize, act: Activation },
    PRelu { x: usize, a: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { x: usize, c: S },
    Reshape { x: usize },
    Permute { x: usize, perm: Vec<usize> },
    Narrow { x: usize, axis: usize, start: usize },
    ConcatFeat { a: usize, b: usize },
    Segment { x: usize, meta: SegMeta },
    Merge { x: usize, meta: SegMeta },
    Sum { x: usize },
    SdSdr { est: usize, reference: Tensor<S>, parts: SdSdrParts },
}

struct Node<S: Scalar> {
    value: Tensor<S>,
    requires_grad: bool,
    op: Op<S>,
}

pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new() }
    }

    fn push(&mut self, value: Tensor<S>, requires_grad: bool, op: Op<S>) -> Var {
        self.nodes.push(Node { value, requires_grad, op });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable input; participates in backward.
    pub fn leaf(&mut self, value: Tensor<S>) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Non-trainable input (data, references).
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated by the last backward pass (zeros if none
    /// reached the node).
    pub fn grad(&self, v: Var) -> Tensor<S> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(self.nodes[v.0].value.shape().to_vec()))
    }

    pub fn conv1d(&mut self, x: Var, kernel: Var, stride: usize, pad_end: bool) -> Var {
        let y = ops::conv1d(self.value(x), self.value(kernel), stride, pad_end)
            .expect("conv1d shapes");
        let req = self.requires(x) || self.requires(kernel);
        self.push(y, req, Op::Conv1d { x: x.0, k: kernel.0, stride })
    }

    pub fn conv_transpose1d(&mut self, y: Var, kernel: Var, stride: usize) -> Var {
        let out = ops::conv_transpose1d(self.value(y), self.value(kernel), stride)
            .expect("conv_transpose1d shapes");
        let req = self.requires(y) || self.requires(kernel);
        self.push(out, req, Op::ConvT1d { y: y.0, k: kernel.0, stride })
    }

    /// Batched LSTM over `[N_in, T, E]`.
    pub fn lstm(&mut self, x: Var, w_ih: Var, w_hh: Var, bias: Var, reverse: bool) -> Var {
        let (y, ctx) = ops::lstm_forward(
            self.value(x),
            self.value(w_ih),
            self.value(w_hh),
            self.value(bias),
            reverse,
            true,
        );
        let req = self.requires(x) || self.requires(w_ih) || self.requires(w_hh) || self.requires(bias);
        self.push(
            y,
            req,
            Op::Lstm { x: x.0, w_ih: w_ih.0, w_hh: w_hh.0, b: bias.0, ctx: Box::new(ctx.unwrap()) },
        )
    }

    /// Forward and backward LSTM concatenated on the feature axis.
    pub fn bilstm(&mut self, x: Var, fwd: (Var, Var, Var), bwd: (Var, Var, Var)) -> Var {
        let yf = self.lstm(x, fwd.0, fwd.1, fwd.2, false);
        let yb = self.lstm(x, bwd.0, bwd.1, bwd.2, true);
        self.concat_features(yf, yb)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = ops::linear(self.value(x), self.value(w), self.value(b));
        let req = self.requires(x) || self.requires(w) || self.requires(b);
        self.push(y, req, Op::Linear { x: x.0, w: w.0, b: b.0 })
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let (y, ctx) =
            ops::layer_norm(self.value(x), self.value(gain), self.value(bias), S::from_f64_lossy(eps));
        let req = self.requires(x) || self.requires(gain) || self.requires(bias);
        self.push(y, req, Op::LayerNorm { x: x.0, gain: gain.0, bias: bias.0, ctx })
    }

    pub fn pointwise(&mut self, x: Var, act: Activation) -> Var {
        let y = ops::pointwise(self.value(x), act);
        let req = self.requires(x);
        self.push(y, req, Op::Pointwise { x: x.0, act })
    }

    pub fn prelu(&mut self, x: Var, slope: Var) -> Var {
        assert_eq!(self.value(slope).numel(), 1, "prelu slope is a scalar");
        let y = ops::prelu(self.value(x), self.value(slope).item());
        let req = self.requires(x) || self.requires(slope);
        self.push(y, req, Op::PRelu { x: x.0, a: slope.0 })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let y = self.zip(a, b, |x, y| x + y);
        let req = self.requires(a) || self.requires(b);
        self.push(y, req, Op::Add { a: a.0, b: b.0 })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let y = self.zip(a, b, |x, y| x - y);
        let req = self.requires(a) || self.requires(b);
        self.push(y, req, Op::Sub { a: a.0, b: b.0 })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let y = self.zip(a, b, |x, y| x * y);
        let req = self.requires(a) || self.requires(b);
        self.push(y, req, Op::Mul { a: a.0, b: b.0 })
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let c = S::from_f64_lossy(c);
        let y = self.value(x).map(|v| v * c);
        let req = self.requires(x);
        self.push(y, req, Op::Scale { x: x.0, c })
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        let y = self.value(x).reshape(shape);
        let req = self.requires(x);
        self.push(y, req, Op::Reshape { x: x.0 })
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Var {
        let y = self.value(x).permute(perm);
        let req = self.requires(x);
        self.push(y, req, Op::Permute { x: x.0, perm: perm.to_vec() })
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Var {
        let y = narrow_tensor(self.value(x), axis, start, len);
        let req = self.requires(x);
        self.push(y, req, Op::Narrow { x: x.0, axis, start })
    }

    pub fn concat_features(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(&ta.shape()[1..], &tb.shape()[1..], "concat_features trailing dims");
        let mut shape = ta.shape().to_vec();
        shape[0] += tb.shape()[0];
        let mut data = Vec::with_capacity(ta.numel() + tb.numel());
        data.extend_from_slice(ta.data());
        data.extend_from_slice(tb.data());
        let req = self.requires(a) || self.requires(b);
        self.push(Tensor::from_vec(shape, data), req, Op::ConcatFeat { a: a.0, b: b.0 })
    }

    pub fn segment(&mut self, x: Var, meta: &SegMeta) -> Var {
        let y = segment_with_meta(self.value(x), meta);
        let req = self.requires(x);
        self.push(y, req, Op::Segment { x: x.0, meta: meta.clone() })
    }

    pub fn merge(&mut self, x: Var, meta: &SegMeta) -> Var {
        let y = merge_with_meta(self.value(x), meta);
        let req = self.requires(x);
        self.push(y, req, Op::Merge { x: x.0, meta: meta.clone() })
    }

    /// Sum of all elements as a scalar node.
    pub fn sum(&mut self, x: Var) -> Var {
        let total: S = self.value(x).data().iter().copied().sum();
        let req = self.requires(x);
        self.push(Tensor::scalar(total), req, Op::Sum { x: x.0 })
    }

    /// Scale-dependent SDR of `est` against a fixed reference, in dB.
    /// Produces a scalar node; the gradient flows to `est` only.
    pub fn sd_sdr(&mut self, est: Var, reference: Tensor<S>) -> Var {
        assert_eq!(self.value(est).numel(), reference.numel(), "sd_sdr length mismatch");
        let parts = sd_sdr_parts(self.value(est).data(), reference.data());
        let y = Tensor::scalar(S::from_f64_lossy(parts.value_db));
        let req = self.requires(est);
        self.push(y, req, Op::SdSdr { est: est.0, reference, parts })
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(S, S) -> S) -> Tensor<S> {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "elementwise shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(ta.shape().to_vec(), data)
    }

    /// Reverse accumulation from a scalar root.
    pub fn backward(&mut self, root: Var) {
        assert_eq!(self.nodes[root.0].value.numel(), 1, "backward root must be scalar");
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[root.0] = Some(Tensor::scalar(S::one()));

        for idx in (0..self.nodes.len()).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(gy) = self.grads[idx].take() else { continue };
            self.backprop_node(idx, &gy);
            self.grads[idx] = Some(gy);
        }
    }

    fn acc(&mut self, parent: usize, delta: Tensor<S>) {
        if !self.nodes[parent].requires_grad {
            return;
        }
        match &mut self.grads[parent] {
            Some(g) => {
                debug_assert_eq!(g.shape(), delta.shape());
                for (slot, &d) in g.data_mut().iter_mut().zip(delta.data()) {
                    *slot += d;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn backprop_node(&mut self, idx: usize, gy: &Tensor<S>) {
        // Ops are matched by value through a raw pointer dance-free clone of
        // the lightweight fields; tensor-heavy contexts are borrowed.
        match &self.nodes[idx].op {
            Op::Leaf => {}
            &Op::Conv1d { x, k, stride } => {
                let (dx, dk) = ops::conv1d_backward(
                    gy,
                    &self.nodes[x].value,
                    &self.nodes[k].value,
                    stride,
                );
                self.acc(x, dx);
                self.acc(k, dk);
            }
            &Op::ConvT1d { y, k, stride } => {
                let (dy, dk) = ops::conv_transpose1d_backward(
                    gy,
                    &self.nodes[y].value,
                    &self.nodes[k].value,
                    stride,
                );
                self.acc(y, dy);
                self.acc(k, dk);
            }
            Op::Lstm { x, w_ih, w_hh, b, ctx } => {
                let (x, w_ih, w_hh, b) = (*x, *w_ih, *w_hh, *b);
                let (dx, dwih, dwhh, db) = ops::lstm_backward(
                    gy,
                    &self.nodes[x].value,
                    &self.nodes[idx].value,
                    &self.nodes[w_ih].value,
                    &self.nodes[w_hh].value,
                    ctx,
                );
                self.acc(x, dx);
                self.acc(w_ih, dwih);
                self.acc(w_hh, dwhh);
                self.acc(b, db);
            }
            &Op::Linear { x, w, b } => {
                let (dx, dw, db) =
                    ops::linear_backward(gy, &self.nodes[x].value, &self.nodes[w].value);
                self.acc(x, dx);
                self.acc(w, dw);
                self.acc(b, db);
            }
            Op::LayerNorm { x, gain, bias, ctx } => {
                let (x, gain, bias) = (*x, *gain, *bias);
                let (dx, dg, db) =
                    ops::layer_norm_backward(gy, &self.nodes[x].value, &self.nodes[gain].value, ctx);
                self.acc(x, dx);
                self.acc(gain, dg);
                self.acc(bias, db);
            }
            &Op::Pointwise { x, act } => {
                let dx = ops::pointwise_backward(gy, &self.nodes[idx].value, act);
                self.acc(x, dx);
            }
            &Op::PRelu { x, a } => {
                let slope = self.nodes[a].value.item();
                let (dx, da) = ops::prelu_backward(gy, &self.nodes[x].value, slope);
                self.acc(x, dx);
                self.acc(a, Tensor::scalar(da));
            }
            &Op::Add { a, b } => {
                self.acc(a, gy.clone());
                self.acc(b, gy.clone());
            }
            &Op::Sub { a, b } => {
                self.acc(a, gy.clone());
                self.acc(b, gy.map(|v| -v));
            }
            &Op::Mul { a, b } => {
                let da = mul_elem(gy, &self.nodes[b].value);
                let db = mul_elem(gy, &self.nodes[a].value);
                self.acc(a, da);
                self.acc(b, db);
            }
            &Op::Scale { x, c } => {
                self.acc(x, gy.map(|v| v * c));
            }
            &Op::Reshape { x } => {
                let shape = self.nodes[x].value.shape().to_vec();
                self.acc(x, gy.reshape(shape));
            }
            Op::Permute { x, perm } => {
                let (x, inv) = (*x, invert_perm(perm));
                self.acc(x, gy.permute(&inv));
            }
            &Op::Narrow { x, axis, start } => {
                let dx = narrow_backward(gy, self.nodes[x].value.shape(), axis, start);
                self.acc(x, dx);
            }
            &Op::ConcatFeat { a, b } => {
                let na = self.nodes[a].value.shape()[0];
                let total = self.nodes[idx].value.shape()[0];
                let da = narrow_tensor(gy, 0, 0, na);
                let db = narrow_tensor(gy, 0, na, total - na);
                self.acc(a, da);
                self.acc(b, db);
            }
            Op::Segment { x, meta } => {
                let x = *x;
                let dx = segment_adjoint(gy, meta);
                self.acc(x, dx);
            }
            Op::Merge { x, meta } => {
                let x = *x;
                let dx = merge_adjoint(gy, meta);
                self.acc(x, dx);
            }
            &Op::Sum { x } => {
                let g = gy.item();
                let shape = self.nodes[x].value.shape().to_vec();
                self.acc(x, Tensor::full(shape, g));
            }
            Op::SdSdr { est, reference, parts } => {
                let est = *est;
                let g = gy.item().to_f64_lossless();
                let de = sd_sdr_backward(&self.nodes[est].value, reference, parts, g);
                self.acc(est, de);
            }
        }
    }
}

fn mul_elem<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    Tensor::from_vec(a.shape().to_vec(), data)
}

fn narrow_tensor<S: Scalar>(x: &Tensor<S>, axis: usize, start: usize, len: usize) -> Tensor<S> {
    let shape = x.shape();
    assert!(axis < shape.len() && start + len <= shape[axis], "narrow out of range");
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out_shape = shape.to_vec();
    out_shape[axis] = len;
    let mut out = Vec::with_capacity(outer * len * inner);
    let src = x.data();
    let src_block = shape[axis] * inner;
    for o in 0..outer {
        let base = o * src_block + start * inner;
        out.extend_from_slice(&src[base..base + len * inner]);
    }
    Tensor::from_vec(out_shape, out)
}

fn narrow_backward<S: Scalar>(
    gy: &Tensor<S>,
    full_shape: &[usize],
    axis: usize,
    start: usize,
) -> Tensor<S> {
    let len = gy.shape()[axis];
    let inner: usize = full_shape[axis + 1..].iter().product();
    let outer: usize = full_shape[..axis].iter().product();
    let mut out = vec![S::zero(); full_shape.iter().product()];
    let dst_block = full_shape[axis] * inner;
    let src_block = len * inner;
    for o in 0..outer {
        let dst = &mut out[o * dst_block + start * inner..][..src_block];
        dst.copy_from_slice(&gy.data()[o * src_block..(o + 1) * src_block]);
    }
    Tensor::from_vec(full_shape.to_vec(), out)
}

fn sd_sdr_backward<S: Scalar>(
    est: &Tensor<S>,
    reference: &Tensor<S>,
    parts: &SdSdrParts,
    upstream: f64,
) -> Tensor<S> {
    if parts.capped || parts.dot == 0.0 {
        // Inside the floored-denominator cap the score is constant.
        return Tensor::zeros(est.shape().to_vec());
    }
    let scale = upstream * 10.0 / std::f64::consts::LN_10;
    let two_over_p = 2.0 / parts.dot;
    let two_over_den = 2.0 / parts.err_energy;
    let data = est
        .data()
        .iter()
        .zip(reference.data())
        .map(|(&e, &r)| {
            let e = e.to_f64_lossless();
            let r = r.to_f64_lossless();
            S::from_f64_lossy(scale * (two_over_p * r - two_over_den * (e - r)))
        })
        .collect();
    Tensor::from_vec(est.shape().to_vec(), data)
}

/// Result of comparing analytic gradients against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst: String,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

/// Central-difference gradient check in double precision.
///
/// `build` constructs a scalar loss from leaves matching `inputs`; it is
/// re-invoked for every perturbed evaluation (step `h = 1e-5`). The
/// relative error denominator is floored at unit scale, which suits the
/// normalized O(1) inputs the checks use.
pub fn grad_check<F>(inputs: &[(&str, Tensor<f64>)], tolerance: f64, build: F) -> GradCheckReport
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let h = 1e-5;
    let eval = |tensors: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let root = build(&mut tape, &vars);
        tape.value(root).item()
    };

    let mut tape = Tape::new();
    let base: Vec<Tensor<f64>> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let vars: Vec<Var> = base.iter().map(|t| tape.leaf(t.clone())).collect();
    let root = build(&mut tape, &vars);
    tape.backward(root);
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| tape.grad(v)).collect();

    let mut report =
        GradCheckReport { max_rel_err: 0.0, worst: String::from("-"), tolerance };
    for (i, (name, _)) in inputs.iter().enumerate() {
        for j in 0..base[i].numel() {
            let mut plus = base.clone();
            plus[i].data_mut()[j] += h;
            let mut minus = base.clone();
            minus[i].data_mut()[j] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic[i].data()[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = format!("{name}[{j}]: analytic {a}, numeric {numeric}");
            }
        }
    }
    report
}

pub const SDR_FLOOR: f64 = SDR_DENOM_FLOOR;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn add_mul_chain_backward() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::from_vec(vec![2], vec![2.0, 3.0]));
        let b = tape.leaf(Tensor::from_vec(vec![2], vec![5.0, -1.0]));
        let prod = tape.mul(a, b);
        let loss = tape.sum(prod);
        tape.backward(loss);
        assert_eq!(tape.grad(a).data(), &[5.0, -1.0]);
        assert_eq!(tape.grad(b).data(), &[2.0, 3.0]);
    }

    #[test]
    fn sub_backward_negates() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::from_vec(vec![3], vec![1.0, 2.0, 3.0]));
        let b = tape.leaf(Tensor::from_vec(vec![3], vec![0.5, 0.5, 0.5]));
        let d = tape.sub(a, b);
        let loss = tape.sum(d);
        tape.backward(loss);
        assert_eq!(tape.grad(a).data(), &[1.0, 1.0, 1.0]);
        assert_eq!(tape.grad(b).data(), &[-1.0, -1.0, -1.0]);
    }

    #[test]
    fn narrow_and_concat_roundtrip_grads() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(vec![4, 2], (0..8).map(f64::from).collect()));
        let top = tape.narrow(x, 0, 0, 2);
        let bottom = tape.narrow(x, 0, 2, 2);
        let again = tape.concat_features(top, bottom);
        assert_eq!(tape.value(again).data(), tape.value(x).data());
        let loss = tape.sum(again);
        tape.backward(loss);
        assert!(tape.grad(x).data().iter().all(|&g| g == 1.0));
    }

    #[test]
    fn permute_reshape_inverses_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let t = Tensor::<f64>::rand_uniform(vec![3, 4, 5], -1.0, 1.0, &mut rng);
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t.clone());
        let p = tape.permute(x, &[2, 0, 1]);
        let back = tape.permute(p, &invert_perm(&[2, 0, 1]));
        assert_eq!(tape.value(back).data(), t.data());
        let r = tape.reshape(x, vec![12, 5]);
        let rb = tape.reshape(r, vec![3, 4, 5]);
        assert_eq!(tape.value(rb).data(), t.data());
    }

    #[test]
    fn scale_is_linear_in_grad() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(vec![2], vec![1.0, -4.0]));
        let y = tape.scale(x, -2.5);
        let loss = tape.sum(y);
        tape.backward(loss);
        assert_eq!(tape.grad(x).data(), &[-2.5, -2.5]);
    }

    #[test]
    fn constant_nodes_get_no_grad() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(vec![2], vec![1.0, 2.0]));
        let c = tape.constant(Tensor::from_vec(vec![2], vec![3.0, 4.0]));
        let y = tape.mul(x, c);
        let loss = tape.sum(y);
        tape.backward(loss);
        assert_eq!(tape.grad(x).data(), &[3.0, 4.0]);
        assert_eq!(tape.grad(c).data(), &[0.0, 0.0]);
    }
}
