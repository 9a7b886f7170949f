//! Forward and backward kernels for the differentiable primitives.
//!
//! Kernels are plain functions over [`Tensor`] values; the tape composes
//! them into a reverse-mode graph. Inference calls the forward kernels
//! directly so intermediates can be dropped as they go out of scope.

pub mod conv;
pub mod lstm;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use conv::{conv1d, conv1d_backward, conv_transpose1d, conv_transpose1d_backward};
pub use lstm::{lstm_backward, lstm_forward, LstmCtx};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

pub fn pointwise<S: Scalar>(x: &Tensor<S>, act: Activation) -> Tensor<S> {
    match act {
        Activation::Relu => x.map(|v| if v > S::zero() { v } else { S::zero() }),
        Activation::Sigmoid => x.map(sigmoid),
        Activation::Tanh => x.map(|v| v.tanh()),
    }
}

/// dX from dY and the saved forward output.
pub fn pointwise_backward<S: Scalar>(dy: &Tensor<S>, y: &Tensor<S>, act: Activation) -> Tensor<S> {
    let one = S::one();
    let data = dy
        .data()
        .iter()
        .zip(y.data().iter())
        .map(|(&g, &out)| match act {
            Activation::Relu => {
                if out > S::zero() {
                    g
                } else {
                    S::zero()
                }
            }
            Activation::Sigmoid => g * out * (one - out),
            Activation::Tanh => g * (one - out * out),
        })
        .collect();
    Tensor::from_vec(dy.shape().to_vec(), data)
}

#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// PReLU with a single learned slope for the negative part.
pub fn prelu<S: Scalar>(x: &Tensor<S>, slope: S) -> Tensor<S> {
    x.map(|v| if v > S::zero() { v } else { slope * v })
}

/// Returns (dX, d_slope).
pub fn prelu_backward<S: Scalar>(dy: &Tensor<S>, x: &Tensor<S>, slope: S) -> (Tensor<S>, S) {
    let mut dslope = S::zero();
    let data = dy
        .data()
        .iter()
        .zip(x.data().iter())
        .map(|(&g, &v)| {
            if v > S::zero() {
                g
            } else {
                dslope += g * v;
                g * slope
            }
        })
        .collect();
    (Tensor::from_vec(dy.shape().to_vec(), data), dslope)
}

/// `y = W x + b` applied over the feature axis; every trailing index is an
/// independent position.
///
/// `x`: `[D_in, ...]`, `w`: `[D_out, D_in]`, `b`: `[D_out]` -> `[D_out, ...]`.
pub fn linear<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let d_in = x.shape()[0];
    let positions: usize = x.shape()[1..].iter().product();
    let (d_out, wk) = (w.shape()[0], w.shape()[1]);
    assert_eq!(wk, d_in, "linear: weight shape {:?} vs input {:?}", w.shape(), x.shape());
    assert_eq!(b.shape(), &[d_out], "linear: bias shape");

    let mut out_shape = x.shape().to_vec();
    out_shape[0] = d_out;
    let mut y = vec![S::zero(); d_out * positions];
    let xd = x.data();
    let wd = w.data();
    for (d, row) in y.chunks_exact_mut(positions).enumerate() {
        row.fill(b.data()[d]);
        for k in 0..d_in {
            axpy(row, wd[d * d_in + k], &xd[k * positions..(k + 1) * positions]);
        }
    }
    Tensor::from_vec(out_shape, y)
}

/// Returns (dX, dW, dB).
pub fn linear_backward<S: Scalar>(
    dy: &Tensor<S>,
    x: &Tensor<S>,
    w: &Tensor<S>,
) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
    let d_in = x.shape()[0];
    let positions: usize = x.shape()[1..].iter().product();
    let d_out = w.shape()[0];
    let dyd = dy.data();
    let xd = x.data();
    let wd = w.data();

    let mut dx = vec![S::zero(); x.numel()];
    for k in 0..d_in {
        let row = &mut dx[k * positions..(k + 1) * positions];
        for d in 0..d_out {
            axpy(row, wd[d * d_in + k], &dyd[d * positions..(d + 1) * positions]);
        }
    }

    let mut dw = vec![S::zero(); d_out * d_in];
    let mut db = vec![S::zero(); d_out];
    for d in 0..d_out {
        let g = &dyd[d * positions..(d + 1) * positions];
        db[d] = g.iter().copied().sum();
        for k in 0..d_in {
            dw[d * d_in + k] = dot(g, &xd[k * positions..(k + 1) * positions]);
        }
    }

    (
        Tensor::from_vec(x.shape().to_vec(), dx),
        Tensor::from_vec(w.shape().to_vec(), dw),
        Tensor::from_vec(vec![d_out], db),
    )
}

/// Per-position statistics saved by the layer-norm forward.
#[derive(Debug, Clone)]
pub struct LayerNormCtx<S> {
    pub mean: Vec<S>,
    pub inv_std: Vec<S>,
}

/// Normalizes over the feature axis (axis 0) independently at every
/// remaining index position: mean 0, population variance 1, then affine
/// gain/bias.
pub fn layer_norm<S: Scalar>(
    x: &Tensor<S>,
    gain: &Tensor<S>,
    bias: &Tensor<S>,
    eps: S,
) -> (Tensor<S>, LayerNormCtx<S>) {
    let n = x.shape()[0];
    let positions: usize = x.shape()[1..].iter().product();
    assert_eq!(gain.shape(), &[n], "layer_norm gain shape");
    assert_eq!(bias.shape(), &[n], "layer_norm bias shape");
    let xd = x.data();

    let inv_n = S::one() / S::from_f64_lossy(n as f64);
    let mut mean = vec![S::zero(); positions];
    for row in xd.chunks_exact(positions) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m *= inv_n;
    }
    let mut var = vec![S::zero(); positions];
    for row in xd.chunks_exact(positions) {
        for ((v, &xv), &m) in var.iter_mut().zip(row).zip(mean.iter()) {
            let d = xv - m;
            *v += d * d;
        }
    }
    let mut inv_std = var;
    for v in inv_std.iter_mut() {
        *v = S::one() / (*v * inv_n + eps).sqrt();
    }

    let mut y = vec![S::zero(); x.numel()];
    for (f, (yrow, xrow)) in y.chunks_exact_mut(positions).zip(xd.chunks_exact(positions)).enumerate() {
        let (g, b) = (gain.data()[f], bias.data()[f]);
        for ((o, &xv), (&m, &is)) in
            yrow.iter_mut().zip(xrow).zip(mean.iter().zip(inv_std.iter()))
        {
            *o = g * (xv - m) * is + b;
        }
    }
    (Tensor::from_vec(x.shape().to_vec(), y), LayerNormCtx { mean, inv_std })
}

/// Returns (dX, dGain, dBias).
pub fn layer_norm_backward<S: Scalar>(
    dy: &Tensor<S>,
    x: &Tensor<S>,
    gain: &Tensor<S>,
    ctx: &LayerNormCtx<S>,
) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
    let n = x.shape()[0];
    let positions: usize = x.shape()[1..].iter().product();
    let xd = x.data();
    let dyd = dy.data();
    let inv_n = S::one() / S::from_f64_lossy(n as f64);

    // Per-position sums over features of dxhat and dxhat*xhat.
    let mut sum_dxhat = vec![S::zero(); positions];
    let mut sum_dxhat_xhat = vec![S::zero(); positions];
    for f in 0..n {
        let g = gain.data()[f];
        let xrow = &xd[f * positions..(f + 1) * positions];
        let dyrow = &dyd[f * positions..(f + 1) * positions];
        for p in 0..positions {
            let xhat = (xrow[p] - ctx.mean[p]) * ctx.inv_std[p];
            let dxhat = dyrow[p] * g;
            sum_dxhat[p] += dxhat;
            sum_dxhat_xhat[p] += dxhat * xhat;
        }
    }

    let mut dx = vec![S::zero(); x.numel()];
    let mut dgain = vec![S::zero(); n];
    let mut dbias = vec![S::zero(); n];
    for f in 0..n {
        let g = gain.data()[f];
        let xrow = &xd[f * positions..(f + 1) * positions];
        let dyrow = &dyd[f * positions..(f + 1) * positions];
        let dxrow = &mut dx[f * positions..(f + 1) * positions];
        let mut dg = S::zero();
        let mut db = S::zero();
        for p in 0..positions {
            let xhat = (xrow[p] - ctx.mean[p]) * ctx.inv_std[p];
            let dxhat = dyrow[p] * g;
            dxrow[p] =
                ctx.inv_std[p] * (dxhat - inv_n * sum_dxhat[p] - xhat * inv_n * sum_dxhat_xhat[p]);
            dg += dyrow[p] * xhat;
            db += dyrow[p];
        }
        dgain[f] = dg;
        dbias[f] = db;
    }
    (
        Tensor::from_vec(x.shape().to_vec(), dx),
        Tensor::from_vec(vec![n], dgain),
        Tensor::from_vec(vec![n], dbias),
    )
}

#[inline]
pub(crate) fn axpy<S: Scalar>(acc: &mut [S], a: S, xs: &[S]) {
    debug_assert_eq!(acc.len(), xs.len());
    for (o, &x) in acc.iter_mut().zip(xs) {
        *o = a.mul_add(x, *o);
    }
}

#[inline]
pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc = x.mul_add(y, acc);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointwise_known_values() {
        let x = Tensor::<f64>::from_vec(vec![3], vec![-1.0, 0.0, 2.0]);
        let y = pointwise(&x, Activation::Relu);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let s = pointwise(&Tensor::scalar(0.0), Activation::Sigmoid);
        assert!((s.item() - 0.5).abs() < 1e-15);
        let p = prelu(&Tensor::from_vec(vec![2], vec![-2.0f64, 3.0]), 0.25);
        assert_eq!(p.data(), &[-0.5, 3.0]);
    }

    #[test]
    fn linear_identity_and_bias() {
        let x = Tensor::<f64>::from_vec(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]);
        let w = Tensor::from_vec(vec![2, 2], vec![1., 0., 0., 1.]);
        let b = Tensor::zeros(vec![2]);
        let y = linear(&x, &w, &b);
        assert_eq!(y.data(), x.data());

        let x0 = Tensor::<f64>::zeros(vec![2, 3]);
        let b = Tensor::from_vec(vec![2], vec![7.0, -1.0]);
        let y = linear(&x0, &w, &b);
        assert_eq!(y.data(), &[7., 7., 7., -1., -1., -1.]);
    }

    #[test]
    fn linear_matches_explicit_loops() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::<f64>::rand_uniform(vec![2, 5], -1.0, 1.0, &mut rng);
        let w = Tensor::<f64>::rand_uniform(vec![3, 2], -1.0, 1.0, &mut rng);
        let b = Tensor::<f64>::rand_uniform(vec![3], -1.0, 1.0, &mut rng);
        let y = linear(&x, &w, &b);
        for d in 0..3 {
            for p in 0..5 {
                let mut acc = b.data()[d];
                for k in 0..2 {
                    acc += w.data()[d * 2 + k] * x.data()[k * 5 + p];
                }
                assert!((y.data()[d * 5 + p] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn layer_norm_constant_input_gives_bias() {
        let x = Tensor::<f64>::full(vec![4, 3], 2.5);
        let gain = Tensor::full(vec![4], 1.3);
        let bias = Tensor::from_vec(vec![4], vec![0.1, 0.2, 0.3, 0.4]);
        let (y, _) = layer_norm(&x, &gain, &bias, 1e-5);
        for f in 0..4 {
            for p in 0..3 {
                assert!((y.data()[f * 3 + p] - bias.data()[f]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn layer_norm_two_point_column() {
        let x = Tensor::<f64>::from_vec(vec![2, 1], vec![1.0, 3.0]);
        let gain = Tensor::full(vec![2], 1.0);
        let bias = Tensor::zeros(vec![2]);
        let (y, _) = layer_norm(&x, &gain, &bias, 0.0);
        assert!((y.data()[0] + 1.0).abs() < 1e-12);
        assert!((y.data()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_statistics_on_random_input() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f64>::rand_uniform(vec![16, 40], -2.0, 2.0, &mut rng);
        let gain = Tensor::full(vec![16], 1.0);
        let bias = Tensor::zeros(vec![16]);
        let (y, _) = layer_norm(&x, &gain, &bias, 1e-10);
        for p in 0..40 {
            let col: Vec<f64> = (0..16).map(|f| y.data()[f * 40 + p]).collect();
            let mean = col.iter().sum::<f64>() / 16.0;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-6, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "var {var}");
        }
    }
}
