//! 1-D convolution and its exact adjoint.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{axpy, dot};

/// `x`: `[C_in, T_in]`, `kernel`: `[C_out, C_in, W]`.
///
/// Without padding `L_out = (T_in - W) / stride + 1`; with `pad_end` the
/// input is zero-extended on the right so `L_out = ceil(T_in / stride)`.
pub fn conv1d<S: Scalar>(
    x: &Tensor<S>,
    kernel: &Tensor<S>,
    stride: usize,
    pad_end: bool,
) -> Result<Tensor<S>> {
    let (c_in, t_in) = (x.shape()[0], x.shape()[1]);
    let (c_out, kc, w) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
    if stride == 0 {
        return Err(Error::InvalidArg("conv1d: stride must be positive".into()));
    }
    if w < stride {
        return Err(Error::InvalidArg(format!(
            "conv1d: kernel width {w} smaller than stride {stride}"
        )));
    }
    if kc != c_in {
        return Err(Error::Shape(format!(
            "conv1d: kernel expects {kc} input channels, input has {c_in}"
        )));
    }
    let l_out = if pad_end {
        t_in.div_ceil(stride)
    } else {
        if w > t_in {
            return Err(Error::InvalidArg(format!(
                "conv1d: kernel width {w} wider than unpadded input {t_in}"
            )));
        }
        (t_in - w) / stride + 1
    };

    let xd = x.data();
    let kd = kernel.data();
    let mut y = vec![S::zero(); c_out * l_out];
    for c in 0..c_out {
        let yrow = &mut y[c * l_out..(c + 1) * l_out];
        for i in 0..c_in {
            let xrow = &xd[i * t_in..(i + 1) * t_in];
            let krow = &kd[(c * c_in + i) * w..(c * c_in + i + 1) * w];
            for (l, out) in yrow.iter_mut().enumerate() {
                let start = l * stride;
                let avail = t_in.saturating_sub(start).min(w);
                *out += dot(&krow[..avail], &xrow[start..start + avail]);
            }
        }
    }
    Ok(Tensor::from_vec(vec![c_out, l_out], y))
}

/// Returns (dX, dKernel).
pub fn conv1d_backward<S: Scalar>(
    dy: &Tensor<S>,
    x: &Tensor<S>,
    kernel: &Tensor<S>,
    stride: usize,
) -> (Tensor<S>, Tensor<S>) {
    let (c_in, t_in) = (x.shape()[0], x.shape()[1]);
    let (c_out, _, w) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
    let l_out = dy.shape()[1];
    let xd = x.data();
    let kd = kernel.data();
    let dyd = dy.data();

    let mut dx = vec![S::zero(); x.numel()];
    let mut dk = vec![S::zero(); kernel.numel()];
    for c in 0..c_out {
        let dyrow = &dyd[c * l_out..(c + 1) * l_out];
        for i in 0..c_in {
            let xrow = &xd[i * t_in..(i + 1) * t_in];
            let krow = &kd[(c * c_in + i) * w..(c * c_in + i + 1) * w];
            let dkrow = &mut dk[(c * c_in + i) * w..(c * c_in + i + 1) * w];
            let dxrow = &mut dx[i * t_in..(i + 1) * t_in];
            for l in 0..l_out {
                let g = dyrow[l];
                if g == S::zero() {
                    continue;
                }
                let start = l * stride;
                let avail = t_in.saturating_sub(start).min(w);
                axpy(&mut dkrow[..avail], g, &xrow[start..start + avail]);
                axpy(&mut dxrow[start..start + avail], g, &krow[..avail]);
            }
        }
    }
    (
        Tensor::from_vec(x.shape().to_vec(), dx),
        Tensor::from_vec(kernel.shape().to_vec(), dk),
    )
}

/// Exact linear adjoint of unpadded [`conv1d`].
///
/// `y`: `[C_out, L]`, `kernel`: `[C_out, C_in, W]` -> `[C_in, (L-1)*stride + W]`.
pub fn conv_transpose1d<S: Scalar>(
    y: &Tensor<S>,
    kernel: &Tensor<S>,
    stride: usize,
) -> Result<Tensor<S>> {
    let (c_out, l) = (y.shape()[0], y.shape()[1]);
    let (kc_out, c_in, w) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
    if stride == 0 {
        return Err(Error::InvalidArg("conv_transpose1d: stride must be positive".into()));
    }
    if kc_out != c_out {
        return Err(Error::Shape(format!(
            "conv_transpose1d: kernel expects {kc_out} channels, input has {c_out}"
        )));
    }
    let t_out = (l - 1) * stride + w;
    let yd = y.data();
    let kd = kernel.data();
    let mut out = vec![S::zero(); c_in * t_out];
    for c in 0..c_out {
        let yrow = &yd[c * l..(c + 1) * l];
        for i in 0..c_in {
            let krow = &kd[(c * c_in + i) * w..(c * c_in + i + 1) * w];
            let orow = &mut out[i * t_out..(i + 1) * t_out];
            for (l_idx, &v) in yrow.iter().enumerate() {
                if v == S::zero() {
                    continue;
                }
                axpy(&mut orow[l_idx * stride..l_idx * stride + w], v, krow);
            }
        }
    }
    Ok(Tensor::from_vec(vec![c_in, t_out], out))
}

/// Returns (dY, dKernel).
pub fn conv_transpose1d_backward<S: Scalar>(
    dout: &Tensor<S>,
    y: &Tensor<S>,
    kernel: &Tensor<S>,
    stride: usize,
) -> (Tensor<S>, Tensor<S>) {
    let (c_out, l) = (y.shape()[0], y.shape()[1]);
    let (_, c_in, w) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
    let t_out = dout.shape()[1];
    let dod = dout.data();
    let yd = y.data();
    let kd = kernel.data();

    let mut dy = vec![S::zero(); y.numel()];
    let mut dk = vec![S::zero(); kernel.numel()];
    for c in 0..c_out {
        let yrow = &yd[c * l..(c + 1) * l];
        let dyrow = &mut dy[c * l..(c + 1) * l];
        for i in 0..c_in {
            let krow = &kd[(c * c_in + i) * w..(c * c_in + i + 1) * w];
            let dkrow = &mut dk[(c * c_in + i) * w..(c * c_in + i + 1) * w];
            let dorow = &dod[i * t_out..(i + 1) * t_out];
            for l_idx in 0..l {
                let window = &dorow[l_idx * stride..l_idx * stride + w];
                dyrow[l_idx] += dot(krow, window);
                axpy(dkrow, yrow[l_idx], window);
            }
        }
    }
    (
        Tensor::from_vec(y.shape().to_vec(), dy),
        Tensor::from_vec(kernel.shape().to_vec(), dk),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conv1d_hand_sum() {
        let x = Tensor::<f64>::from_vec(vec![1, 4], vec![1., 2., 3., 4.]);
        let k = Tensor::from_vec(vec![1, 1, 2], vec![1., 1.]);
        let y = conv1d(&x, &k, 1, false).unwrap();
        assert_eq!(y.shape(), &[1, 3]);
        assert_eq!(y.data(), &[3., 5., 7.]);
    }

    #[test]
    fn conv1d_unit_impulse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::<f64>::rand_uniform(vec![1, 17], -1.0, 1.0, &mut rng);
        let k = Tensor::from_vec(vec![1, 1, 1], vec![1.0]);
        let y = conv1d(&x, &k, 1, false).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv1d_padded_length_matches_ceil() {
        let x = Tensor::<f32>::zeros(vec![1, 240_000]);
        let k = Tensor::zeros(vec![4, 1, 16]);
        let y = conv1d(&x, &k, 8, true).unwrap();
        assert_eq!(y.shape()[1], 30_000);
    }

    #[test]
    fn conv1d_rejects_bad_args() {
        let x = Tensor::<f32>::zeros(vec![1, 4]);
        let k = Tensor::zeros(vec![1, 1, 8]);
        assert!(conv1d(&x, &k, 2, false).is_err());
        let k2 = Tensor::zeros(vec![1, 1, 2]);
        assert!(conv1d(&x, &k2, 0, false).is_err());
    }

    #[test]
    fn transpose_is_zero_interleaved_upsampling_for_impulse() {
        let y = Tensor::<f64>::from_vec(vec![1, 3], vec![1., 2., 3.]);
        let k = Tensor::from_vec(vec![1, 1, 1], vec![1.0]);
        let up = conv_transpose1d(&y, &k, 2).unwrap();
        assert_eq!(up.shape(), &[1, 5]);
        assert_eq!(up.data(), &[1., 0., 2., 0., 3.]);
    }

    #[test]
    fn transpose_output_length() {
        let y = Tensor::<f32>::zeros(vec![2, 30_000]);
        let k = Tensor::zeros(vec![2, 1, 16]);
        let out = conv_transpose1d(&y, &k, 8).unwrap();
        assert_eq!(out.shape()[1], 240_008);
    }

    /// Builds the dense matrix of unpadded conv1d by probing with unit
    /// vectors, then checks <conv1d(x), y> == <x, conv_transpose1d(y)> and
    /// that conv_transpose1d equals the explicit transposed-matrix product.
    #[test]
    fn transpose_is_exact_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (c_in, c_out, w, stride, t_in) = (2, 3, 4, 2, 64);
        let l_out = (t_in - w) / stride + 1;
        let k = Tensor::<f64>::rand_uniform(vec![c_out, c_in, w], -1.0, 1.0, &mut rng);

        // Dense matrix A with A[row, col] from probing unit inputs.
        let n_in = c_in * t_in;
        let n_out = c_out * l_out;
        let mut dense = vec![0.0f64; n_out * n_in];
        for col in 0..n_in {
            let mut e = vec![0.0; n_in];
            e[col] = 1.0;
            let out = conv1d(&Tensor::from_vec(vec![c_in, t_in], e), &k, stride, false).unwrap();
            for (row, &v) in out.data().iter().enumerate() {
                dense[row * n_in + col] = v;
            }
        }

        for trial in 0..10 {
            let x = Tensor::<f64>::rand_uniform(vec![c_in, t_in], -1.0, 1.0, &mut rng);
            let y = Tensor::<f64>::rand_uniform(vec![c_out, l_out], -1.0, 1.0, &mut rng);

            let fwd = conv1d(&x, &k, stride, false).unwrap();
            let adj = conv_transpose1d(&y, &k, stride).unwrap();
            let t_adj = adj.shape()[1];

            // A^T y, laid out per channel and zero past the transpose's reach.
            let mut at_y = vec![0.0f64; n_in];
            for (col, slot) in at_y.iter_mut().enumerate() {
                *slot = (0..n_out).map(|row| dense[row * n_in + col] * y.data()[row]).sum();
            }
            for i in 0..c_in {
                for t in 0..t_in {
                    let from_adj = if t < t_adj { adj.data()[i * t_adj + t] } else { 0.0 };
                    assert!(
                        (from_adj - at_y[i * t_in + t]).abs() < 1e-10,
                        "transpose disagrees with dense A^T at ({i},{t})"
                    );
                }
            }

            let lhs: f64 = fwd.data().iter().zip(y.data()).map(|(&a, &b)| a * b).sum();
            let rhs: f64 = x.data().iter().zip(at_y.iter()).map(|(&a, &b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10, "trial {trial}: {lhs} vs {rhs}");
        }
    }
}
