//! Dense row-major tensor value type.
//!
//! Data is reference-counted and immutable once an operation has produced it;
//! reshapes share storage, permutes copy. The feature axis always comes
//! first, the last index varies fastest.

use std::sync::Arc;

use rand::Rng;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Scalar> {
    shape: Vec<usize>,
    data: Arc<Vec<S>>,
}

impl<S: Scalar> Tensor<S> {
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<S>) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        assert_eq!(
            data.len(),
            numel,
            "data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor { shape, data: Arc::new(data) }
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        Tensor { shape, data: Arc::new(vec![S::zero(); numel]) }
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: S) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        Tensor { shape, data: Arc::new(vec![value; numel]) }
    }

    pub fn scalar(value: S) -> Self {
        Tensor::from_vec(vec![1], vec![value])
    }

    /// Uniform values in `[lo, hi)`.
    pub fn rand_uniform(shape: impl Into<Vec<usize>>, lo: f64, hi: f64, rng: &mut impl Rng) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| S::from_f64_lossy(rng.gen_range(lo..hi)))
            .collect();
        Tensor { shape, data: Arc::new(data) }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    /// Mutable access; clones the buffer if it is shared.
    pub fn data_mut(&mut self) -> &mut [S] {
        Arc::make_mut(&mut self.data)
    }

    pub fn item(&self) -> S {
        assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    /// Same storage, new shape. Element count must match.
    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        assert_eq!(numel, self.numel(), "reshape {:?} -> {:?}", self.shape, shape);
        Tensor { shape, data: Arc::clone(&self.data) }
    }

    /// Axis permutation; materializes a contiguous copy in the new order.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let nd = self.shape.len();
        assert_eq!(perm.len(), nd, "permute arity");
        let mut seen = vec![false; nd];
        for &p in perm {
            assert!(p < nd && !seen[p], "permute {:?} is not a permutation", perm);
            seen[p] = true;
        }
        let in_strides = row_major_strides(&self.shape);
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        // Stride of each output axis within the input buffer.
        let mapped_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();

        let numel = self.numel();
        let mut out = vec![S::zero(); numel];
        let src = self.data.as_slice();
        // Walk output row-major, carrying a multi-index and the matching
        // input offset.
        let mut idx = vec![0usize; nd];
        let mut src_off = 0usize;
        for slot in out.iter_mut() {
            *slot = src[src_off];
            for ax in (0..nd).rev() {
                idx[ax] += 1;
                src_off += mapped_strides[ax];
                if idx[ax] < out_shape[ax] {
                    break;
                }
                src_off -= mapped_strides[ax] * out_shape[ax];
                idx[ax] = 0;
            }
        }
        Tensor { shape: out_shape, data: Arc::new(out) }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Tensor { shape: self.shape.clone(), data: Arc::new(data) }
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        let data = self.data.iter().map(|&v| T::from_f64_lossy(v.to_f64_lossless())).collect();
        Tensor::from_vec(self.shape.clone(), data)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| (a.to_f64_lossless() - b.to_f64_lossless()).abs())
            .fold(0.0, f64::max)
    }
}

pub fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for ax in (0..shape.len().saturating_sub(1)).rev() {
        strides[ax] = strides[ax + 1] * shape[ax + 1];
    }
    strides
}

/// Inverse of an axis permutation.
pub fn invert_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reshape_preserves_order_and_count() {
        let t = Tensor::<f32>::from_vec(vec![2, 3], (0..6).map(|v| v as f32).collect());
        let r = t.reshape(vec![3, 2]);
        assert_eq!(r.shape(), &[3, 2]);
        assert_eq!(r.data(), t.data());
        let back = r.reshape(vec![2, 3]);
        assert_eq!(back, t);
    }

    #[test]
    #[should_panic]
    fn reshape_rejects_wrong_count() {
        let t = Tensor::<f32>::zeros(vec![2, 3]);
        let _ = t.reshape(vec![4, 2]);
    }

    #[test]
    fn permute_roundtrip_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let t = Tensor::<f64>::rand_uniform(vec![2, 3, 4, 5], -1.0, 1.0, &mut rng);
        let perm = [2, 0, 3, 1];
        let p = t.permute(&perm);
        assert_eq!(p.shape(), &[4, 2, 5, 3]);
        let back = p.permute(&invert_perm(&perm));
        assert_eq!(back, t);
    }

    #[test]
    fn permute_matches_manual_index_map() {
        let t = Tensor::<f32>::from_vec(vec![2, 3, 4], (0..24).map(|v| v as f32).collect());
        let p = t.permute(&[1, 2, 0]);
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    let orig = t.data()[(i * 3 + j) * 4 + k];
                    let moved = p.data()[(j * 4 + k) * 2 + i];
                    assert_eq!(orig, moved);
                }
            }
        }
    }

    use rand::SeedableRng;
}
