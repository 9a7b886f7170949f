//! Named trainable parameters with gradient slots.

use std::collections::BTreeMap;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Param<S: Scalar> {
    pub value: Tensor<S>,
    pub grad: Tensor<S>,
}

/// Ordered map from hierarchical parameter name (e.g.
/// `block0/sub1/rnn_fwd/w_ih`) to value and gradient.
///
/// Iteration is in lexicographic name order, so it is deterministic and
/// independent of insertion timing for a given model configuration.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<S: Scalar> {
    entries: BTreeMap<String, Param<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore { entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<S>) {
        let name = name.into();
        let grad = Tensor::zeros(value.shape().to_vec());
        let prev = self.entries.insert(name.clone(), Param { value, grad });
        assert!(prev.is_none(), "duplicate parameter name {name}");
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn value(&self, name: &str) -> &Tensor<S> {
        &self.entries.get(name).unwrap_or_else(|| panic!("unknown parameter {name}")).value
    }

    pub fn set_value(&mut self, name: &str, value: Tensor<S>) {
        let p = self.entries.get_mut(name).unwrap_or_else(|| panic!("unknown parameter {name}"));
        assert_eq!(p.value.shape(), value.shape(), "set_value shape for {name}");
        p.value = value;
    }

    pub fn grad(&self, name: &str) -> &Tensor<S> {
        &self.entries.get(name).unwrap_or_else(|| panic!("unknown parameter {name}")).grad
    }

    pub fn accumulate_grad(&mut self, name: &str, g: &Tensor<S>) {
        let p = self.entries.get_mut(name).unwrap_or_else(|| panic!("unknown parameter {name}"));
        assert_eq!(p.grad.shape(), g.shape(), "gradient shape for {name}");
        for (slot, &add) in p.grad.data_mut().iter_mut().zip(g.data()) {
            *slot += add;
        }
    }

    pub fn zero_grads(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.data_mut().fill(S::zero());
        }
    }

    pub fn scale_grads(&mut self, factor: S) {
        for p in self.entries.values_mut() {
            for g in p.grad.data_mut() {
                *g *= factor;
            }
        }
    }

    pub fn global_grad_norm(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|p| p.grad.data().iter())
            .map(|&g| {
                let g = g.to_f64_lossless();
                g * g
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Scales all gradients so the global L2 norm is at most `max_norm`.
    /// Returns the pre-clip norm.
    pub fn clip_global_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_grad_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale_grads(S::from_f64_lossy(max_norm / norm));
        }
        norm
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<S>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of trainable scalars.
    pub fn total_params(&self) -> usize {
        self.entries.values().map(|p| p.value.numel()).sum()
    }

    pub fn any_non_finite(&self) -> bool {
        self.entries.values().any(|p| p.value.data().iter().any(|v| !v.is_finite()))
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        let mut out = ParamStore::new();
        for (name, p) in self.iter() {
            out.insert(name, p.value.cast::<T>());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iteration_order_is_name_sorted() {
        let mut store = ParamStore::<f32>::new();
        store.insert("b/w", Tensor::zeros(vec![2]));
        store.insert("a/w", Tensor::zeros(vec![3]));
        store.insert("a/b", Tensor::zeros(vec![1]));
        let names: Vec<&str> = store.names().collect();
        assert_eq!(names, vec!["a/b", "a/w", "b/w"]);
        assert_eq!(store.total_params(), 6);
    }

    #[test]
    fn grad_shapes_track_values() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::zeros(vec![2, 3]));
        assert_eq!(store.grad("w").shape(), &[2, 3]);
        store.accumulate_grad("w", &Tensor::full(vec![2, 3], 1.5));
        store.accumulate_grad("w", &Tensor::full(vec![2, 3], 0.5));
        assert!(store.grad("w").data().iter().all(|&g| g == 2.0));
        store.zero_grads();
        assert!(store.grad("w").data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn clip_caps_global_norm() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::zeros(vec![4]));
        store.accumulate_grad("w", &Tensor::full(vec![4], 3.0));
        let pre = store.clip_global_grad_norm(1.0);
        assert!((pre - 6.0).abs() < 1e-12);
        assert!((store.global_grad_norm() - 1.0).abs() < 1e-9);
    }
}
