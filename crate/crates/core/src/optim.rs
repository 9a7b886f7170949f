//! Adam optimizer over a [`ParamStore`].

use crate::param::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct AdamState<S: Scalar> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    /// First/second moments aligned with the store's name order.
    m: Vec<Tensor<S>>,
    v: Vec<Tensor<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(store: &ParamStore<S>, lr: f64) -> Self {
        let m = store.iter().map(|(_, p)| Tensor::zeros(p.value.shape().to_vec())).collect();
        let v = store.iter().map(|(_, p)| Tensor::zeros(p.value.shape().to_vec())).collect();
        AdamState { lr, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, step: 0, m, v }
    }
}

/// One bias-corrected Adam update. Gradients are zeroed afterwards.
pub fn adam_step<S: Scalar>(store: &mut ParamStore<S>, state: &mut AdamState<S>) {
    state.step += 1;
    let b1 = S::from_f64_lossy(state.beta1);
    let b2 = S::from_f64_lossy(state.beta2);
    let one = S::one();
    let eps = S::from_f64_lossy(state.epsilon);
    let corr1 = S::from_f64_lossy(state.lr / (1.0 - state.beta1.powi(state.step as i32)));
    let inv_corr2 = S::from_f64_lossy(1.0 / (1.0 - state.beta2.powi(state.step as i32)));

    let names: Vec<String> = store.names().map(str::to_owned).collect();
    for (i, name) in names.iter().enumerate() {
        let grad = store.grad(name).clone();
        let mut value = store.value(name).clone();
        let vd = value.data_mut();
        let md = state.m[i].data_mut();
        let sd = state.v[i].data_mut();
        for (((p, &g), m), v) in vd.iter_mut().zip(grad.data()).zip(md.iter_mut()).zip(sd.iter_mut())
        {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let vhat = *v * inv_corr2;
            *p = *p - corr1 * *m / (vhat.sqrt() + eps);
        }
        store.set_value(name, value);
    }
    store.zero_grads();
}
